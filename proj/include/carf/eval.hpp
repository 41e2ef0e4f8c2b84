#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace carf {

// |actual - target| / target * 100.
double bitrate_error(double actual_kbps, double target_kbps);

struct CdfPoint {
  double threshold = 0;
  double fraction = 0;  // share of errors <= threshold
};

// One point per distinct error value, ascending; ends at 1.0.
std::vector<CdfPoint> error_cdf(std::span<const double> errors);
// Percentage of errors at or below `threshold`.
double pct_within(std::span<const double> errors, double threshold);

struct RdPoint {
  double bitrate_kbps = 0;
  double quality = 0;
};

enum class BdRateMethod {
  Cubic,  // cubic polynomial fit of log10(rate) over quality, integrated exactly
  Pchip,  // piecewise cubic Hermite interpolation, integrated per segment
};

// Average rate difference of `test` against `anchor` at equal quality, in
// percent (negative: test needs less rate). Needs >= 4 points per curve and a
// non-empty overlapping quality range.
double bd_rate(std::span<const RdPoint> anchor, std::span<const RdPoint> test,
               BdRateMethod method = BdRateMethod::Cubic);

enum class TimeRatioMode {
  Ratio,         // t_test / t_anchor * 100
  RelativeDiff,  // |t_test - t_anchor| / t_anchor * 100
};

double time_ratio(double t_test, double t_anchor, TimeRatioMode mode = TimeRatioMode::Ratio);
double geo_mean(std::span<const double> values);
// Geometric mean over rate points of the per-rate time ratio.
double segment_time_ratio(std::span<const double> t_test, std::span<const double> t_anchor,
                          TimeRatioMode mode = TimeRatioMode::Ratio);

// Coefficient of variation: population std / mean.
double fluctuation(std::span<const double> series);

// --- file formats ------------------------------------------------------------

// RD curves CSV: header with at least bitrate_kbps, quality, metric_name and an
// optional sequence column. Returns curves keyed by (sequence, metric), sorted
// by bitrate.
using RdCurves = std::map<std::pair<std::string, std::string>, std::vector<RdPoint>>;
RdCurves read_rd_csv(std::istream& in);

struct BdRateRow {
  std::string sequence;
  std::map<std::string, double> by_metric;
};

struct BdRateTable {
  std::vector<std::string> metrics;
  std::vector<BdRateRow> rows;
  std::map<std::string, double> overall;  // mean over sequences
};

BdRateTable bd_rate_table(const RdCurves& anchor, const RdCurves& test,
                          BdRateMethod method = BdRateMethod::Cubic);
void write_bd_rate_csv(const BdRateTable& table, std::ostream& out);
// Fixed-width text table: a "Sequence" column, one column per metric, and a
// final "Overall" row. Values with two decimals.
void write_bd_rate_text(const BdRateTable& table, std::ostream& out);

void write_cdf_csv(std::span<const CdfPoint> cdf, std::ostream& out);
std::vector<double> read_error_csv(std::istream& in);

}  // namespace carf
