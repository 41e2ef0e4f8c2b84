#include "carf/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "carf/error.hpp"

namespace carf {

double bitrate_error(double actual_kbps, double target_kbps) {
  if (!(target_kbps > 0)) throw UsageError("bitrate_error: target must be positive");
  return std::abs(actual_kbps - target_kbps) / target_kbps * 100.0;
}

std::vector<CdfPoint> error_cdf(std::span<const double> errors) {
  if (errors.empty()) throw UsageError("error_cdf: empty error list");
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<CdfPoint> cdf;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    cdf.push_back({sorted[i], static_cast<double>(i + 1) / n});
  }
  return cdf;
}

double pct_within(std::span<const double> errors, double threshold) {
  if (errors.empty()) throw UsageError("pct_within: empty error list");
  const auto hits = std::count_if(errors.begin(), errors.end(), [&](double e) { return e <= threshold; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(errors.size());
}

namespace {

struct QualityRange {
  double lo;
  double hi;
};

void check_curve(std::span<const RdPoint> curve, const char* name) {
  if (curve.size() < 4) {
    throw UsageError(std::string("bd_rate: ") + name + " curve needs at least 4 points");
  }
  for (const RdPoint& p : curve) {
    if (!(p.bitrate_kbps > 0) || !std::isfinite(p.quality)) {
      throw UsageError(std::string("bd_rate: ") + name + " curve has a non-positive bitrate");
    }
  }
}

QualityRange quality_range(std::span<const RdPoint> c) {
  auto [lo, hi] = std::minmax_element(c.begin(), c.end(), [](const RdPoint& a, const RdPoint& b) {
    return a.quality < b.quality;
  });
  return {lo->quality, hi->quality};
}

// Integral of the least-squares cubic log10(rate)(quality) over [lo, hi].
double cubic_integral(std::span<const RdPoint> curve, double lo, double hi) {
  const auto m = static_cast<Eigen::Index>(curve.size());
  double center = 0;
  for (const RdPoint& p : curve) center += p.quality;
  center /= static_cast<double>(m);
  const QualityRange r = quality_range(curve);
  const double scale = std::max(r.hi - r.lo, 1e-12) / 2.0;
  Eigen::MatrixXd V(m, 4);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double u = (curve[i].quality - center) / scale;
    V(i, 0) = 1.0;
    V(i, 1) = u;
    V(i, 2) = u * u;
    V(i, 3) = u * u * u;
    y(i) = std::log10(curve[i].bitrate_kbps);
  }
  const Eigen::Vector4d coef = V.colPivHouseholderQr().solve(y);
  auto antiderivative = [&](double x) {
    const double u = (x - center) / scale;
    return scale * (coef(0) * u + coef(1) * u * u / 2 + coef(2) * u * u * u / 3 +
                    coef(3) * u * u * u * u / 4);
  };
  return antiderivative(hi) - antiderivative(lo);
}

// Fritsch-Carlson monotone cubic Hermite interpolation of log10(rate) over
// quality, integrated with 2-point Gauss-Legendre (exact for cubics).
double pchip_integral(std::span<const RdPoint> curve, double lo, double hi) {
  std::vector<RdPoint> pts(curve.begin(), curve.end());
  std::sort(pts.begin(), pts.end(), [](const RdPoint& a, const RdPoint& b) { return a.quality < b.quality; });
  const std::size_t n = pts.size();
  std::vector<double> x(n), y(n), h(n - 1), delta(n - 1), d(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = pts[i].quality;
    y[i] = std::log10(pts[i].bitrate_kbps);
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    if (!(h[i] > 0)) throw UsageError("bd_rate: PCHIP needs strictly increasing quality");
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0) {
      d[i] = 0;
    } else {
      const double w1 = 2 * h[i] + h[i - 1];
      const double w2 = h[i] + 2 * h[i - 1];
      d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0) return 0.0;
    if (d0 * d1 <= 0 && std::abs(s) > std::abs(3 * d0)) return 3 * d0;
    return s;
  };
  d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);

  auto eval = [&](std::size_t k, double xq) {
    const double t = (xq - x[k]) / h[k];
    const double t2 = t * t;
    const double t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y[k] + (t3 - 2 * t2 + t) * h[k] * d[k] +
           (-2 * t3 + 3 * t2) * y[k + 1] + (t3 - t2) * h[k] * d[k + 1];
  };
  const double g = 1.0 / std::sqrt(3.0);
  double total = 0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double a = std::max(lo, x[k]);
    const double b = std::min(hi, x[k + 1]);
    if (b <= a) continue;
    const double mid = (a + b) / 2;
    const double half = (b - a) / 2;
    total += half * (eval(k, mid - half * g) + eval(k, mid + half * g));
  }
  return total;
}

}  // namespace

double bd_rate(std::span<const RdPoint> anchor, std::span<const RdPoint> test, BdRateMethod method) {
  check_curve(anchor, "anchor");
  check_curve(test, "test");
  const QualityRange ra = quality_range(anchor);
  const QualityRange rt = quality_range(test);
  const double lo = std::max(ra.lo, rt.lo);
  const double hi = std::min(ra.hi, rt.hi);
  if (!(hi > lo)) throw UsageError("bd_rate: curves have no overlapping quality range");
  const auto integral = method == BdRateMethod::Cubic ? &cubic_integral : &pchip_integral;
  const double avg_diff = (integral(test, lo, hi) - integral(anchor, lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg_diff) - 1.0) * 100.0;
}

double time_ratio(double t_test, double t_anchor, TimeRatioMode mode) {
  if (!(t_anchor > 0)) throw UsageError("time_ratio: anchor time must be positive");
  if (mode == TimeRatioMode::Ratio) return t_test / t_anchor * 100.0;
  return std::abs(t_test - t_anchor) / t_anchor * 100.0;
}

double geo_mean(std::span<const double> values) {
  if (values.empty()) throw UsageError("geo_mean: empty input");
  // product held as m * 2^e so long series neither overflow nor underflow
  double m = 1;
  long e = 0;
  for (double v : values) {
    if (!(v > 0) || !std::isfinite(v)) throw UsageError("geo_mean: values must be positive");
    int k = 0;
    m = std::frexp(m * v, &k);
    e += k;
  }
  const long n = static_cast<long>(values.size());
  long q = e / n, r = e % n;
  if (r < 0) {
    r += n;
    --q;
  }
  const double inv = 1.0 / static_cast<double>(n);
  return std::ldexp(std::pow(m, inv) * std::pow(2.0, static_cast<double>(r) * inv), static_cast<int>(q));
}

double segment_time_ratio(std::span<const double> t_test, std::span<const double> t_anchor,
                          TimeRatioMode mode) {
  if (t_test.size() != t_anchor.size()) throw UsageError("segment_time_ratio: size mismatch");
  std::vector<double> ratios;
  for (std::size_t i = 0; i < t_test.size(); ++i) ratios.push_back(time_ratio(t_test[i], t_anchor[i], mode));
  return geo_mean(ratios);
}

double fluctuation(std::span<const double> series) {
  if (series.empty()) throw UsageError("fluctuation: empty series");
  const double n = static_cast<double>(series.size());
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / n;
  if (mean == 0.0) throw UsageError("fluctuation: zero mean");
  double ss = 0;
  for (double v : series) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n) / mean;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return out;
}

double to_double(const std::string& s, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("CSV line " + std::to_string(line_no) + ": not a number '" + s + "'");
  }
}

int column(const std::vector<std::string>& header, const std::string& name, bool required) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    if (required) throw DataError("CSV header lacks column '" + name + "'");
    return -1;
  }
  return static_cast<int>(it - header.begin());
}

std::vector<std::string> ordered_metrics(const std::set<std::string>& present) {
  std::vector<std::string> out;
  for (const char* preferred : {"PSNR", "VMAF", "SSIM"}) {
    if (present.count(preferred)) out.emplace_back(preferred);
  }
  for (const std::string& m : present) {
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

}  // namespace

RdCurves read_rd_csv(std::istream& in) {
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line[0] != '#') header = split_csv(line);
  }
  if (header.empty()) throw DataError("RD CSV is empty");
  const int c_rate = column(header, "bitrate_kbps", true);
  const int c_quality = column(header, "quality", true);
  const int c_metric = column(header, "metric_name", true);
  const int c_seq = column(header, "sequence", false);
  RdCurves curves;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() < header.size()) throw DataError("RD CSV line " + std::to_string(line_no) + ": too few columns");
    const std::string seq = c_seq >= 0 ? cells[c_seq] : "all";
    const RdPoint p{to_double(cells[c_rate], line_no), to_double(cells[c_quality], line_no)};
    if (!(p.bitrate_kbps > 0)) throw DataError("RD CSV line " + std::to_string(line_no) + ": bitrate must be positive");
    curves[{seq, cells[c_metric]}].push_back(p);
  }
  for (auto& [key, pts] : curves) {
    std::sort(pts.begin(), pts.end(), [](const RdPoint& a, const RdPoint& b) { return a.bitrate_kbps < b.bitrate_kbps; });
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (pts[i].bitrate_kbps == pts[i - 1].bitrate_kbps) {
        throw DataError("RD curve " + key.first + "/" + key.second + " repeats a bitrate");
      }
    }
  }
  return curves;
}

BdRateTable bd_rate_table(const RdCurves& anchor, const RdCurves& test, BdRateMethod method) {
  BdRateTable table;
  std::set<std::string> metrics;
  std::map<std::string, BdRateRow> rows;
  for (const auto& [key, pts] : anchor) {
    const auto it = test.find(key);
    if (it == test.end()) continue;
    metrics.insert(key.second);
    BdRateRow& row = rows[key.first];
    row.sequence = key.first;
    row.by_metric[key.second] = bd_rate(pts, it->second, method);
  }
  if (rows.empty()) throw DataError("no (sequence, metric) curve appears in both anchor and test");
  table.metrics = ordered_metrics(metrics);
  for (auto& [seq, row] : rows) table.rows.push_back(row);
  for (const std::string& m : table.metrics) {
    double sum = 0;
    int count = 0;
    for (const BdRateRow& r : table.rows) {
      if (auto it = r.by_metric.find(m); it != r.by_metric.end()) {
        sum += it->second;
        ++count;
      }
    }
    if (count) table.overall[m] = sum / count;
  }
  return table;
}

void write_bd_rate_csv(const BdRateTable& table, std::ostream& out) {
  out << "sequence";
  for (const std::string& m : table.metrics) out << ',' << m;
  out << '\n';
  auto write_row = [&](const std::string& name, const std::map<std::string, double>& values) {
    out << name;
    for (const std::string& m : table.metrics) {
      out << ',';
      if (auto it = values.find(m); it != values.end()) out << std::fixed << std::setprecision(4) << it->second;
    }
    out << '\n';
  };
  for (const BdRateRow& r : table.rows) write_row(r.sequence, r.by_metric);
  write_row("Overall", table.overall);
  out.unsetf(std::ios::floatfield);
}

void write_bd_rate_text(const BdRateTable& table, std::ostream& out) {
  std::ostringstream s;
  auto cell = [&](const std::map<std::string, double>& values, const std::string& m) {
    if (auto it = values.find(m); it != values.end()) {
      // Avoid printing "-0.00" for tiny negative values.
      const double v = std::abs(it->second) < 0.005 ? 0.0 : it->second;
      s << std::setw(9) << std::fixed << std::setprecision(2) << v;
    } else {
      s << std::setw(9) << "-";
    }
  };
  s << std::left << std::setw(10) << "Sequence" << std::right;
  for (const std::string& m : table.metrics) s << std::setw(9) << m;
  s << '\n';
  for (const BdRateRow& r : table.rows) {
    s << std::left << std::setw(10) << r.sequence << std::right;
    for (const std::string& m : table.metrics) cell(r.by_metric, m);
    s << '\n';
  }
  s << std::left << std::setw(10) << "Overall" << std::right;
  for (const std::string& m : table.metrics) cell(table.overall, m);
  s << '\n';
  out << s.str();
}

void write_cdf_csv(std::span<const CdfPoint> cdf, std::ostream& out) {
  std::ostringstream s;
  s << "error_pct,cumulative_fraction\n";
  s << std::setprecision(10);
  for (const CdfPoint& p : cdf) s << p.threshold << ',' << p.fraction << '\n';
  out << s.str();
}

std::vector<double> read_error_csv(std::istream& in) {
  std::string line;
  int line_no = 0;
  int col = 0;
  bool have_header = false;
  std::vector<double> errors;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (!have_header) {
      have_header = true;
      col = column(cells, "error_pct", false);
      if (col >= 0) continue;
      col = 0;
    }
    if (static_cast<std::size_t>(col) >= cells.size()) throw DataError("error CSV line " + std::to_string(line_no) + ": missing column");
    errors.push_back(to_double(cells[col], line_no));
  }
  return errors;
}

}  // namespace carf
