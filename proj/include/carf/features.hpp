#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carf/lookahead.hpp"
#include "carf/media_io.hpp"

namespace carf {

// Bumped whenever the order or definition of the features changes.
inline constexpr int kFeatureVersion = 1;
inline constexpr std::size_t kFeatureCount = 12;

using FeatureVector = std::array<double, kFeatureCount>;

struct GopFeatures {
  double pred_cost_score = 0;  // per-frame prediction cost per MB
  double pixel_sum_y = 0;
  double pixel_sum_u = 0;
  double pixel_sum_v = 0;
  double pixel_sqsum_y = 0;
  double pixel_sqsum_u = 0;
  double pixel_sqsum_v = 0;
  double ac_score = 0;      // AC energy per MB
  double intra_mb_pct = 0;  // intra MBs among P-frame MBs, percent
  double mv_len_mean = 0;   // over predicted P-frame MBs, downsampled pixels
  double source_bitrate = 0;  // kbps
  double fps = 0;

  FeatureVector to_array() const;
  static GopFeatures from_array(const FeatureVector& v);
  static const std::array<std::string_view, kFeatureCount>& names();

  bool operator==(const GopFeatures&) const = default;
};

struct SequenceMeta {
  double source_bitrate_kbps = 0;
  double fps = 0;
};

// Running aggregation over the frames of one GOP; feeding frames one at a time
// gives exactly the same result as aggregate_gop over the whole list.
class GopAccumulator {
 public:
  // `stats` come from the downsampled analysis, `full_res` is the original frame.
  void add(const FrameStats& stats, const Frame& full_res);
  GopFeatures finish(const SequenceMeta& meta) const;
  int frames() const { return frames_; }

 private:
  int frames_ = 0;
  double pred_cost_per_mb_sum_ = 0;
  std::array<double, 3> pixel_sum_{};
  std::array<double, 3> pixel_sqsum_{};
  double ac_energy_ = 0;
  std::int64_t mb_count_ = 0;
  std::int64_t p_intra_mbs_ = 0;
  std::int64_t p_total_mbs_ = 0;
  double mv_len_sum_ = 0;
  std::int64_t predicted_mbs_ = 0;
};

GopFeatures aggregate_gop(std::span<const FrameStats> stats, std::span<const Frame> full_res,
                          const SequenceMeta& meta);

// Z-score scaling with population statistics.
struct FeatureScaler {
  FeatureVector mean{};
  FeatureVector stddev{};
  int version = kFeatureVersion;

  FeatureVector apply(const GopFeatures& f) const;
  FeatureVector apply(const FeatureVector& raw) const;
  FeatureVector inverse(const FeatureVector& scaled) const;
};

// Needs at least two samples; columns with std < 1e-9 get std = 1.
FeatureScaler fit_scaler(std::span<const GopFeatures> samples);

// Throws UsageError if the scaler was built for a different feature layout.
FeatureVector apply_scaler(const FeatureScaler& scaler, const GopFeatures& features,
                           int feature_version = kFeatureVersion);

void write_features_csv_header(std::ostream& out);
void write_features_csv_row(std::ostream& out, std::string_view id, const GopFeatures& f);

}  // namespace carf
