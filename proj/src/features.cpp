#include "carf/features.hpp"

#include <cmath>
#include <ostream>

#include "carf/error.hpp"

namespace carf {

namespace {

void plane_moments(const Plane& p, double& sum, double& sqsum) {
  std::uint64_t s = 0;
  std::uint64_t sq = 0;
  for (std::uint8_t v : p.data) {
    s += v;
    sq += static_cast<std::uint64_t>(v) * v;
  }
  sum += static_cast<double>(s);
  sqsum += static_cast<double>(sq);
}

}  // namespace

FeatureVector GopFeatures::to_array() const {
  return {pred_cost_score, pixel_sum_y,  pixel_sum_u,   pixel_sum_v,  pixel_sqsum_y,  pixel_sqsum_u,
          pixel_sqsum_v,   ac_score,     intra_mb_pct,  mv_len_mean,  source_bitrate, fps};
}

GopFeatures GopFeatures::from_array(const FeatureVector& v) {
  GopFeatures f;
  f.pred_cost_score = v[0];
  f.pixel_sum_y = v[1];
  f.pixel_sum_u = v[2];
  f.pixel_sum_v = v[3];
  f.pixel_sqsum_y = v[4];
  f.pixel_sqsum_u = v[5];
  f.pixel_sqsum_v = v[6];
  f.ac_score = v[7];
  f.intra_mb_pct = v[8];
  f.mv_len_mean = v[9];
  f.source_bitrate = v[10];
  f.fps = v[11];
  return f;
}

const std::array<std::string_view, kFeatureCount>& GopFeatures::names() {
  static const std::array<std::string_view, kFeatureCount> kNames = {
      "pred_cost_score", "pixel_sum_y",   "pixel_sum_u",   "pixel_sum_v",
      "pixel_sqsum_y",   "pixel_sqsum_u", "pixel_sqsum_v", "ac_score",
      "intra_mb_pct",    "mv_len_mean",   "source_bitrate", "fps"};
  return kNames;
}

void GopAccumulator::add(const FrameStats& stats, const Frame& full_res) {
  ++frames_;
  const double frame_cost = stats.slice_type == SliceType::I
                                ? static_cast<double>(stats.intra_cost_total)
                                : static_cast<double>(stats.inter_cost_total);
  if (stats.total_mb_count > 0) pred_cost_per_mb_sum_ += frame_cost / stats.total_mb_count;

  plane_moments(full_res.y, pixel_sum_[0], pixel_sqsum_[0]);
  plane_moments(full_res.u, pixel_sum_[1], pixel_sqsum_[1]);
  plane_moments(full_res.v, pixel_sum_[2], pixel_sqsum_[2]);

  ac_energy_ += stats.ac_energy_total;
  mb_count_ += stats.total_mb_count;

  if (stats.slice_type == SliceType::P) {
    p_total_mbs_ += stats.total_mb_count;
    for (const MbAnalysis& mb : stats.mbs) {
      if (mb.is_intra) {
        ++p_intra_mbs_;
      } else {
        mv_len_sum_ += std::hypot(mb.mv.dx, mb.mv.dy);
        ++predicted_mbs_;
      }
    }
  }
}

GopFeatures GopAccumulator::finish(const SequenceMeta& meta) const {
  if (frames_ == 0) throw UsageError("aggregate_gop: empty span");
  GopFeatures f;
  const double n = frames_;
  f.pred_cost_score = pred_cost_per_mb_sum_ / n;
  f.pixel_sum_y = pixel_sum_[0] / n;
  f.pixel_sum_u = pixel_sum_[1] / n;
  f.pixel_sum_v = pixel_sum_[2] / n;
  f.pixel_sqsum_y = pixel_sqsum_[0] / n;
  f.pixel_sqsum_u = pixel_sqsum_[1] / n;
  f.pixel_sqsum_v = pixel_sqsum_[2] / n;
  f.ac_score = mb_count_ ? ac_energy_ / static_cast<double>(mb_count_) : 0.0;
  f.intra_mb_pct =
      p_total_mbs_ ? 100.0 * static_cast<double>(p_intra_mbs_) / static_cast<double>(p_total_mbs_)
                   : 0.0;
  f.mv_len_mean = predicted_mbs_ ? mv_len_sum_ / static_cast<double>(predicted_mbs_) : 0.0;
  f.source_bitrate = meta.source_bitrate_kbps;
  f.fps = meta.fps;
  return f;
}

GopFeatures aggregate_gop(std::span<const FrameStats> stats, std::span<const Frame> full_res,
                          const SequenceMeta& meta) {
  if (stats.empty()) throw UsageError("aggregate_gop: empty span");
  if (stats.size() != full_res.size()) {
    throw UsageError("aggregate_gop: statistics and frames differ in length");
  }
  for (std::size_t i = 1; i < stats.size(); ++i) {
    if (stats[i].frame_index != stats[i - 1].frame_index + 1) {
      throw UsageError("aggregate_gop: frame statistics are not contiguous");
    }
  }
  GopAccumulator acc;
  for (std::size_t i = 0; i < stats.size(); ++i) acc.add(stats[i], full_res[i]);
  return acc.finish(meta);
}

FeatureVector FeatureScaler::apply(const FeatureVector& raw) const {
  FeatureVector out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) out[i] = (raw[i] - mean[i]) / stddev[i];
  return out;
}

FeatureVector FeatureScaler::apply(const GopFeatures& f) const { return apply(f.to_array()); }

FeatureVector FeatureScaler::inverse(const FeatureVector& scaled) const {
  FeatureVector out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) out[i] = scaled[i] * stddev[i] + mean[i];
  return out;
}

FeatureScaler fit_scaler(std::span<const GopFeatures> samples) {
  if (samples.size() < 2) throw UsageError("fit_scaler: need at least 2 samples");
  FeatureScaler s;
  const double n = static_cast<double>(samples.size());
  for (const GopFeatures& f : samples) {
    const FeatureVector v = f.to_array();
    for (std::size_t i = 0; i < kFeatureCount; ++i) s.mean[i] += v[i];
  }
  for (double& m : s.mean) m /= n;
  FeatureVector var{};
  for (const GopFeatures& f : samples) {
    const FeatureVector v = f.to_array();
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      const double d = v[i] - s.mean[i];
      var[i] += d * d;
    }
  }
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const double sd = std::sqrt(var[i] / n);
    s.stddev[i] = sd < 1e-9 ? 1.0 : sd;
  }
  return s;
}

FeatureVector apply_scaler(const FeatureScaler& scaler, const GopFeatures& features,
                           int feature_version) {
  if (scaler.version != feature_version) {
    throw UsageError("feature scaler version " + std::to_string(scaler.version) +
                     " does not match feature version " + std::to_string(feature_version));
  }
  return scaler.apply(features);
}

void write_features_csv_header(std::ostream& out) {
  out << "id";
  for (std::string_view n : GopFeatures::names()) out << ',' << n;
  out << '\n';
}

void write_features_csv_row(std::ostream& out, std::string_view id, const GopFeatures& f) {
  const auto old_precision = out.precision(17);
  out << id;
  for (double v : f.to_array()) out << ',' << v;
  out << '\n';
  out.precision(old_precision);
}

}  // namespace carf
