#include "carf/lookahead.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <tuple>

#include <omp.h>

#include "carf/error.hpp"
#include "json.hpp"

namespace carf {

void LookaheadParams::validate() const {
  if (rc_lookahead < 1) throw UsageError("rc-lookahead must be >= 1");
  if (keyint_min < 1) throw UsageError("min-keyint must be >= 1");
  if (keyint_max < keyint_min) throw UsageError("max-keyint must be >= min-keyint");
  if (!(scenecut_bias >= 0.0 && scenecut_bias <= 1.0)) {
    throw UsageError("scenecut bias must lie in [0, 1]");
  }
  if (search_range < 1) throw UsageError("motion search range must be >= 1");
}

int mb_cols(const Plane& p) { return (p.width + kMbSize - 1) / kMbSize; }
int mb_rows(const Plane& p) { return (p.height + kMbSize - 1) / kMbSize; }

MbBlock load_block(const Plane& p, int x, int y) {
  MbBlock block;
  const bool inside = x >= 0 && y >= 0 && x + kMbSize <= p.width && y + kMbSize <= p.height;
  if (inside) {
    for (int r = 0; r < kMbSize; ++r) {
      std::copy_n(&p.data[static_cast<std::size_t>(y + r) * p.width + x], kMbSize,
                  &block[r * kMbSize]);
    }
  } else {
    for (int r = 0; r < kMbSize; ++r) {
      for (int c = 0; c < kMbSize; ++c) block[r * kMbSize + c] = p.clamped(x + c, y + r);
    }
  }
  return block;
}

bool mv_precedes(const MotionVector& a, const MotionVector& b) {
  auto key = [](const MotionVector& m) {
    return std::make_tuple(std::abs(m.dx) + std::abs(m.dy), std::abs(m.dy), std::abs(m.dx), m.dy,
                           m.dx);
  };
  return key(a) < key(b);
}

MvBounds mv_bounds(const Plane& ref, int mb_x, int mb_y, int range) {
  const int x0 = mb_x * kMbSize;
  const int y0 = mb_y * kMbSize;
  return {std::max(-range, -x0), std::min(range, std::max(ref.width - kMbSize - x0, 0)),
          std::max(-range, -y0), std::min(range, std::max(ref.height - kMbSize - y0, 0))};
}

MotionResult motion_search(const Plane& cur, const Plane& ref, int mb_x, int mb_y, int range) {
  if (range < 1) throw UsageError("motion_search: range must be >= 1");
  const int x0 = mb_x * kMbSize;
  const int y0 = mb_y * kMbSize;
  const MbBlock cur_block = load_block(cur, x0, y0);
  const MvBounds bounds = mv_bounds(ref, mb_x, mb_y, range);

  const int side = 2 * range + 1;
  constexpr std::int64_t kUnvisited = -1;
  std::vector<std::int64_t> cache(static_cast<std::size_t>(side) * side, kUnvisited);
  auto cost_at = [&](const MotionVector& mv) -> std::int64_t {
    std::int64_t& slot = cache[(mv.dy + range) * side + (mv.dx + range)];
    if (slot == kUnvisited) slot = satd(cur_block, load_block(ref, x0 + mv.dx, y0 + mv.dy));
    return slot;
  };

  MotionResult best{{0, 0}, static_cast<std::uint32_t>(cost_at({0, 0}))};
  auto try_candidate = [&](const MotionVector& mv) {
    if (!bounds.contains(mv)) return false;
    const std::int64_t c = cost_at(mv);
    if (c < best.cost || (c == best.cost && mv_precedes(mv, best.mv))) {
      best = {mv, static_cast<std::uint32_t>(c)};
      return true;
    }
    return false;
  };

  for (int step : {8, 4, 2, 1}) {
    if (step > range) continue;
    for (int iter = 0; iter < 4 * range; ++iter) {
      const MotionVector center = best.mv;
      bool moved = false;
      const int h = std::max(step / 2, 1);
      for (const MotionVector d : {MotionVector{step, 0}, MotionVector{-step, 0}, MotionVector{0, step},
                                   MotionVector{0, -step}, MotionVector{h, h}, MotionVector{-h, h},
                                   MotionVector{h, -h}, MotionVector{-h, -h}}) {
        moved |= try_candidate({center.dx + d.dx, center.dy + d.dy});
      }
      if (!moved) break;
    }
  }

  // square refinement, repeated until the centre is a local minimum
  for (int iter = 0; iter < 4 * range; ++iter) {
    const MotionVector center = best.mv;
    bool moved = false;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx != 0 || dy != 0) moved |= try_candidate({center.dx + dx, center.dy + dy});
      }
    }
    if (!moved) break;
  }
  return best;
}

std::uint32_t intra_cost(const Plane& frame, int mb_x, int mb_y) {
  const int x0 = mb_x * kMbSize;
  const int y0 = mb_y * kMbSize;
  std::array<std::uint8_t, kMbSize> top;
  std::array<std::uint8_t, kMbSize> left;
  int border_sum = 0;
  for (int i = 0; i < kMbSize; ++i) {
    top[i] = y0 > 0 ? frame.clamped(x0 + i, y0 - 1) : 128;
    left[i] = x0 > 0 ? frame.clamped(x0 - 1, y0 + i) : 128;
    border_sum += top[i] + left[i];
  }
  const MbBlock cur = load_block(frame, x0, y0);

  MbBlock pred;
  pred.fill(static_cast<std::uint8_t>((border_sum + kMbSize) >> 5));
  std::uint32_t best = satd(cur, pred);

  for (int r = 0; r < kMbSize; ++r) std::copy(top.begin(), top.end(), &pred[r * kMbSize]);
  best = std::min(best, satd(cur, pred));

  for (int r = 0; r < kMbSize; ++r) std::fill_n(&pred[r * kMbSize], kMbSize, left[r]);
  best = std::min(best, satd(cur, pred));

  return best + kIntraPenalty;
}

FrameStats analyze_frame(const Frame& cur, const Frame* ref, int frame_index, int search_range) {
  if (ref != nullptr && (ref->y.width != cur.y.width || ref->y.height != cur.y.height)) {
    throw UsageError("analyze_frame: reference dimensions differ from current frame");
  }
  FrameStats st;
  st.frame_index = frame_index;
  st.slice_type = ref ? SliceType::P : SliceType::I;
  const int cols = mb_cols(cur.y);
  const int rows = mb_rows(cur.y);
  st.total_mb_count = cols * rows;
  st.mbs.reserve(st.total_mb_count);
  for (int my = 0; my < rows; ++my) {
    for (int mx = 0; mx < cols; ++mx) {
      MbAnalysis mb;
      mb.mb_x = mx;
      mb.mb_y = my;
      mb.intra_cost = intra_cost(cur.y, mx, my);
      if (ref) {
        const MotionResult me = motion_search(cur.y, ref->y, mx, my, search_range);
        mb.inter_cost = me.cost;
        mb.mv = me.mv;
        mb.is_intra = mb.intra_cost < mb.inter_cost;
      }
      const MbBlock block = load_block(cur.y, mx * kMbSize, my * kMbSize);
      std::int64_t sum = 0;
      std::int64_t sqsum = 0;
      for (std::uint8_t s : block) {
        sum += s;
        sqsum += static_cast<std::int64_t>(s) * s;
      }
      st.ac_energy_total += static_cast<double>(sqsum) -
                            static_cast<double>(sum) * static_cast<double>(sum) / kMbSamples;

      st.intra_cost_total += mb.intra_cost;
      st.inter_cost_total += mb.inter_cost;
      st.intra_mb_count += mb.is_intra ? 1 : 0;
      st.mbs.push_back(mb);
    }
  }
  return st;
}

std::vector<FrameStats> analyze_sequence_serial(std::span<const Frame> lowres, int search_range) {
  std::vector<FrameStats> out;
  out.reserve(lowres.size());
  for (std::size_t i = 0; i < lowres.size(); ++i) {
    out.push_back(analyze_frame(lowres[i], i ? &lowres[i - 1] : nullptr, lowres[i].index,
                                search_range));
  }
  return out;
}

std::vector<FrameStats> analyze_sequence(std::span<const Frame> lowres, int search_range) {
  std::vector<FrameStats> out(lowres.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::int64_t>(lowres.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[i] = analyze_frame(lowres[i], i ? &lowres[i - 1] : nullptr, lowres[i].index,
                             search_range);
    } catch (...) {
#pragma omp critical(carf_analyze_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

bool detect_scenecut(const FrameStats& stats, int frames_since_keyframe,
                     const LookaheadParams& params) {
  if (stats.intra_cost_total == 0 && stats.inter_cost_total == 0) return false;
  const double ramp =
      std::min(1.0, static_cast<double>(frames_since_keyframe) / params.keyint_min);
  const double bias = params.scenecut_bias * ramp;
  return static_cast<double>(stats.inter_cost_total) >=
         (1.0 - bias) * static_cast<double>(stats.intra_cost_total);
}

GopSegmenter::GopSegmenter(const LookaheadParams& params) : params_(params) {
  params_.validate();
}

bool GopSegmenter::push(const FrameStats& stats) {
  const int i = next_frame_++;
  if (i == 0) return true;
  const int dist = i - current_start_;
  bool cut = false;
  bool forced = dist >= params_.keyint_max;
  if (!forced && dist >= params_.keyint_min && stats.slice_type == SliceType::P) {
    cut = detect_scenecut(stats, dist, params_);
  }
  if (!forced && !cut) return false;
  spans_.push_back({current_start_, i - 1, current_scenecut_});
  current_start_ = i;
  current_scenecut_ = cut;
  return true;
}

std::vector<GopSpan> GopSegmenter::finish() {
  if (next_frame_ == 0) throw UsageError("segment_gops: empty frame statistics");
  spans_.push_back({current_start_, next_frame_ - 1, current_scenecut_});
  current_start_ = next_frame_;
  current_scenecut_ = false;
  return spans_;
}

std::vector<GopSpan> segment_gops(std::span<const FrameStats> all_stats,
                                  const LookaheadParams& params) {
  if (all_stats.empty()) throw UsageError("segment_gops: empty frame statistics");
  GopSegmenter seg(params);
  for (const FrameStats& s : all_stats) seg.push(s);
  return seg.finish();
}

void apply_gop_slice_types(std::vector<FrameStats>& stats, std::span<const GopSpan> spans) {
  for (FrameStats& s : stats) s.slice_type = SliceType::P;
  for (const GopSpan& g : spans) {
    if (g.start_frame >= 0 && g.start_frame < static_cast<int>(stats.size())) {
      stats[g.start_frame].slice_type = SliceType::I;
    }
  }
}

LookaheadResult run_lookahead(const VideoSequence& video, const LookaheadParams& params) {
  params.validate();
  if (video.frames.empty()) throw DataError("video has no frames");
  LookaheadResult r;
  r.lowres.resize(video.frames.size());
  const auto n = static_cast<std::int64_t>(video.frames.size());
  std::exception_ptr failure;
#pragma omp parallel for
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      r.lowres[i] = downsample_half(video.frames[i]);
      r.lowres[i].index = static_cast<int>(i);
    } catch (...) {
#pragma omp critical(carf_downsample_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  r.stats = analyze_sequence(r.lowres, params.search_range);
  r.spans = segment_gops(r.stats, params);
  apply_gop_slice_types(r.stats, r.spans);
  return r;
}

void write_stats_jsonl(std::span<const FrameStats> stats, std::ostream& out) {
  for (const FrameStats& s : stats) {
    double mv_sum = 0;
    int predicted = 0;
    for (const MbAnalysis& mb : s.mbs) {
      if (s.slice_type == SliceType::P && !mb.is_intra) {
        mv_sum += std::hypot(mb.mv.dx, mb.mv.dy);
        ++predicted;
      }
    }
    nlohmann::json j;
    j["frame_index"] = s.frame_index;
    j["slice_type"] = s.slice_type == SliceType::I ? "I" : "P";
    j["intra_cost"] = s.intra_cost_total;
    j["inter_cost"] = s.inter_cost_total;
    j["intra_mb_pct"] =
        s.total_mb_count ? 100.0 * s.intra_mb_count / s.total_mb_count : 0.0;
    j["mean_mv_len"] = predicted ? mv_sum / predicted : 0.0;
    out << j.dump() << '\n';
  }
}

}  // namespace carf
