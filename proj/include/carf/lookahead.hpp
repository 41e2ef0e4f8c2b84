#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "carf/costs.hpp"
#include "carf/media_io.hpp"

namespace carf {

struct LookaheadParams {
  int rc_lookahead = 100;
  int keyint_min = 40;
  int keyint_max = 250;
  double scenecut_bias = 0.4;
  int search_range = 16;

  // Throws UsageError on out-of-range values.
  void validate() const;
};

// Added to every intra candidate: 4 per 64 samples of a 16x16 MB.
inline constexpr std::uint32_t kIntraPenalty = 4 * kMbSamples / 64;

struct MotionVector {
  int dx = 0;
  int dy = 0;
  bool operator==(const MotionVector&) const = default;
};

struct MotionResult {
  MotionVector mv;
  std::uint32_t cost = 0;
};

struct MbAnalysis {
  int mb_x = 0;
  int mb_y = 0;
  std::uint32_t intra_cost = 0;
  std::uint32_t inter_cost = 0;
  MotionVector mv;
  bool is_intra = true;
};

enum class SliceType { I, P };

struct FrameStats {
  int frame_index = 0;
  SliceType slice_type = SliceType::I;
  std::uint64_t intra_cost_total = 0;
  std::uint64_t inter_cost_total = 0;
  int intra_mb_count = 0;
  int total_mb_count = 0;
  std::vector<MbAnalysis> mbs;
  double ac_energy_total = 0;
};

struct GopSpan {
  int start_frame = 0;
  int end_frame = 0;  // inclusive
  bool scenecut_triggered = false;

  int length() const { return end_frame - start_frame + 1; }
  bool operator==(const GopSpan&) const = default;
};

// Number of 16x16 MBs covering a plane (partial MBs at the edges count).
int mb_cols(const Plane& p);
int mb_rows(const Plane& p);

// Copies an MB-sized block whose top-left corner is (x, y); samples outside
// the plane replicate the nearest edge.
MbBlock load_block(const Plane& p, int x, int y);

// Total order used to break cost ties between candidate vectors: shorter
// |dx|+|dy| first, then smaller |dy|, |dx|, dy, dx.
bool mv_precedes(const MotionVector& a, const MotionVector& b);

// Allowed vector range for an MB: within +/-range and keeping the reference
// block's origin inside the picture (zero is always allowed).
struct MvBounds {
  int min_dx, max_dx, min_dy, max_dy;
  bool contains(const MotionVector& mv) const {
    return mv.dx >= min_dx && mv.dx <= max_dx && mv.dy >= min_dy && mv.dy <= max_dy;
  }
};
MvBounds mv_bounds(const Plane& ref, int mb_x, int mb_y, int range);

// Integer-pel diamond descent from (0,0) at steps 8/4/2/1, then a +/-1 square
// refinement. The returned cost never exceeds the zero-vector cost.
MotionResult motion_search(const Plane& cur, const Plane& ref, int mb_x, int mb_y, int range);

// Best of DC / vertical / horizontal prediction from the MB's top row and left
// column neighbours (128 outside the picture), plus kIntraPenalty.
std::uint32_t intra_cost(const Plane& frame, int mb_x, int mb_y);

// Per-MB costs on a downsampled frame. `ref` is the previous frame in display
// order, or null for the first frame (slice I, no inter statistics).
FrameStats analyze_frame(const Frame& cur, const Frame* ref, int frame_index,
                         int search_range = 16);

// Analysis of a whole downsampled sequence. The parallel version distributes
// frames over OpenMP threads; results are identical to the serial reference.
std::vector<FrameStats> analyze_sequence(std::span<const Frame> lowres, int search_range = 16);
std::vector<FrameStats> analyze_sequence_serial(std::span<const Frame> lowres,
                                                int search_range = 16);

bool detect_scenecut(const FrameStats& stats, int frames_since_keyframe,
                     const LookaheadParams& params);

// Incremental IDR placement: frame 0, any scene cut at least keyint_min frames
// after the previous IDR, and forced when a span would exceed keyint_max.
class GopSegmenter {
 public:
  explicit GopSegmenter(const LookaheadParams& params);

  // Feeds the next frame in display order. Returns true when it becomes an IDR.
  bool push(const FrameStats& stats);
  // Closes the final span; returns all spans.
  std::vector<GopSpan> finish();

  // Spans whose end is already known (all but the open one).
  const std::vector<GopSpan>& closed() const { return spans_; }
  int frames_seen() const { return next_frame_; }
  int current_start() const { return current_start_; }

 private:
  LookaheadParams params_;
  std::vector<GopSpan> spans_;
  int next_frame_ = 0;
  int current_start_ = 0;
  bool current_scenecut_ = false;
};

std::vector<GopSpan> segment_gops(std::span<const FrameStats> all_stats,
                                  const LookaheadParams& params);

// Marks the first frame of every span as an I slice.
void apply_gop_slice_types(std::vector<FrameStats>& stats, std::span<const GopSpan> spans);

// Downsample + analyze + segment. Frames of `video` are read once.
struct LookaheadResult {
  std::vector<Frame> lowres;
  std::vector<FrameStats> stats;
  std::vector<GopSpan> spans;
};
LookaheadResult run_lookahead(const VideoSequence& video, const LookaheadParams& params);

// One JSON object per line: frame_index, slice_type, intra/inter cost totals,
// intra_mb_pct, mean_mv_len.
void write_stats_jsonl(std::span<const FrameStats> stats, std::ostream& out);

}  // namespace carf
