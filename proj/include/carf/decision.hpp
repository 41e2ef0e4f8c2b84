#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "carf/features.hpp"
#include "carf/lookahead.hpp"
#include "carf/nn.hpp"
#include "carf/rate_model.hpp"

namespace carf {

// Bitrate interval covered by the training grid.
inline constexpr double kTrainedMinKbps = 200.0;
inline constexpr double kTrainedMaxKbps = 12000.0;

struct CrfDecision {
  double crf = 0;
  RateModelParams params;
  bool extrapolated = false;  // target outside [200, 12000] kbps
};

CrfDecision decide_crf(const MlpModel& model, const GopFeatures& features, double target_kbps);

struct PlanEntry {
  GopSpan span;
  double crf = 0;
  RateModelParams params;
  bool extrapolated = false;
};

struct EncodePlan {
  std::vector<PlanEntry> entries;
  double target_kbps = 0;
  std::string model_fingerprint;
};

// The features of a GOP are aggregated over the frames of the span that are
// visible in the lookahead window when its I/IDR frame is reached: frames
// [start, min(end, start + rc_lookahead - 1)].
int decision_window_end(const GopSpan& span, const LookaheadParams& params);

// Open-loop per-GOP planning; one CRF per span.
EncodePlan plan_sequence(const VideoSequence& video, const MlpModel& model, double target_kbps,
                         const LookaheadParams& params);
// Same, reusing an existing lookahead pass over `video`.
EncodePlan plan_from_lookahead(const VideoSequence& video, const LookaheadResult& la,
                               const MlpModel& model, double target_kbps,
                               const LookaheadParams& params);

// Feature metadata for a sequence; without a known source bitrate the raw
// 4:2:0 rate is used.
SequenceMeta sequence_meta(const VideoSequence& video);

// Same decisions as plan_sequence, computed frame by frame. A GOP is decided
// as soon as its decision window is complete (or the stream ends).
class StreamingPlanner {
 public:
  StreamingPlanner(const MlpModel& model, double target_kbps, const LookaheadParams& params,
                   const SequenceMeta& meta);

  // Feeds the next full-resolution frame; returns entries decided by it. The
  // span end of a returned entry is provisional until the next IDR is known,
  // so finish() returns the final, complete plan.
  std::vector<PlanEntry> push(const Frame& frame);
  EncodePlan finish();

 private:
  void decide_pending(bool flush);

  const MlpModel& model_;
  double target_;
  LookaheadParams params_;
  SequenceMeta meta_;
  GopSegmenter segmenter_;
  std::optional<Frame> prev_lowres_;
  std::vector<FrameStats> stats_;   // frames of the open decision windows
  std::vector<Frame> frames_;       // full-resolution counterparts
  int base_index_ = 0;              // frame index of stats_[0]
  std::vector<int> idr_frames_;
  std::vector<PlanEntry> decided_;  // one per IDR, in order
};

std::string plan_to_json(const EncodePlan& plan);
EncodePlan plan_from_json(const std::string& text);
void save_plan(const EncodePlan& plan, const std::filesystem::path& path);
EncodePlan load_plan(const std::filesystem::path& path);

// One line per GOP: "<start> <end> --crf <value>" for per-span encoder runs.
void write_encoder_args(const EncodePlan& plan, std::ostream& out);

}  // namespace carf
