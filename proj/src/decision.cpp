#include "carf/decision.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include "carf/error.hpp"
#include "json.hpp"

namespace carf {

using nlohmann::json;

SequenceMeta sequence_meta(const VideoSequence& video) {
  SequenceMeta meta;
  meta.fps = video.fps.value();
  // raw 4:2:0 rate when the header has no bitrate
  meta.source_bitrate_kbps = video.source_bitrate_kbps.value_or(
      static_cast<double>(video.width) * video.height * 1.5 * 8.0 * meta.fps / 1000.0);
  return meta;
}

namespace {

PlanEntry make_entry(const MlpModel& model, const GopSpan& span, const GopFeatures& f,
                     double target) {
  const CrfDecision d = decide_crf(model, f, target);
  return {span, d.crf, d.params, d.extrapolated};
}

}  // namespace

CrfDecision decide_crf(const MlpModel& model, const GopFeatures& features, double target_kbps) {
  if (!(target_kbps > 0)) throw UsageError("decide_crf: target bitrate must be positive");
  CrfDecision d;
  d.params = forward(model, features);
  d.crf = crf_for_bitrate(d.params, target_kbps);
  d.extrapolated = target_kbps < kTrainedMinKbps || target_kbps > kTrainedMaxKbps;
  return d;
}

int decision_window_end(const GopSpan& span, const LookaheadParams& params) {
  return std::min(span.end_frame, span.start_frame + params.rc_lookahead - 1);
}

EncodePlan plan_sequence(const VideoSequence& video, const MlpModel& model, double target_kbps,
                         const LookaheadParams& params) {
  if (video.frames.empty()) throw UsageError("plan_sequence: video has no frames");
  if (!(target_kbps > 0)) throw UsageError("plan_sequence: target bitrate must be positive");
  return plan_from_lookahead(video, run_lookahead(video, params), model, target_kbps, params);
}

EncodePlan plan_from_lookahead(const VideoSequence& video, const LookaheadResult& la,
                               const MlpModel& model, double target_kbps,
                               const LookaheadParams& params) {
  if (!(target_kbps > 0)) throw UsageError("plan_sequence: target bitrate must be positive");
  if (la.stats.size() != video.frames.size()) {
    throw UsageError("plan_from_lookahead: lookahead result does not match the video");
  }
  const SequenceMeta meta = sequence_meta(video);

  EncodePlan plan;
  plan.target_kbps = target_kbps;
  plan.model_fingerprint = model_fingerprint(model);
  for (const GopSpan& span : la.spans) {
    const int last = decision_window_end(span, params);
    const auto count = static_cast<std::size_t>(last - span.start_frame + 1);
    const GopFeatures f =
        aggregate_gop(std::span(la.stats).subspan(span.start_frame, count),
                      std::span(video.frames).subspan(span.start_frame, count), meta);
    plan.entries.push_back(make_entry(model, span, f, target_kbps));
  }
  return plan;
}

StreamingPlanner::StreamingPlanner(const MlpModel& model, double target_kbps,
                                   const LookaheadParams& params, const SequenceMeta& meta)
    : model_(model), target_(target_kbps), params_(params), meta_(meta), segmenter_(params) {
  if (!(target_kbps > 0)) throw UsageError("StreamingPlanner: target bitrate must be positive");
}

std::vector<PlanEntry> StreamingPlanner::push(const Frame& frame) {
  const int index = segmenter_.frames_seen();
  Frame low = downsample_half(frame);
  low.index = index;
  FrameStats st =
      analyze_frame(low, prev_lowres_ ? &*prev_lowres_ : nullptr, index, params_.search_range);
  prev_lowres_ = std::move(low);
  if (segmenter_.push(st)) {
    idr_frames_.push_back(index);
    st.slice_type = SliceType::I;
  } else {
    st.slice_type = SliceType::P;
  }
  stats_.push_back(std::move(st));
  frames_.push_back(frame);
  const std::size_t before = decided_.size();
  decide_pending(false);
  return {decided_.begin() + static_cast<std::ptrdiff_t>(before), decided_.end()};
}

void StreamingPlanner::decide_pending(bool flush) {
  const int seen = segmenter_.frames_seen();
  while (decided_.size() < idr_frames_.size()) {
    const std::size_t k = decided_.size();
    const int start = idr_frames_[k];
    const bool next_known = k + 1 < idr_frames_.size();
    const int window_last = start + params_.rc_lookahead - 1;
    if (!flush && !next_known && seen <= window_last) break;
    int last = std::min(window_last, seen - 1);
    if (next_known) last = std::min(last, idr_frames_[k + 1] - 1);
    const std::size_t offset = static_cast<std::size_t>(start - base_index_);
    const std::size_t count = static_cast<std::size_t>(last - start + 1);
    const GopFeatures f = aggregate_gop(std::span(stats_).subspan(offset, count),
                                        std::span(frames_).subspan(offset, count), meta_);
    const int provisional_end = next_known ? idr_frames_[k + 1] - 1 : seen - 1;
    decided_.push_back(make_entry(model_, {start, provisional_end, false}, f, target_));

    // Frames before the next undecided GOP are no longer needed.
    const int keep_from = next_known ? idr_frames_[k + 1] : seen;
    const auto drop = static_cast<std::ptrdiff_t>(std::min<std::size_t>(
        stats_.size(), static_cast<std::size_t>(std::max(0, keep_from - base_index_))));
    stats_.erase(stats_.begin(), stats_.begin() + drop);
    frames_.erase(frames_.begin(), frames_.begin() + drop);
    base_index_ += static_cast<int>(drop);
  }
}

EncodePlan StreamingPlanner::finish() {
  decide_pending(true);
  const std::vector<GopSpan> spans = segmenter_.finish();
  EncodePlan plan;
  plan.target_kbps = target_;
  plan.model_fingerprint = model_fingerprint(model_);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    PlanEntry e = decided_.at(i);
    e.span = spans[i];
    plan.entries.push_back(e);
  }
  return plan;
}

std::string plan_to_json(const EncodePlan& plan) {
  json j;
  j["target_kbps"] = plan.target_kbps;
  j["model_fingerprint"] = plan.model_fingerprint;
  j["unit"] = std::string(kRateModelUnit);
  j["gops"] = json::array();
  for (const PlanEntry& e : plan.entries) {
    j["gops"].push_back({{"start", e.span.start_frame},
                         {"end", e.span.end_frame},
                         {"scenecut", e.span.scenecut_triggered},
                         {"crf", e.crf},
                         {"a", e.params.a},
                         {"b", e.params.b},
                         {"c", e.params.c},
                         {"extrapolated", e.extrapolated}});
  }
  return j.dump(1);
}

EncodePlan plan_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EncodePlan plan;
    plan.target_kbps = j.at("target_kbps").get<double>();
    plan.model_fingerprint = j.at("model_fingerprint").get<std::string>();
    for (const json& g : j.at("gops")) {
      PlanEntry e;
      e.span = {g.at("start").get<int>(), g.at("end").get<int>(), g.value("scenecut", false)};
      e.crf = g.at("crf").get<double>();
      e.params = {g.at("a").get<double>(), g.at("b").get<double>(), g.at("c").get<double>()};
      e.extrapolated = g.value("extrapolated", false);
      if (e.crf < kCrfMin || e.crf > kCrfMax) throw DataError("plan: CRF out of range");
      plan.entries.push_back(e);
    }
    for (std::size_t i = 0; i < plan.entries.size(); ++i) {
      const GopSpan& s = plan.entries[i].span;
      const int expected_start = i == 0 ? 0 : plan.entries[i - 1].span.end_frame + 1;
      if (s.start_frame != expected_start || s.end_frame < s.start_frame) {
        throw DataError("plan: GOP spans do not partition the sequence");
      }
    }
    return plan;
  } catch (const json::exception& e) {
    throw DataError(std::string("plan file is malformed: ") + e.what());
  }
}

void save_plan(const EncodePlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << plan_to_json(plan) << '\n';
}

EncodePlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open plan file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return plan_from_json(ss.str());
}

void write_encoder_args(const EncodePlan& plan, std::ostream& out) {
  std::ostringstream line;
  for (const PlanEntry& e : plan.entries) {
    line.str("");
    line.setf(std::ios::fixed);
    line.precision(1);
    line << e.span.start_frame << ' ' << e.span.end_frame << " --crf " << e.crf << '\n';
    out << line.str();
  }
}

}  // namespace carf
