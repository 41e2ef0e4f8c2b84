#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "carf/decision.hpp"
#include "carf/features.hpp"
#include "carf/lookahead.hpp"
#include "carf/media_io.hpp"
#include "carf/nn.hpp"
#include "carf/rate_model.hpp"

namespace carf {

// Command template with {input}, {crf} and {output} placeholders, run through
// /bin/sh. The CARF_ENCODER environment variable overrides the template.
struct ExternalEncoder {
  std::string command_template;
  std::filesystem::path work_dir = "carf-work";
  double timeout_seconds = 600;
};

// Hermetic backend: every clip has planted rate-model parameters (one entry
// per GOP; the last entry repeats). The realized bitrate is the planted curve
// inverted at the requested CRF, times exp(sigma * z) with z a deterministic
// standard normal draw keyed by (seed, clip, gop, crf).
struct SyntheticEncoder {
  std::map<std::string, std::vector<RateModelParams>> planted;
  double noise_sigma = 0.05;
  std::uint64_t seed = 1;
};

using EncoderBackend = std::variant<ExternalEncoder, SyntheticEncoder>;

struct ClipRef {
  std::string id;
  std::filesystem::path path;  // empty for in-memory clips
  std::shared_ptr<const VideoSequence> video;
};

// Reads a Y4M clip; the id is the file stem. When the header carries no
// source bitrate, file size * 8 / duration is used.
ClipRef load_clip(const std::filesystem::path& path);
ClipRef make_clip(std::string id, VideoSequence video);
// All *.y4m files of a directory, sorted by name.
std::vector<ClipRef> load_corpus(const std::filesystem::path& dir);

std::string resolve_command_template(const ExternalEncoder& enc);
std::string expand_command(const std::string& tpl, const std::string& input, double crf,
                           const std::string& output);

double synthetic_encode(const SyntheticEncoder& enc, const std::string& clip_id, int gop_index,
                        double crf);

std::vector<RateObservation> run_crf_sweep(const EncoderBackend& backend, const ClipRef& clip,
                                           const std::vector<double>& crf_set);

struct DatasetRecord {
  std::string clip_id;
  int frames = 0;
  GopFeatures features;
  RateModelParams label;
  std::vector<RateObservation> observations;
  double residual_rms = 0;
};

struct DatasetConfig {
  LookaheadParams lookahead;
  std::vector<double> crf_set = default_crf_set();
  int jobs = 1;  // clips processed concurrently
};

struct DatasetBuild {
  std::vector<DatasetRecord> records;
  std::vector<std::pair<std::string, std::string>> skipped;  // (clip id, reason)
};

// Features of a single-GOP clip: the GOP's decision window.
GopFeatures clip_features(const VideoSequence& video, const LookaheadResult& la,
                          const LookaheadParams& params);

DatasetBuild build_dataset(const std::vector<ClipRef>& clips, const EncoderBackend& backend,
                           const DatasetConfig& config);

// Corpus directory in, run directory out: dataset.jsonl, skipped.txt and
// manifest.json under `out_dir`.
DatasetBuild build_dataset_dir(const std::filesystem::path& corpus_dir,
                               const EncoderBackend& backend, const DatasetConfig& config,
                               const std::filesystem::path& out_dir);

std::string dataset_record_to_json(const DatasetRecord& r);
DatasetRecord dataset_record_from_json(const std::string& line);
void write_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path);
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);

std::vector<TrainingSample> to_training_samples(const std::vector<DatasetRecord>& records);

// Clip-level split: records are ordered by a seeded hash of their clip id and
// the first `train_fraction` go to training.
std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> split_dataset(
    const std::vector<DatasetRecord>& records, double train_fraction, std::uint64_t seed);

struct GopResult {
  GopSpan span;
  double crf = 0;
  double bitrate_kbps = 0;
  double seconds = 0;
};

struct ExecutionResult {
  std::vector<GopResult> gops;
  double total_bitrate_kbps = 0;  // duration-weighted mean
  double encode_seconds = 0;
};

ExecutionResult execute_plan(const EncoderBackend& backend, const ClipRef& clip,
                             const EncodePlan& plan);

// Plans and executes every clip at every target; returns one bitrate error
// (percent) per (clip, target), clip-major.
std::vector<double> evaluate_bitrate_errors(const MlpModel& model, const std::vector<ClipRef>& clips,
                                            const EncoderBackend& backend,
                                            const std::vector<double>& targets_kbps,
                                            const LookaheadParams& params);

// --- planted synthetic corpus --------------------------------------------------

struct PlantedCorpusConfig {
  int clips = 600;
  int width = 128;
  int height = 96;
  int min_frames = 10;
  int max_frames = 16;
  std::uint64_t seed = 7;
  double noise_sigma = 0.05;
  LookaheadParams lookahead;
};

struct PlantedClip {
  ClipRef clip;
  GopFeatures features;
  RateModelParams planted;
};

struct PlantedCorpus {
  std::vector<PlantedClip> clips;
  FeatureScaler reference_scaler;
  SyntheticEncoder backend;
};

// Smooth map from reference-scaled features to rate-model parameters. Every
// CRF in [12, 40] is reachable on the decreasing branch of its output.
RateModelParams planted_mapping(const FeatureVector& scaled);

PlantedCorpus make_planted_corpus(const PlantedCorpusConfig& config);

// clips/<id>.y4m and planted.json under `dir`.
void write_planted_corpus(const PlantedCorpus& corpus, const std::filesystem::path& dir);
SyntheticEncoder read_planted(const std::filesystem::path& path, double noise_sigma,
                              std::uint64_t seed);

}  // namespace carf
