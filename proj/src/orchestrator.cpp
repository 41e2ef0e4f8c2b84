#include "carf/orchestrator.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <omp.h>

#include "carf/detail/hash.hpp"
#include "carf/error.hpp"
#include "carf/eval.hpp"
#include "carf/subprocess.hpp"
#include "json.hpp"

namespace carf {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::string_view kPlantedFormat = "carf-planted";

std::string format_crf(double crf) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << crf;
  return s.str();
}

const RateModelParams& planted_for(const SyntheticEncoder& enc, const std::string& id, int gop) {
  const auto it = enc.planted.find(id);
  if (it == enc.planted.end() || it->second.empty()) {
    throw EncoderError("synthetic backend has no planted parameters for clip '" + id + "'");
  }
  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(gop), it->second.size() - 1);
  return it->second[idx];
}

std::filesystem::path ensure_input_file(const ClipRef& clip, const std::filesystem::path& work_dir) {
  if (!clip.path.empty()) return std::filesystem::absolute(clip.path);
  std::filesystem::create_directories(work_dir);
  const auto p = std::filesystem::absolute(work_dir / (clip.id + ".y4m"));
  write_y4m(*clip.video, p);
  return p;
}

// Encodes `input` at `crf` with the external command; returns output bytes.
std::uintmax_t external_encode(const ExternalEncoder& enc, const std::filesystem::path& input,
                               double crf, const std::string& stem) {
  const auto work = std::filesystem::absolute(enc.work_dir);
  std::filesystem::create_directories(work);
  const auto output = work / (stem + "_crf" + format_crf(crf) + ".out");
  std::filesystem::remove(output);
  const std::string cmd =
      expand_command(resolve_command_template(enc), input.string(), crf, output.string());
  const CommandResult r = run_command(cmd, work, enc.timeout_seconds);
  if (r.timed_out) {
    throw EncoderError("encoder timed out after " + std::to_string(enc.timeout_seconds) +
                       " s: " + cmd);
  }
  if (r.exit_code != 0) {
    throw EncoderError("encoder exited with code " + std::to_string(r.exit_code) + ": " + cmd +
                       (r.stderr_text.empty() ? "" : "\nstderr: " + r.stderr_text));
  }
  std::error_code ec;
  const auto size = std::filesystem::file_size(output, ec);
  if (ec) throw EncoderError("encoder produced no readable output file " + output.string() + ": " + cmd);
  return size;
}

double kbps_of(std::uintmax_t bytes, double seconds) {
  return static_cast<double>(bytes) * 8.0 / seconds / 1000.0;
}

}  // namespace

ClipRef load_clip(const std::filesystem::path& path) {
  VideoSequence v = read_y4m(path);
  if (!v.source_bitrate_kbps) {
    v.source_bitrate_kbps = kbps_of(std::filesystem::file_size(path), v.duration_seconds());
  }
  return {path.stem().string(), path, std::make_shared<const VideoSequence>(std::move(v))};
}

ClipRef make_clip(std::string id, VideoSequence video) {
  return {std::move(id), {}, std::make_shared<const VideoSequence>(std::move(video))};
}

std::vector<ClipRef> load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("corpus directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".y4m") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ClipRef> clips;
  clips.reserve(files.size());
  for (const auto& f : files) clips.push_back(load_clip(f));
  return clips;
}

std::string resolve_command_template(const ExternalEncoder& enc) {
  if (const char* env = std::getenv("CARF_ENCODER"); env != nullptr && *env != '\0') return env;
  return enc.command_template;
}

std::string expand_command(const std::string& tpl, const std::string& input, double crf,
                           const std::string& output) {
  for (const char* ph : {"{input}", "{crf}", "{output}"}) {
    if (tpl.find(ph) == std::string::npos) {
      throw UsageError(std::string("encoder command template lacks the ") + ph + " placeholder");
    }
  }
  std::string out = tpl;
  auto replace_all = [&](const std::string& ph, const std::string& value) {
    for (std::size_t pos = out.find(ph); pos != std::string::npos; pos = out.find(ph, pos + value.size())) {
      out.replace(pos, ph.size(), value);
    }
  };
  replace_all("{input}", "'" + input + "'");
  replace_all("{output}", "'" + output + "'");
  replace_all("{crf}", format_crf(crf));
  return out;
}

double synthetic_encode(const SyntheticEncoder& enc, const std::string& clip_id, int gop_index,
                        double crf) {
  const RateModelParams& p = planted_for(enc, clip_id, gop_index);
  const double z = detail::standard_normal(detail::hash_of(
      enc.seed, detail::hash_string(clip_id), gop_index, std::bit_cast<std::uint64_t>(crf)));
  return bitrate_for_crf(p, crf) * std::exp(enc.noise_sigma * z);
}

std::vector<RateObservation> run_crf_sweep(const EncoderBackend& backend, const ClipRef& clip,
                                           const std::vector<double>& crf_set) {
  if (crf_set.empty()) throw UsageError("run_crf_sweep: empty CRF set");
  for (double crf : crf_set) {
    if (!(crf >= kCrfMin && crf <= kCrfMax)) throw UsageError("run_crf_sweep: CRF outside [0, 51]");
  }
  std::vector<RateObservation> obs;
  obs.reserve(crf_set.size());
  if (const auto* syn = std::get_if<SyntheticEncoder>(&backend)) {
    for (double crf : crf_set) obs.push_back({crf, synthetic_encode(*syn, clip.id, 0, crf)});
    return obs;
  }
  const auto& ext = std::get<ExternalEncoder>(backend);
  const auto input = ensure_input_file(clip, ext.work_dir);
  const double duration = clip.video->duration_seconds();
  for (double crf : crf_set) {
    obs.push_back({crf, kbps_of(external_encode(ext, input, crf, clip.id), duration)});
  }
  return obs;
}

GopFeatures clip_features(const VideoSequence& video, const LookaheadResult& la,
                          const LookaheadParams& params) {
  const GopSpan& span = la.spans.front();
  const int last = decision_window_end(span, params);
  const auto count = static_cast<std::size_t>(last - span.start_frame + 1);
  return aggregate_gop(std::span(la.stats).subspan(span.start_frame, count),
                       std::span(video.frames).subspan(span.start_frame, count),
                       sequence_meta(video));
}

DatasetBuild build_dataset(const std::vector<ClipRef>& clips, const EncoderBackend& backend,
                           const DatasetConfig& config) {
  if (clips.empty()) throw DataError("build_dataset: empty corpus");
  config.lookahead.validate();
  const auto n = static_cast<std::int64_t>(clips.size());
  std::vector<std::optional<DatasetRecord>> records(clips.size());
  std::vector<std::string> reasons(clips.size());

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, config.jobs))
  for (std::int64_t i = 0; i < n; ++i) {
    const ClipRef& clip = clips[i];
    try {
      const LookaheadResult la = run_lookahead(*clip.video, config.lookahead);
      if (la.spans.size() != 1) {
        reasons[i] = "multiple scenes (" + std::to_string(la.spans.size()) + " GOPs)";
        continue;
      }
      DatasetRecord r;
      r.clip_id = clip.id;
      r.frames = static_cast<int>(clip.video->frames.size());
      r.features = clip_features(*clip.video, la, config.lookahead);
      r.observations = run_crf_sweep(backend, clip, config.crf_set);
      const RateFit fit = fit_rate_model(r.observations);
      r.label = fit.params;
      r.residual_rms = fit.residual_rms;
      records[i] = std::move(r);
    } catch (const std::exception& e) {
      reasons[i] = e.what();
    }
  }

  DatasetBuild out;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (records[i]) {
      out.records.push_back(std::move(*records[i]));
    } else {
      out.skipped.emplace_back(clips[i].id, reasons[i]);
    }
  }
  if (out.records.empty()) throw DataError("build_dataset: every clip was rejected");
  return out;
}

DatasetBuild build_dataset_dir(const std::filesystem::path& corpus_dir,
                               const EncoderBackend& backend, const DatasetConfig& config,
                               const std::filesystem::path& out_dir) {
  const std::vector<ClipRef> clips = load_corpus(corpus_dir);
  DatasetBuild build = build_dataset(clips, backend, config);
  std::filesystem::create_directories(out_dir);
  write_dataset(build.records, out_dir / "dataset.jsonl");
  {
    std::ofstream skipped(out_dir / "skipped.txt");
    for (const auto& [id, reason] : build.skipped) skipped << id << '\t' << reason << '\n';
  }
  ordered_json manifest;
  manifest["kind"] = "dataset-build";
  manifest["corpus"] = corpus_dir.string();
  manifest["backend"] = std::holds_alternative<SyntheticEncoder>(backend) ? "synthetic" : "external";
  manifest["crf_set"] = config.crf_set;
  manifest["rc_lookahead"] = config.lookahead.rc_lookahead;
  manifest["min_keyint"] = config.lookahead.keyint_min;
  manifest["max_keyint"] = config.lookahead.keyint_max;
  manifest["scenecut_bias"] = config.lookahead.scenecut_bias;
  manifest["clips"] = clips.size();
  manifest["records"] = build.records.size();
  manifest["skipped"] = build.skipped.size();
  manifest["files"] = {"dataset.jsonl", "skipped.txt"};
  std::ofstream(out_dir / "manifest.json") << manifest.dump(1) << '\n';
  return build;
}

std::string dataset_record_to_json(const DatasetRecord& r) {
  ordered_json j;
  j["clip"] = r.clip_id;
  j["frames"] = r.frames;
  ordered_json feats;
  const FeatureVector v = r.features.to_array();
  for (std::size_t i = 0; i < kFeatureCount; ++i) feats[std::string(GopFeatures::names()[i])] = v[i];
  j["features"] = feats;
  j["a"] = r.label.a;
  j["b"] = r.label.b;
  j["c"] = r.label.c;
  j["unit"] = std::string(kRateModelUnit);
  j["residual_rms"] = r.residual_rms;
  j["observations"] = ordered_json::array();
  for (const RateObservation& o : r.observations) {
    j["observations"].push_back({{"crf", o.crf}, {"kbps", o.bitrate_kbps}});
  }
  return j.dump();
}

DatasetRecord dataset_record_from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    DatasetRecord r;
    r.clip_id = j.at("clip").get<std::string>();
    r.frames = j.at("frames").get<int>();
    FeatureVector v{};
    const json& feats = j.at("features");
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      v[i] = feats.at(std::string(GopFeatures::names()[i])).get<double>();
    }
    r.features = GopFeatures::from_array(v);
    r.label = {j.at("a").get<double>(), j.at("b").get<double>(), j.at("c").get<double>()};
    if (j.value("unit", std::string(kRateModelUnit)) != kRateModelUnit) {
      throw DataError("dataset record uses an unsupported rate-model unit");
    }
    r.residual_rms = j.at("residual_rms").get<double>();
    for (const json& o : j.at("observations")) {
      r.observations.push_back({o.at("crf").get<double>(), o.at("kbps").get<double>()});
    }
    if (!r.label.satisfies_sign_convention()) throw DataError("dataset record label violates a >= 0, b <= 0");
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed dataset line: ") + e.what());
  }
}

void write_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const DatasetRecord& r : records) out << dataset_record_to_json(r) << '\n';
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::vector<DatasetRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(dataset_record_from_json(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TrainingSample> to_training_samples(const std::vector<DatasetRecord>& records) {
  std::vector<TrainingSample> out;
  out.reserve(records.size());
  for (const DatasetRecord& r : records) out.push_back({r.features, r.label, r.clip_id});
  return out;
}

std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> split_dataset(
    const std::vector<DatasetRecord>& records, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0 && train_fraction < 1)) throw UsageError("split_dataset: fraction must be in (0, 1)");
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  for (std::size_t i = 0; i < records.size(); ++i) {
    keyed.emplace_back(detail::hash_of(seed, detail::hash_string(records[i].clip_id)), i);
  }
  std::sort(keyed.begin(), keyed.end());
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * records.size()));
  std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> out;
  for (std::size_t k = 0; k < keyed.size(); ++k) {
    (k < n_train ? out.first : out.second).push_back(records[keyed[k].second]);
  }
  return out;
}

ExecutionResult execute_plan(const EncoderBackend& backend, const ClipRef& clip,
                             const EncodePlan& plan) {
  const VideoSequence& video = *clip.video;
  const int n_frames = static_cast<int>(video.frames.size());
  if (plan.entries.empty() || plan.entries.front().span.start_frame != 0 ||
      plan.entries.back().span.end_frame != n_frames - 1) {
    throw DataError("execute_plan: plan spans do not match the video's " + std::to_string(n_frames) + " frames");
  }
  for (std::size_t i = 1; i < plan.entries.size(); ++i) {
    if (plan.entries[i].span.start_frame != plan.entries[i - 1].span.end_frame + 1) {
      throw DataError("execute_plan: plan spans do not partition the video");
    }
  }
  const double fps = video.fps.value();
  ExecutionResult res;
  const auto started = std::chrono::steady_clock::now();
  double weighted = 0;
  double total_duration = 0;
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    const PlanEntry& e = plan.entries[i];
    const auto t0 = std::chrono::steady_clock::now();
    const double duration = e.span.length() / fps;
    GopResult g{e.span, e.crf, 0.0, 0.0};
    if (const auto* syn = std::get_if<SyntheticEncoder>(&backend)) {
      g.bitrate_kbps = synthetic_encode(*syn, clip.id, static_cast<int>(i), e.crf);
    } else {
      const auto& ext = std::get<ExternalEncoder>(backend);
      VideoSequence part;
      part.width = video.width;
      part.height = video.height;
      part.fps = video.fps;
      part.source_bitrate_kbps = video.source_bitrate_kbps;
      part.frames.assign(video.frames.begin() + e.span.start_frame,
                         video.frames.begin() + e.span.end_frame + 1);
      const std::string stem = clip.id + "_gop" + std::to_string(i);
      const auto input = std::filesystem::absolute(ext.work_dir) / (stem + ".y4m");
      std::filesystem::create_directories(ext.work_dir);
      write_y4m(part, input);
      g.bitrate_kbps = kbps_of(external_encode(ext, input, e.crf, stem), duration);
    }
    g.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    weighted += g.bitrate_kbps * duration;
    total_duration += duration;
    res.gops.push_back(g);
  }
  res.total_bitrate_kbps = weighted / total_duration;
  res.encode_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

std::vector<double> evaluate_bitrate_errors(const MlpModel& model, const std::vector<ClipRef>& clips,
                                            const EncoderBackend& backend,
                                            const std::vector<double>& targets_kbps,
                                            const LookaheadParams& params) {
  std::vector<double> errors;
  errors.reserve(clips.size() * targets_kbps.size());
  for (const ClipRef& clip : clips) {
    const LookaheadResult la = run_lookahead(*clip.video, params);
    for (double target : targets_kbps) {
      const EncodePlan plan = plan_from_lookahead(*clip.video, la, model, target, params);
      errors.push_back(bitrate_error(execute_plan(backend, clip, plan).total_bitrate_kbps, target));
    }
  }
  return errors;
}

RateModelParams planted_mapping(const FeatureVector& z) {
  // z order: pred_cost, sum y/u/v, sqsum y/u/v, ac, intra_pct, mv_len, source kbps, fps.
  const double complexity =
      0.45 * z[7] + 0.35 * z[0] + 0.25 * z[9] + 0.2 * z[10] - 0.15 * z[1] + 0.1 * z[8];
  const double pivot = 7.2 + 1.1 * std::tanh(complexity / 1.2);  // ln kbps at CRF 26
  const double a = 0.15 + 0.07 * std::tanh(0.6 * z[8] + 0.4 * z[4] - 0.3 * z[11]);
  const double slope = -5.5 - 0.8 * std::tanh(0.5 * z[11] + 0.4 * z[9] - 0.3 * z[7]);
  // crf = 26 + slope (l - pivot) + a (l - pivot)^2, expanded in powers of l.
  const double b = slope - 2.0 * a * pivot;
  const double c = 26.0 - slope * pivot + a * pivot * pivot;
  return {a, b, c};
}

PlantedCorpus make_planted_corpus(const PlantedCorpusConfig& config) {
  if (config.clips < 2) throw UsageError("planted corpus needs at least 2 clips");
  if (config.min_frames < 1 || config.max_frames < config.min_frames) {
    throw UsageError("planted corpus: bad frame-count range");
  }
  config.lookahead.validate();
  constexpr std::array<Rational, 5> kRates = {Rational{24, 1}, Rational{25, 1}, Rational{30, 1},
                                              Rational{50, 1}, Rational{60, 1}};
  PlantedCorpus corpus;
  corpus.clips.resize(static_cast<std::size_t>(config.clips));
  const std::uint64_t seed = config.seed;
  auto u = [&](int clip, int field) {
    return detail::unit_interval(detail::hash_of(seed, static_cast<std::uint64_t>(clip), field));
  };
  auto uniform_int = [&](int clip, int field, int lo, int hi) {
    return lo + static_cast<int>(std::floor(u(clip, field) * (hi - lo + 1)));
  };

  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < config.clips; ++i) {
    try {
      SyntheticSpec spec;
      spec.width = config.width;
      spec.height = config.height;
      spec.frames = uniform_int(i, 1, config.min_frames, config.max_frames);
      spec.fps = kRates[static_cast<std::size_t>(uniform_int(i, 2, 0, 4))];
      spec.source_bitrate_kbps = std::round(300.0 * std::pow(20000.0 / 300.0, u(i, 3)));
      const double kind = u(i, 4);
      const std::uint64_t content_seed = detail::hash_of(seed, static_cast<std::uint64_t>(i), 99);
      if (kind < 0.05) {
        spec.pattern = FlatPattern{uniform_int(i, 5, 16, 235)};
      } else if (kind < 0.15) {
        spec.pattern = NoisePattern{content_seed, uniform_int(i, 5, 60, 190), uniform_int(i, 6, 4, 40)};
      } else {
        TexturePattern t;
        t.dx = uniform_int(i, 7, -6, 6);
        t.dy = uniform_int(i, 8, -6, 6);
        t.seed = content_seed;
        t.mean = uniform_int(i, 5, 40, 210);
        t.amplitude = uniform_int(i, 6, 8, 80);
        t.detail = uniform_int(i, 9, 0, 30);
        spec.pattern = t;
      }
      std::ostringstream id;
      id << "clip" << std::setw(4) << std::setfill('0') << i;
      PlantedClip& pc = corpus.clips[static_cast<std::size_t>(i)];
      pc.clip = make_clip(id.str(), synth_sequence(spec));
      const LookaheadResult la = run_lookahead(*pc.clip.video, config.lookahead);
      pc.features = clip_features(*pc.clip.video, la, config.lookahead);
    } catch (...) {
#pragma omp critical(carf_planted_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<GopFeatures> feats;
  feats.reserve(corpus.clips.size());
  for (const PlantedClip& pc : corpus.clips) feats.push_back(pc.features);
  corpus.reference_scaler = fit_scaler(feats);
  corpus.backend.noise_sigma = config.noise_sigma;
  corpus.backend.seed = detail::hash_of(seed, 0x4e4f495345ULL);
  for (PlantedClip& pc : corpus.clips) {
    pc.planted = planted_mapping(corpus.reference_scaler.apply(pc.features));
    corpus.backend.planted[pc.clip.id] = {pc.planted};
  }
  return corpus;
}

void write_planted_corpus(const PlantedCorpus& corpus, const std::filesystem::path& dir) {
  const auto clips_dir = dir / "clips";
  std::filesystem::create_directories(clips_dir);
  ordered_json j;
  j["format"] = std::string(kPlantedFormat);
  j["unit"] = std::string(kRateModelUnit);
  j["noise_sigma"] = corpus.backend.noise_sigma;
  j["seed"] = corpus.backend.seed;
  ordered_json planted = ordered_json::object();
  for (const PlantedClip& pc : corpus.clips) {
    write_y4m(*pc.clip.video, clips_dir / (pc.clip.id + ".y4m"));
    planted[pc.clip.id] = ordered_json::array({{{"a", pc.planted.a}, {"b", pc.planted.b}, {"c", pc.planted.c}}});
  }
  j["clips"] = planted;
  std::ofstream(dir / "planted.json") << j.dump(1) << '\n';
}

SyntheticEncoder read_planted(const std::filesystem::path& path, double noise_sigma,
                              std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open planted parameter file " + path.string());
  try {
    const json j = json::parse(in);
    if (j.at("format").get<std::string>() != kPlantedFormat) throw DataError("not a planted parameter file: " + path.string());
    SyntheticEncoder enc;
    enc.noise_sigma = noise_sigma;
    enc.seed = seed;
    for (const auto& [id, list] : j.at("clips").items()) {
      auto& v = enc.planted[id];
      for (const json& p : list) v.push_back({p.at("a").get<double>(), p.at("b").get<double>(), p.at("c").get<double>()});
    }
    return enc;
  } catch (const json::exception& e) {
    throw DataError("malformed planted parameter file " + path.string() + ": " + e.what());
  }
}

}  // namespace carf
