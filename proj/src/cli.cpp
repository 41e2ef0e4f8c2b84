#include "carf/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "carf/decision.hpp"
#include "carf/error.hpp"
#include "carf/eval.hpp"
#include "carf/orchestrator.hpp"
#include "json.hpp"

namespace carf::cli {

namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

const std::vector<double> kDefaultTargets = {300, 750, 1200, 1850, 2850, 4300};

struct Options {
  std::vector<std::string> inputs;
  std::string out_file;
  std::string out_dir;
  std::string model;
  std::string plan;
  std::string dataset;
  double target_kbps = 0;
  std::vector<double> targets;
  LookaheadParams la;
  std::vector<double> crf_set;
  std::uint64_t seed = 1;
  int jobs = 1;

  std::string backend = "synthetic";
  std::string encoder_cmd;
  std::string planted;
  double noise_sigma = 0.05;
  double timeout = 600;

  // synth
  int width = 128;
  int height = 96;
  int frames = 30;
  std::string fps = "25";
  std::string pattern = "texture";
  int dx = 2;
  int dy = 1;
  int mean = 128;
  int amplitude = 60;
  int detail = 8;
  int cut_at = 0;
  double source_kbps = 0;

  // synth-corpus
  int clips = 600;
  int min_frames = 10;
  int max_frames = 16;

  // train
  int epochs = 300;
  int batch_size = 32;
  double learning_rate = 2e-3;
  double val_fraction = 0.2;

  // report
  std::string anchor;
  std::string test;
  std::string errors;
  std::string method = "cubic";
  bool pchip = false;
};

Rational parse_fps(const std::string& text) {
  Rational r;
  const auto slash = text.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      r = {std::stoi(text, &used), 1};
      if (used != text.size()) throw std::invalid_argument(text);
    } else {
      r = {std::stoi(text.substr(0, slash)), std::stoi(text.substr(slash + 1))};
    }
  } catch (const std::logic_error&) {
    throw UsageError("--fps: expected N or N/D, got '" + text + "'");
  }
  if (r.num <= 0 || r.den <= 0) throw UsageError("--fps must be positive");
  return r;
}

fs::path require_out_dir(const Options& o) {
  if (o.out_dir.empty()) throw UsageError("--out-dir is required");
  fs::create_directories(o.out_dir);
  return o.out_dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot write " + p.string());
  return f;
}

EncoderBackend make_backend(const Options& o) {
  if (o.backend == "synthetic") {
    if (o.planted.empty()) throw UsageError("--backend synthetic needs --planted <planted.json>");
    return read_planted(o.planted, o.noise_sigma, o.seed);
  }
  ExternalEncoder ext;
  ext.command_template = o.encoder_cmd;
  ext.timeout_seconds = o.timeout;
  if (!o.out_dir.empty()) ext.work_dir = fs::path(o.out_dir) / "work";
  if (resolve_command_template(ext).empty()) {
    throw UsageError("--backend external needs --encoder-cmd or CARF_ENCODER");
  }
  return ext;
}

std::vector<double> crf_set_of(const Options& o) {
  return o.crf_set.empty() ? default_crf_set() : o.crf_set;
}

BasicPattern basic_pattern(const std::string& name, const Options& o, std::uint64_t seed) {
  if (name == "flat") return FlatPattern{o.mean};
  if (name == "noise") return NoisePattern{seed, o.mean, o.amplitude};
  if (name == "texture") return TexturePattern{o.dx, o.dy, seed, o.mean, o.amplitude, o.detail};
  throw UsageError("unknown pattern '" + name + "'");
}

int cmd_synth(const Options& o, std::ostream& out) {
  SyntheticSpec spec;
  spec.width = o.width;
  spec.height = o.height;
  spec.frames = o.frames;
  spec.fps = parse_fps(o.fps);
  if (o.source_kbps > 0) spec.source_bitrate_kbps = o.source_kbps;
  if (o.pattern == "cut") {
    if (o.cut_at <= 0 || o.cut_at >= o.frames) throw UsageError("--cut-at must lie inside the clip");
    Options after = o;
    after.mean = 255 - o.mean;
    spec.pattern = HardCutPattern{o.cut_at, basic_pattern("texture", o, o.seed),
                                  basic_pattern("texture", after, o.seed + 1)};
  } else {
    spec.pattern = std::visit([](const auto& p) { return Pattern{p}; },
                              basic_pattern(o.pattern, o, o.seed));
  }
  const VideoSequence v = synth_sequence(spec);
  write_y4m(v, fs::path(o.out_file));
  out << "wrote " << o.out_file << " (" << v.width << "x" << v.height << ", " << v.frames.size()
      << " frames)\n";
  return kExitOk;
}

int cmd_synth_corpus(const Options& o, std::ostream& out) {
  PlantedCorpusConfig cfg;
  cfg.clips = o.clips;
  cfg.width = o.width;
  cfg.height = o.height;
  cfg.min_frames = o.min_frames;
  cfg.max_frames = o.max_frames;
  cfg.seed = o.seed;
  cfg.noise_sigma = o.noise_sigma;
  cfg.lookahead = o.la;
  const fs::path dir = require_out_dir(o);
  const PlantedCorpus corpus = make_planted_corpus(cfg);
  write_planted_corpus(corpus, dir);
  out << "wrote " << corpus.clips.size() << " clips to " << (dir / "clips").string() << " and "
      << (dir / "planted.json").string() << '\n';
  return kExitOk;
}

int cmd_analyze(const Options& o, std::ostream& out) {
  const VideoSequence v = read_y4m(o.inputs.at(0));
  const LookaheadResult la = run_lookahead(v, o.la);
  if (!o.out_dir.empty()) {
    const fs::path dir = require_out_dir(o);
    auto stats = open_out(dir / "stats.jsonl");
    write_stats_jsonl(la.stats, stats);
    ordered_json gops = ordered_json::array();
    for (const GopSpan& s : la.spans) {
      gops.push_back({{"start", s.start_frame}, {"end", s.end_frame}, {"scenecut", s.scenecut_triggered}});
    }
    open_out(dir / "gops.json") << gops.dump(1) << '\n';
  }
  out << "frames " << v.frames.size() << ", GOPs " << la.spans.size() << '\n';
  out << std::setw(4) << "gop" << std::setw(8) << "start" << std::setw(8) << "end" << std::setw(8)
      << "frames" << "  trigger\n";
  for (std::size_t i = 0; i < la.spans.size(); ++i) {
    const GopSpan& s = la.spans[i];
    const char* trigger = i == 0 ? "start" : (s.scenecut_triggered ? "scenecut" : "max-keyint");
    out << std::setw(4) << i << std::setw(8) << s.start_frame << std::setw(8) << s.end_frame
        << std::setw(8) << s.length() << "  " << trigger << '\n';
  }
  return kExitOk;
}

void print_dataset_summary(const DatasetBuild& build, std::ostream& out) {
  out << "records " << build.records.size() << ", skipped " << build.skipped.size() << '\n';
  for (const auto& [id, reason] : build.skipped) out << "  skipped " << id << ": " << reason << '\n';
  double a = 0, b = 0, c = 0, rms = 0, max_rms = 0;
  for (const DatasetRecord& r : build.records) {
    a += r.label.a;
    b += r.label.b;
    c += r.label.c;
    rms += r.residual_rms;
    max_rms = std::max(max_rms, r.residual_rms);
  }
  const double n = static_cast<double>(build.records.size());
  out << std::fixed << std::setprecision(4) << "mean a " << a / n << ", mean b " << b / n
      << ", mean c " << c / n << ", mean residual " << rms / n << ", max residual " << max_rms
      << '\n';
  out.unsetf(std::ios::floatfield);
}

int cmd_dataset_build(const Options& o, std::ostream& out) {
  DatasetConfig cfg;
  cfg.lookahead = o.la;
  cfg.crf_set = crf_set_of(o);
  cfg.jobs = o.jobs;
  const fs::path dir = require_out_dir(o);
  const DatasetBuild build = build_dataset_dir(o.inputs.at(0), make_backend(o), cfg, dir);
  print_dataset_summary(build, out);
  out << "wrote " << (dir / "dataset.jsonl").string() << '\n';
  return kExitOk;
}

std::vector<RateObservation> read_observations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<RateObservation> obs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream s(line);
    RateObservation r;
    if (!(s >> r.crf >> r.bitrate_kbps)) {
      if (line_no == 1) continue;  // header
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'crf,kbps'");
    }
    obs.push_back(r);
  }
  return obs;
}

int cmd_fit(const Options& o, std::ostream& out) {
  const RateFit fit = fit_rate_model(read_observations(o.inputs.at(0)));
  ordered_json j;
  j["a"] = fit.params.a;
  j["b"] = fit.params.b;
  j["c"] = fit.params.c;
  j["unit"] = std::string(kRateModelUnit);
  j["residual_rms"] = fit.residual_rms;
  out << j.dump(1) << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const std::vector<DatasetRecord> records = read_dataset(o.inputs.at(0));
  if (records.size() < 4) throw DataError("train: dataset needs at least 4 records");
  const auto [train_rec, val_rec] = split_dataset(records, 1.0 - o.val_fraction, o.seed);
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.learning_rate;
  cfg.seed = o.seed;
  const auto train_set = to_training_samples(train_rec);
  const auto val_set = to_training_samples(val_rec);
  const TrainResult res = train(train_set, val_set, cfg);
  const fs::path dir = require_out_dir(o);
  save_model(res.model, dir / "model.json");
  auto log = open_out(dir / "train_log.csv");
  write_train_log_csv(res.log, log);
  out << "train " << train_set.size() << ", validation " << val_set.size() << '\n';
  out << "best epoch " << res.best_epoch << ", validation loss " << std::fixed
      << std::setprecision(4) << res.best_val_loss << " CRF\n";
  out.unsetf(std::ios::floatfield);
  out << "wrote " << (dir / "model.json").string() << " (" << model_fingerprint(res.model) << ")\n";
  return kExitOk;
}

void print_plan(const EncodePlan& plan, std::ostream& out) {
  out << std::setw(4) << "gop" << std::setw(8) << "start" << std::setw(8) << "end" << std::setw(8)
      << "crf" << '\n';
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    const PlanEntry& e = plan.entries[i];
    out << std::setw(4) << i << std::setw(8) << e.span.start_frame << std::setw(8)
        << e.span.end_frame << std::setw(8) << std::fixed << std::setprecision(1) << e.crf
        << (e.extrapolated ? "  (target outside trained range)" : "") << '\n';
    out.unsetf(std::ios::floatfield);
  }
}

int cmd_decide(const Options& o, std::ostream& out) {
  const VideoSequence v = read_y4m(o.inputs.at(0));
  const MlpModel model = load_model(o.model);
  const EncodePlan plan = plan_sequence(v, model, o.target_kbps, o.la);
  if (!o.out_dir.empty()) {
    const fs::path dir = require_out_dir(o);
    save_plan(plan, dir / "plan.json");
    auto args = open_out(dir / "encoder_args.txt");
    write_encoder_args(plan, args);
  }
  print_plan(plan, out);
  return kExitOk;
}

int cmd_execute(const Options& o, std::ostream& out) {
  const ClipRef clip = load_clip(o.inputs.at(0));
  EncodePlan plan;
  if (!o.plan.empty()) {
    plan = load_plan(o.plan);
  } else if (!o.model.empty() && o.target_kbps > 0) {
    plan = plan_sequence(*clip.video, load_model(o.model), o.target_kbps, o.la);
  } else {
    throw UsageError("execute needs --plan, or --model with --target-bitrate");
  }
  const ExecutionResult res = execute_plan(make_backend(o), clip, plan);
  ordered_json j;
  j["clip"] = clip.id;
  j["target_kbps"] = plan.target_kbps;
  j["total_kbps"] = res.total_bitrate_kbps;
  j["bitrate_error_pct"] = bitrate_error(res.total_bitrate_kbps, plan.target_kbps);
  j["encode_seconds"] = res.encode_seconds;
  j["gops"] = ordered_json::array();
  for (const GopResult& g : res.gops) {
    j["gops"].push_back({{"start", g.span.start_frame}, {"end", g.span.end_frame},
                         {"crf", g.crf}, {"kbps", g.bitrate_kbps}, {"seconds", g.seconds}});
  }
  if (!o.out_dir.empty()) open_out(require_out_dir(o) / "execution.json") << j.dump(1) << '\n';
  out << std::fixed << std::setprecision(2) << "total " << res.total_bitrate_kbps << " kbps, target "
      << plan.target_kbps << " kbps, error "
      << bitrate_error(res.total_bitrate_kbps, plan.target_kbps) << "%\n";
  out.unsetf(std::ios::floatfield);
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  std::vector<ClipRef> clips;
  for (const std::string& in : o.inputs) {
    if (fs::is_directory(in)) {
      for (ClipRef& c : load_corpus(in)) clips.push_back(std::move(c));
    } else {
      clips.push_back(load_clip(in));
    }
  }
  if (clips.empty()) throw DataError("eval: no clips");
  const MlpModel model = load_model(o.model);
  const std::vector<double> targets = o.targets.empty() ? kDefaultTargets : o.targets;
  const std::vector<double> errors = evaluate_bitrate_errors(model, clips, make_backend(o), targets, o.la);
  const fs::path dir = require_out_dir(o);
  {
    auto f = open_out(dir / "errors.csv");
    f << "clip,target_kbps,error_pct\n" << std::setprecision(17);
    for (std::size_t i = 0; i < errors.size(); ++i) {
      f << clips[i / targets.size()].id << ',' << targets[i % targets.size()] << ',' << errors[i] << '\n';
    }
  }
  auto cdf = open_out(dir / "cdf.csv");
  write_cdf_csv(error_cdf(errors), cdf);
  out << "clips " << clips.size() << ", targets " << targets.size() << '\n';
  out << std::fixed << std::setprecision(1) << "within 10%: " << pct_within(errors, 10)
      << "%, within 20%: " << pct_within(errors, 20) << "%\n";
  out.unsetf(std::ios::floatfield);
  return kExitOk;
}

RdCurves read_curves(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_rd_csv(in);
}

int cmd_report(const Options& o, std::ostream& out) {
  if (o.anchor.empty() != o.test.empty()) throw UsageError("report needs both --anchor and --test");
  if (o.anchor.empty() && o.errors.empty()) throw UsageError("report needs --anchor/--test or --errors");
  const BdRateMethod method = o.method == "pchip" ? BdRateMethod::Pchip : BdRateMethod::Cubic;
  const fs::path dir = o.out_dir.empty() ? fs::path() : require_out_dir(o);
  if (!o.anchor.empty()) {
    const BdRateTable table = bd_rate_table(read_curves(o.anchor), read_curves(o.test), method);
    if (!dir.empty()) {
      auto csv = open_out(dir / "bd_rate.csv");
      write_bd_rate_csv(table, csv);
      auto txt = open_out(dir / "bd_rate.txt");
      write_bd_rate_text(table, txt);
    }
    write_bd_rate_text(table, out);
  }
  if (!o.errors.empty()) {
    std::ifstream in(o.errors);
    if (!in) throw DataError("cannot open " + o.errors);
    const std::vector<double> errors = read_error_csv(in);
    if (!dir.empty()) {
      auto cdf = open_out(dir / "cdf.csv");
      write_cdf_csv(error_cdf(errors), cdf);
    }
    out << std::fixed << std::setprecision(1) << "within 20%: " << pct_within(errors, 20) << "%\n";
    out.unsetf(std::ios::floatfield);
  }
  return kExitOk;
}

void add_lookahead(CLI::App* app, Options& o) {
  app->add_option("--rc-lookahead", o.la.rc_lookahead, "Lookahead window (frames)")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--min-keyint", o.la.keyint_min, "Minimum GOP length")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--max-keyint", o.la.keyint_max, "Maximum GOP length")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--scenecut-bias", o.la.scenecut_bias, "Scene-cut bias")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
}

void add_backend(CLI::App* app, Options& o) {
  app->add_option("--backend", o.backend, "Encoder backend")
      ->check(CLI::IsMember({"external", "synthetic"}))->capture_default_str();
  app->add_option("--encoder-cmd", o.encoder_cmd, "Command template with {input} {crf} {output}");
  app->add_option("--planted", o.planted, "planted.json for the synthetic backend")
      ->check(CLI::ExistingFile);
  app->add_option("--noise-sigma", o.noise_sigma, "Synthetic backend log-rate noise")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  app->add_option("--timeout", o.timeout, "External encoder timeout (s)")
      ->check(CLI::PositiveNumber)->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Content-adaptive rate factor toolkit", "carf"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  auto* synth = app.add_subcommand("synth", "Write a synthetic Y4M clip");
  synth->add_option("--out", o.out_file, "Output .y4m")->required();
  synth->add_option("--width", o.width)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--height", o.height)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--frames", o.frames)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--fps", o.fps, "N or N/D")->capture_default_str();
  synth->add_option("--pattern", o.pattern)
      ->check(CLI::IsMember({"flat", "noise", "texture", "cut"}))->capture_default_str();
  synth->add_option("--dx", o.dx)->capture_default_str();
  synth->add_option("--dy", o.dy)->capture_default_str();
  synth->add_option("--mean", o.mean)->check(CLI::Range(0, 255))->capture_default_str();
  synth->add_option("--amplitude", o.amplitude)->check(CLI::Range(0, 255))->capture_default_str();
  synth->add_option("--detail", o.detail)->check(CLI::Range(0, 255))->capture_default_str();
  synth->add_option("--cut-at", o.cut_at, "First frame of the second scene (pattern cut)");
  synth->add_option("--source-kbps", o.source_kbps, "Source bitrate written to the header")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", o.seed)->capture_default_str();

  auto* corpus = app.add_subcommand("synth-corpus", "Generate a planted synthetic training corpus");
  corpus->add_option("--clips", o.clips)->check(CLI::Range(2, 1000000))->capture_default_str();
  corpus->add_option("--width", o.width)->check(CLI::PositiveNumber)->capture_default_str();
  corpus->add_option("--height", o.height)->check(CLI::PositiveNumber)->capture_default_str();
  corpus->add_option("--min-frames", o.min_frames)->check(CLI::PositiveNumber)->capture_default_str();
  corpus->add_option("--max-frames", o.max_frames)->check(CLI::PositiveNumber)->capture_default_str();
  corpus->add_option("--seed", o.seed)->capture_default_str();
  corpus->add_option("--noise-sigma", o.noise_sigma)->check(CLI::NonNegativeNumber)->capture_default_str();
  corpus->add_option("--out-dir", o.out_dir)->required();
  add_lookahead(corpus, o);

  auto* analyze = app.add_subcommand("analyze", "Run the lookahead and print the GOP table");
  analyze->add_option("input", o.inputs, "Input .y4m")->required()->check(CLI::ExistingFile);
  analyze->add_option("--out-dir", o.out_dir, "Write stats.jsonl and gops.json here");
  add_lookahead(analyze, o);

  auto* dataset = app.add_subcommand("dataset-build", "Sweep CRFs over a corpus and fit labels");
  dataset->add_option("corpus", o.inputs, "Directory of .y4m clips")->required()->check(CLI::ExistingDirectory);
  dataset->add_option("--out-dir", o.out_dir)->required();
  dataset->add_option("--crf-set", o.crf_set, "CRF values (default 12..40 step 2)")
      ->delimiter(',')->check(CLI::Range(0.0, 51.0));
  dataset->add_option("--seed", o.seed, "Synthetic backend noise seed")->capture_default_str();
  dataset->add_option("--jobs", o.jobs, "Clips processed concurrently")
      ->check(CLI::PositiveNumber)->capture_default_str();
  add_backend(dataset, o);
  add_lookahead(dataset, o);

  auto* fit = app.add_subcommand("fit", "Fit the CRF-bitrate model to crf,kbps observations");
  fit->add_option("input", o.inputs, "CSV of crf,kbps rows")->required()->check(CLI::ExistingFile);

  auto* trn = app.add_subcommand("train", "Train the parameter network on a dataset");
  trn->add_option("dataset", o.inputs, "dataset.jsonl")->required()->check(CLI::ExistingFile);
  trn->add_option("--out-dir", o.out_dir)->required();
  trn->add_option("--epochs", o.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  trn->add_option("--batch-size", o.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  trn->add_option("--learning-rate", o.learning_rate)->check(CLI::PositiveNumber)->capture_default_str();
  trn->add_option("--val-fraction", o.val_fraction)->check(CLI::Range(0.01, 0.99))->capture_default_str();
  trn->add_option("--seed", o.seed)->capture_default_str();

  auto* decide = app.add_subcommand("decide", "Plan one CRF per GOP for a target bitrate");
  decide->add_option("input", o.inputs, "Input .y4m")->required()->check(CLI::ExistingFile);
  decide->add_option("--model", o.model)->required()->check(CLI::ExistingFile);
  decide->add_option("--target-bitrate", o.target_kbps, "kbps")->required()->check(CLI::PositiveNumber);
  decide->add_option("--out-dir", o.out_dir, "Write plan.json and encoder_args.txt here");
  add_lookahead(decide, o);

  auto* exec = app.add_subcommand("execute", "Encode a clip according to a plan");
  exec->add_option("input", o.inputs, "Input .y4m")->required()->check(CLI::ExistingFile);
  exec->add_option("--plan", o.plan)->check(CLI::ExistingFile);
  exec->add_option("--model", o.model)->check(CLI::ExistingFile);
  exec->add_option("--target-bitrate", o.target_kbps, "kbps")->check(CLI::PositiveNumber);
  exec->add_option("--out-dir", o.out_dir, "Write execution.json here");
  exec->add_option("--seed", o.seed, "Synthetic backend noise seed")->capture_default_str();
  add_backend(exec, o);
  add_lookahead(exec, o);

  auto* ev = app.add_subcommand("eval", "Bitrate-error evaluation over clips and targets");
  ev->add_option("inputs", o.inputs, "Clips or corpus directories")->required()->check(CLI::ExistingPath);
  ev->add_option("--model", o.model)->required()->check(CLI::ExistingFile);
  ev->add_option("--target-bitrate", o.targets, "kbps (repeatable; default 300,750,1200,1850,2850,4300)")
      ->delimiter(',')->check(CLI::PositiveNumber);
  ev->add_option("--out-dir", o.out_dir)->required();
  ev->add_option("--seed", o.seed, "Synthetic backend noise seed")->capture_default_str();
  add_backend(ev, o);
  add_lookahead(ev, o);

  auto* report = app.add_subcommand("report", "BD-rate table and error CDF");
  report->add_option("--anchor", o.anchor, "Anchor RD curves CSV")->check(CLI::ExistingFile);
  report->add_option("--test", o.test, "Test RD curves CSV")->check(CLI::ExistingFile);
  report->add_option("--errors", o.errors, "Bitrate errors CSV")->check(CLI::ExistingFile);
  report->add_option("--method", o.method)->check(CLI::IsMember({"cubic", "pchip"}))->capture_default_str();
  report->add_option("--out-dir", o.out_dir, "Write bd_rate.csv, bd_rate.txt and cdf.csv here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "carf: " << e.what() << '\n';
    if (dynamic_cast<const CLI::RequiredError*>(&e) && app.get_subcommands().empty()) {
      err << app.help();
    }
    return kExitUsage;
  }

  try {
    o.la.validate();
    if (synth->parsed()) return cmd_synth(o, out);
    if (corpus->parsed()) return cmd_synth_corpus(o, out);
    if (analyze->parsed()) return cmd_analyze(o, out);
    if (dataset->parsed()) return cmd_dataset_build(o, out);
    if (fit->parsed()) return cmd_fit(o, out);
    if (trn->parsed()) return cmd_train(o, out);
    if (decide->parsed()) return cmd_decide(o, out);
    if (exec->parsed()) return cmd_execute(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (report->parsed()) return cmd_report(o, out);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "carf: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "carf: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace carf::cli
