#include "carf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "carf/detail/hash.hpp"
#include "carf/error.hpp"
#include "json.hpp"

namespace carf {

using nlohmann::json;

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::VectorXd softplus_vec(const Eigen::VectorXd& z) { return z.unaryExpr(&softplus); }
Eigen::VectorXd sigmoid_vec(const Eigen::VectorXd& z) { return z.unaryExpr(&sigmoid); }

Eigen::VectorXd to_eigen(const FeatureVector& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct Activations {
  Eigen::VectorXd z1, h1, z2, h2, out;
};

Activations run_layers(const MlpWeights& w, const Eigen::VectorXd& x) {
  Activations a;
  a.z1 = w.layers[0].weight * x + w.layers[0].bias;
  a.h1 = softplus_vec(a.z1);
  a.z2 = w.layers[1].weight * a.h1 + w.layers[1].bias;
  a.h2 = softplus_vec(a.z2);
  a.out = w.layers[2].weight * a.h2 + w.layers[2].bias;
  return a;
}

RateModelParams heads(const Eigen::VectorXd& out) {
  return {softplus(out(0)), -softplus(out(1)), out(2)};
}

void check_finite(const RateModelParams& p) {
  if (!std::isfinite(p.a) || !std::isfinite(p.b) || !std::isfinite(p.c)) {
    throw NumericError("forward: non-finite model output");
  }
}

std::vector<double> resolve_grid(const TrainConfig& config) {
  return config.bitrate_grid.empty() ? default_bitrate_grid() : config.bitrate_grid;
}

json layer_json(const DenseLayer& l) {
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(l.weight.size()));
  for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
  }
  return json{{"rows", l.weight.rows()},
              {"cols", l.weight.cols()},
              {"weight", w},
              {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}};
}

DenseLayer layer_from_json(const json& j, int rows, int cols) {
  if (j.at("rows").get<int>() != rows || j.at("cols").get<int>() != cols) {
    throw DataError("model file: layer shape does not match layer sizes");
  }
  const auto w = j.at("weight").get<std::vector<double>>();
  const auto b = j.at("bias").get<std::vector<double>>();
  if (w.size() != static_cast<std::size_t>(rows) * cols || b.size() != static_cast<std::size_t>(rows)) {
    throw DataError("model file: weight array has the wrong length");
  }
  DenseLayer l;
  l.weight.resize(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r) * cols + c];
  }
  l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
  return l;
}

}  // namespace

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (y <= 2e-22) return -50.0;
  return y > 30.0 ? y : std::log(std::expm1(y));
}

std::vector<double> default_bitrate_grid() {
  std::vector<double> grid(24);
  const double lo = std::log(200.0);
  const double hi = std::log(12000.0);
  for (int i = 0; i < 24; ++i) grid[i] = std::exp(lo + (hi - lo) * i / 23.0);
  grid.front() = 200.0;
  grid.back() = 12000.0;
  return grid;
}

void TrainConfig::validate() const {
  if (epochs <= 0 || batch_size <= 0 || !(learning_rate > 0) || hidden1 <= 0 || hidden2 <= 0) {
    throw UsageError("train config: epochs, batch size, learning rate and hidden sizes must be > 0");
  }
  for (double r : bitrate_grid) {
    if (r < 200.0 || r > 12000.0) throw UsageError("train config: grid points must lie in [200, 12000] kbps");
  }
}

MlpWeights MlpWeights::zeros_like(const MlpWeights& w) {
  MlpWeights z;
  for (std::size_t i = 0; i < 3; ++i) {
    z.layers[i].weight = Eigen::MatrixXd::Zero(w.layers[i].weight.rows(), w.layers[i].weight.cols());
    z.layers[i].bias = Eigen::VectorXd::Zero(w.layers[i].bias.size());
  }
  return z;
}

std::size_t MlpWeights::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

double& MlpWeights::at(std::size_t flat) {
  for (DenseLayer& l : layers) {
    const auto nw = static_cast<std::size_t>(l.weight.size());
    if (flat < nw) {
      const auto cols = static_cast<std::size_t>(l.weight.cols());
      return l.weight(static_cast<Eigen::Index>(flat / cols), static_cast<Eigen::Index>(flat % cols));
    }
    flat -= nw;
    const auto nb = static_cast<std::size_t>(l.bias.size());
    if (flat < nb) return l.bias(static_cast<Eigen::Index>(flat));
    flat -= nb;
  }
  throw UsageError("MlpWeights::at: index out of range");
}

double MlpWeights::at(std::size_t flat) const { return const_cast<MlpWeights*>(this)->at(flat); }

std::string MlpWeights::describe(std::size_t flat) const {
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const DenseLayer& l = layers[li];
    const auto nw = static_cast<std::size_t>(l.weight.size());
    const auto cols = static_cast<std::size_t>(l.weight.cols());
    if (flat < nw) {
      return "layer " + std::to_string(li) + " weight[" + std::to_string(flat / cols) + "][" +
             std::to_string(flat % cols) + "]";
    }
    flat -= nw;
    if (flat < static_cast<std::size_t>(l.bias.size())) {
      return "layer " + std::to_string(li) + " bias[" + std::to_string(flat) + "]";
    }
    flat -= static_cast<std::size_t>(l.bias.size());
  }
  return "out of range";
}

MlpModel init_model(int hidden1, int hidden2, std::uint64_t seed, const FeatureScaler& scaler) {
  MlpModel m;
  m.layer_sizes = {static_cast<int>(kFeatureCount), hidden1, hidden2, 3};
  m.scaler = scaler;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < 3; ++i) {
    const int in = m.layer_sizes[i];
    const int out = m.layer_sizes[i + 1];
    // Glorot-normal; the output layer starts small so the initial prediction
    // sits near the output biases.
    const double sd = std::sqrt(2.0 / (in + out)) * (i == 2 ? 0.1 : 1.0);
    std::normal_distribution<double> dist(0.0, sd);
    DenseLayer& l = m.weights.layers[i];
    l.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) l.weight(r, c) = dist(rng);
    }
    l.bias = Eigen::VectorXd::Zero(out);
  }
  return m;
}

MlpModel constant_model(const RateModelParams& params, const FeatureScaler& scaler, int hidden1,
                        int hidden2) {
  MlpModel m = init_model(hidden1, hidden2, 0, scaler);
  m.weights = MlpWeights::zeros_like(m.weights);
  m.weights.layers[2].bias << softplus_inverse(params.a), softplus_inverse(-params.b), params.c;
  return m;
}

RateModelParams forward_scaled(const MlpModel& model, const Eigen::VectorXd& scaled) {
  const RateModelParams p = heads(run_layers(model.weights, scaled).out);
  check_finite(p);
  return p;
}

RateModelParams forward(const MlpModel& model, const GopFeatures& features, int feature_version) {
  return forward_scaled(model, to_eigen(apply_scaler(model.scaler, features, feature_version)));
}

double crf_set_loss(const RateModelParams& pred, const RateModelParams& label,
                    std::span<const double> grid) {
  if (grid.empty()) throw UsageError("crf_set_loss: empty bitrate grid");
  double sum = 0;
  for (double r : grid) sum += std::abs(label.crf_raw(r) - pred.crf_raw(r));
  return sum / static_cast<double>(grid.size());
}

GradientResult gradients(const MlpModel& model, std::span<const TrainingSample> batch,
                         std::span<const double> grid) {
  if (batch.empty()) throw UsageError("gradients: empty batch");
  if (grid.empty()) throw UsageError("gradients: empty bitrate grid");
  GradientResult res;
  res.grad = MlpWeights::zeros_like(model.weights);
  const auto& W = model.weights.layers;
  auto& G = res.grad.layers;
  const double n_grid = static_cast<double>(grid.size());
  std::vector<double> logs(grid.size());
  std::transform(grid.begin(), grid.end(), logs.begin(), [](double r) { return std::log(r); });

  for (const TrainingSample& s : batch) {
    const Eigen::VectorXd x = to_eigen(model.scaler.apply(s.features));
    const Activations act = run_layers(model.weights, x);
    const RateModelParams p = heads(act.out);

    double da = 0, db = 0, dc = 0, loss = 0;
    for (double l : logs) {
      const double label = s.label.a * l * l + s.label.b * l + s.label.c;
      const double pred = p.a * l * l + p.b * l + p.c;
      const double diff = pred - label;
      loss += std::abs(diff);
      const double g = (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0)) / n_grid;
      da += g * l * l;
      db += g * l;
      dc += g;
    }
    res.loss += loss / n_grid;

    Eigen::Vector3d dout(da * sigmoid(act.out(0)), -db * sigmoid(act.out(1)), dc);
    G[2].weight.noalias() += dout * act.h2.transpose();
    G[2].bias += dout;
    const Eigen::VectorXd dz2 = (W[2].weight.transpose() * dout).cwiseProduct(sigmoid_vec(act.z2));
    G[1].weight.noalias() += dz2 * act.h1.transpose();
    G[1].bias += dz2;
    const Eigen::VectorXd dz1 = (W[1].weight.transpose() * dz2).cwiseProduct(sigmoid_vec(act.z1));
    G[0].weight.noalias() += dz1 * x.transpose();
    G[0].bias += dz1;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (DenseLayer& l : G) {
    l.weight *= inv;
    l.bias *= inv;
  }
  res.loss *= inv;
  for (std::size_t i = 0; i < res.grad.parameter_count(); ++i) {
    if (!std::isfinite(res.grad.at(i))) {
      throw NumericError("gradients: non-finite value at " + res.grad.describe(i));
    }
  }
  return res;
}

double mean_loss(const MlpModel& model, std::span<const TrainingSample> samples,
                 std::span<const double> grid) {
  if (samples.empty()) return 0.0;
  double sum = 0;
  for (const TrainingSample& s : samples) sum += crf_set_loss(forward(model, s.features), s.label, grid);
  return sum / static_cast<double>(samples.size());
}

TrainResult train(std::span<const TrainingSample> train_set,
                  std::span<const TrainingSample> val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.size() < 10) throw UsageError("train: need at least 10 training samples");
  const std::vector<double> grid = resolve_grid(config);

  std::vector<GopFeatures> feats;
  feats.reserve(train_set.size());
  RateModelParams mean_label;
  for (const TrainingSample& s : train_set) {
    feats.push_back(s.features);
    mean_label.a += s.label.a;
    mean_label.b += s.label.b;
    mean_label.c += s.label.c;
  }
  const double n = static_cast<double>(train_set.size());
  mean_label = {mean_label.a / n, mean_label.b / n, mean_label.c / n};

  MlpModel model = init_model(config.hidden1, config.hidden2, config.seed, fit_scaler(feats));
  model.weights.layers[2].bias << softplus_inverse(mean_label.a), softplus_inverse(-mean_label.b),
      mean_label.c;

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  MlpWeights m1 = MlpWeights::zeros_like(model.weights);
  MlpWeights m2 = MlpWeights::zeros_like(model.weights);
  const std::size_t n_params = model.weights.parameter_count();
  std::int64_t step = 0;

  std::mt19937_64 rng(detail::hash_of(config.seed, 0x5348554646ULL));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<TrainingSample> batch;

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(train_set[order[k]]);
      const GradientResult g = gradients(model, batch, grid);
      ++step;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t i = 0; i < n_params; ++i) {
        const double gi = g.grad.at(i);
        double& a = m1.at(i);
        double& b = m2.at(i);
        a = kBeta1 * a + (1 - kBeta1) * gi;
        b = kBeta2 * b + (1 - kBeta2) * gi * gi;
        model.weights.at(i) -= config.learning_rate * (a / bc1) / (std::sqrt(b / bc2) + kEps);
      }
    }
    EpochLog entry{epoch, mean_loss(model, train_set, grid), 0.0};
    entry.val_loss = val_set.empty() ? entry.train_loss : mean_loss(model, val_set, grid);
    if (!std::isfinite(entry.train_loss) || !std::isfinite(entry.val_loss)) {
      throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
    }
    result.log.push_back(entry);
    if (entry.val_loss < result.best_val_loss) {
      result.best_val_loss = entry.val_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

void write_train_log_csv(std::span<const EpochLog> log, std::ostream& out) {
  out << "epoch,train_loss,val_loss\n";
  const auto old = out.precision(10);
  for (const EpochLog& e : log) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
  out.precision(old);
}

std::string model_to_json(const MlpModel& model) {
  json j;
  j["format"] = "carf-mlp";
  j["version"] = model.format_version;
  j["layer_sizes"] = model.layer_sizes;
  j["activation"] = model.activation;
  j["heads"] = {"softplus", "neg_softplus", "identity"};
  j["seed"] = model.seed;
  j["layers"] = json::array();
  for (const DenseLayer& l : model.weights.layers) j["layers"].push_back(layer_json(l));
  j["scaler"] = {{"version", model.scaler.version},
                 {"mean", model.scaler.mean},
                 {"std", model.scaler.stddev},
                 {"features", std::vector<std::string>(GopFeatures::names().begin(),
                                                       GopFeatures::names().end())}};
  return j.dump(1);
}

MlpModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("model file is corrupt: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "carf-mlp") throw DataError("model file: unknown format");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw DataError("model file: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kModelFormatVersion) + ")");
    }
    MlpModel m;
    m.format_version = version;
    m.layer_sizes = j.at("layer_sizes").get<std::array<int, 4>>();
    if (m.layer_sizes[0] != static_cast<int>(kFeatureCount) || m.layer_sizes[3] != 3 ||
        m.layer_sizes[1] <= 0 || m.layer_sizes[2] <= 0) {
      throw DataError("model file: unsupported layer sizes");
    }
    m.activation = j.at("activation").get<std::string>();
    if (m.activation != "softplus") throw DataError("model file: unsupported activation " + m.activation);
    m.seed = j.at("seed").get<std::uint64_t>();
    const json& layers = j.at("layers");
    if (!layers.is_array() || layers.size() != 3) throw DataError("model file: expected 3 layers");
    for (std::size_t i = 0; i < 3; ++i) {
      m.weights.layers[i] = layer_from_json(layers[i], m.layer_sizes[i + 1], m.layer_sizes[i]);
    }
    const json& sc = j.at("scaler");
    m.scaler.version = sc.at("version").get<int>();
    m.scaler.mean = sc.at("mean").get<FeatureVector>();
    m.scaler.stddev = sc.at("std").get<FeatureVector>();
    for (double s : m.scaler.stddev) {
      if (!(s > 0)) throw DataError("model file: scaler std must be positive");
    }
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("model file is corrupt: ") + e.what());
  }
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << model_to_json(model) << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

std::string model_fingerprint(const MlpModel& model) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << detail::hash_string(model_to_json(model));
  return out.str();
}

}  // namespace carf
