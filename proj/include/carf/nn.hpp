#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "carf/features.hpp"
#include "carf/rate_model.hpp"

namespace carf {

inline constexpr int kModelFormatVersion = 1;

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Weights of the 12 -> H1 -> H2 -> 3 network. Also used to hold gradients
// and optimizer moments of the same shape.
struct MlpWeights {
  std::array<DenseLayer, 3> layers;

  static MlpWeights zeros_like(const MlpWeights& w);
  std::size_t parameter_count() const;
  // Flat view in layer order: weight (row-major), then bias.
  double& at(std::size_t flat_index);
  double at(std::size_t flat_index) const;
  std::string describe(std::size_t flat_index) const;
};

// Hidden activation is softplus. Output heads: a = softplus(z0),
// b = -softplus(z1), c = z2.
struct MlpModel {
  std::array<int, 4> layer_sizes{static_cast<int>(kFeatureCount), 64, 32, 3};
  MlpWeights weights;
  FeatureScaler scaler;
  std::string activation = "softplus";
  std::uint64_t seed = 0;
  int format_version = kModelFormatVersion;
};

struct TrainingSample {
  GopFeatures features;
  RateModelParams label;
  std::string clip_id;
};

struct TrainConfig {
  std::vector<double> bitrate_grid;  // empty: default_bitrate_grid()
  int epochs = 300;
  int batch_size = 32;
  double learning_rate = 2e-3;
  std::uint64_t seed = 1;
  int hidden1 = 64;
  int hidden2 = 32;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
};

struct TrainResult {
  MlpModel model;  // weights of the epoch with the lowest validation loss
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_loss = 0;
};

// 24 log-spaced points over [200, 12000] kbps.
std::vector<double> default_bitrate_grid();

double softplus(double x);
double softplus_inverse(double y);

MlpModel init_model(int hidden1, int hidden2, std::uint64_t seed, const FeatureScaler& scaler);

// Zero weights; output biases chosen so the heads reproduce `params` (a or b
// equal to zero map to a bias of -50, i.e. ~2e-22).
MlpModel constant_model(const RateModelParams& params, const FeatureScaler& scaler,
                        int hidden1 = 64, int hidden2 = 32);

RateModelParams forward(const MlpModel& model, const GopFeatures& features,
                        int feature_version = kFeatureVersion);
RateModelParams forward_scaled(const MlpModel& model, const Eigen::VectorXd& scaled);

// Mean absolute CRF difference over the grid; both sides use the raw model.
double crf_set_loss(const RateModelParams& pred, const RateModelParams& label,
                    std::span<const double> grid);

struct GradientResult {
  MlpWeights grad;
  double loss = 0;  // mean crf_set_loss over the batch
};

// Exact reverse-mode gradient of the batch-mean loss. Samples must carry
// features in the model's scaler space (they are scaled here).
GradientResult gradients(const MlpModel& model, std::span<const TrainingSample> batch,
                         std::span<const double> grid);

double mean_loss(const MlpModel& model, std::span<const TrainingSample> samples,
                 std::span<const double> grid);

// Mini-batch Adam. Fits the scaler on `train_set`; keeps the best epoch by
// validation loss (training loss when `val_set` is empty).
TrainResult train(std::span<const TrainingSample> train_set,
                  std::span<const TrainingSample> val_set, const TrainConfig& config);

void write_train_log_csv(std::span<const EpochLog> log, std::ostream& out);

std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);
// 16 hex digits of FNV-1a over the serialized model.
std::string model_fingerprint(const MlpModel& model);

}  // namespace carf
