#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace carf {

inline constexpr double kCrfMin = 0.0;
inline constexpr double kCrfMax = 51.0;
inline constexpr std::string_view kRateModelUnit = "kbps/ln";

// crf(R) = a ln(R)^2 + b ln(R) + c with R in kbps and natural log.
struct RateModelParams {
  double a = 0;  // >= 0
  double b = 0;  // <= 0
  double c = 0;

  // Raw model value, no clamping or quantization.
  double crf_raw(double kbps) const;
  bool satisfies_sign_convention() const;

  bool operator==(const RateModelParams&) const = default;
};

struct RateObservation {
  double crf = 0;
  double bitrate_kbps = 0;
  bool operator==(const RateObservation&) const = default;
};

// 12, 14, ..., 40.
std::vector<double> default_crf_set();

// Encoder-facing CRF: beyond the model's minimum (a > 0) the value at the
// minimum is used, then clamped to [0, 51] and rounded to 0.1.
double crf_for_bitrate(const RateModelParams& params, double kbps);

// Bitrate at which the decreasing branch of the model reaches `crf`. CRF values
// below the model's minimum map to the bitrate at the minimum.
double bitrate_for_crf(const RateModelParams& params, double crf);

struct NnlsOptions {
  double tolerance = 1e-10;
  int max_iterations = -1;  // -1: 3n
};

struct NnlsResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double residual_norm = 0;
};

// min ||A x - y||_2 subject to x >= 0 (Lawson-Hanson active set).
// Throws NumericError when the iteration limit is reached before the KKT
// conditions hold.
NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& y, const NnlsOptions& options = {});

struct RateFit {
  RateModelParams params;
  double residual_rms = 0;
};

// NNLS over columns [ln(R)^2, -ln(R), 1] against the CRF targets.
RateFit fit_rate_model(std::span<const RateObservation> observations);

// Root-mean-square CRF residual of `params` on the observations.
double rate_model_rms(const RateModelParams& params, std::span<const RateObservation> obs);

}  // namespace carf
