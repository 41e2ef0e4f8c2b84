#include "carf/rate_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "carf/error.hpp"

namespace carf {

double RateModelParams::crf_raw(double kbps) const {
  const double l = std::log(kbps);
  return a * l * l + b * l + c;
}

bool RateModelParams::satisfies_sign_convention() const {
  return std::isfinite(a) && std::isfinite(b) && std::isfinite(c) && a >= 0.0 && b <= 0.0;
}

std::vector<double> default_crf_set() {
  std::vector<double> crfs;
  for (int crf = 12; crf <= 40; crf += 2) crfs.push_back(crf);
  return crfs;
}

double crf_for_bitrate(const RateModelParams& params, double kbps) {
  if (!(kbps > 0)) throw UsageError("crf_for_bitrate: bitrate must be positive");
  double l = std::log(kbps);
  if (params.a > 0) l = std::min(l, -params.b / (2.0 * params.a));
  const double crf = params.a * l * l + params.b * l + params.c;
  if (std::isnan(crf)) throw NumericError("crf_for_bitrate: non-finite model value");
  return std::round(std::clamp(crf, kCrfMin, kCrfMax) * 10.0) / 10.0;
}

double bitrate_for_crf(const RateModelParams& p, double crf) {
  if (p.a > 0) {
    const double vertex = -p.b / (2.0 * p.a);
    const double disc = p.b * p.b - 4.0 * p.a * (p.c - crf);
    if (disc <= 0) return std::exp(vertex);
    // smaller root (decreasing branch)
    const double q = -0.5 * (p.b - std::sqrt(disc));
    return std::exp(std::min((p.c - crf) / q, vertex));
  }
  if (p.b < 0) return std::exp((crf - p.c) / p.b);
  throw UsageError("bitrate_for_crf: model is constant in bitrate");
}

NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& y, const NnlsOptions& options) {
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  if (y.size() != m) throw UsageError("nnls: design and target sizes differ");
  if (m < n) throw UsageError("nnls: need at least as many rows as columns");
  if (!A.allFinite() || !y.allFinite()) throw UsageError("nnls: non-finite input");

  const int max_iter = options.max_iterations > 0 ? options.max_iterations : static_cast<int>(3 * n);
  // Dual-feasibility threshold relative to the problem's scale.
  const double tol = options.tolerance * std::max(1.0, (A.transpose() * y).cwiseAbs().maxCoeff());

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(n, false);

  auto solve_passive = [&](Eigen::VectorXd& s) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (passive[j]) idx.push_back(j);
    }
    Eigen::MatrixXd Ap(m, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(static_cast<Eigen::Index>(k)) = A.col(idx[k]);
    const Eigen::VectorXd sp = Ap.colPivHouseholderQr().solve(y);
    s.setZero(n);
    for (std::size_t k = 0; k < idx.size(); ++k) s(idx[k]) = sp(static_cast<Eigen::Index>(k));
  };

  Eigen::VectorXd w = A.transpose() * (y - A * x);
  int iter = 0;
  for (;;) {
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[j] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) break;
    if (iter >= max_iter) {
      throw NumericError("nnls: no convergence after " + std::to_string(iter) + " iterations");
    }
    ++iter;
    passive[best] = true;

    Eigen::VectorXd s;
    for (Eigen::Index inner = 0; inner <= n; ++inner) {
      solve_passive(s);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && s(j) <= 0) feasible = false;
      }
      if (feasible) break;
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && s(j) <= 0) alpha = std::min(alpha, x(j) / (x(j) - s(j)));
      }
      x += alpha * (s - x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && x(j) <= options.tolerance) {
          passive[j] = false;
          x(j) = 0;
        }
      }
      s = x;
    }
    x = s;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[j]) x(j) = 0;
    }
    w = A.transpose() * (y - A * x);
  }
  if (!x.allFinite()) throw NumericError("nnls: non-finite solution");
  return {x, iter, (A * x - y).norm()};
}

double rate_model_rms(const RateModelParams& params, std::span<const RateObservation> obs) {
  if (obs.empty()) return 0.0;
  double ss = 0;
  for (const RateObservation& o : obs) {
    const double r = params.crf_raw(o.bitrate_kbps) - o.crf;
    ss += r * r;
  }
  return std::sqrt(ss / static_cast<double>(obs.size()));
}

RateFit fit_rate_model(std::span<const RateObservation> observations) {
  std::set<double> distinct;
  for (const RateObservation& o : observations) {
    if (!(o.bitrate_kbps > 0) || !std::isfinite(o.bitrate_kbps) || !std::isfinite(o.crf)) {
      throw DataError("fit_rate_model: observation bitrate must be positive and finite");
    }
    distinct.insert(o.bitrate_kbps);
  }
  if (distinct.size() == 1) throw DataError("fit_rate_model: degenerate design (all bitrates equal)");
  if (observations.size() < 3 || distinct.size() < 3) {
    throw DataError("fit_rate_model: need at least 3 distinct bitrates");
  }
  const auto m = static_cast<Eigen::Index>(observations.size());
  Eigen::MatrixXd A(m, 3);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double l = std::log(observations[i].bitrate_kbps);
    A(i, 0) = l * l;
    A(i, 1) = -l;
    A(i, 2) = 1.0;
    y(i) = observations[i].crf;
  }
  const NnlsResult r = nnls(A, y);
  RateFit fit;
  fit.params = {r.x(0), -r.x(1), r.x(2)};
  // no negative zero
  if (fit.params.b == 0.0) fit.params.b = 0.0;
  fit.residual_rms = rate_model_rms(fit.params, observations);
  return fit;
}

}  // namespace carf
