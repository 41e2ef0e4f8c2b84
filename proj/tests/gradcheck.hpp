// Central finite-difference check of nn::gradients, shared by the unit test
// and the acceptance binary.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "carf/nn.hpp"

namespace gradcheck {

struct Case {
  carf::MlpModel model;
  std::vector<carf::TrainingSample> batch;
};

inline carf::GopFeatures random_features(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  carf::FeatureVector v;
  for (double& x : v) x = n(rng);
  return carf::GopFeatures::from_array(v);
}

inline carf::RateModelParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ua(0.02, 0.4), ub(-12, -3), uc(40, 110);
  return {ua(rng), ub(rng), uc(rng)};
}

inline Case random_case(std::uint64_t seed, int h1 = 64, int h2 = 32) {
  std::mt19937_64 rng(seed);
  carf::FeatureScaler scaler;
  scaler.stddev.fill(1.0);
  Case c;
  c.model = carf::init_model(h1, h2, seed, scaler);
  std::normal_distribution<double> n(0, 1);
  // Spread the heads so predictions are not near any label.
  c.model.weights.layers[2].bias << std::log(std::expm1(0.15)) + 0.3 * n(rng), std::log(std::expm1(7.0)) + 0.3 * n(rng),
      70 + 10 * n(rng);
  std::uniform_int_distribution<int> bs(1, 16);
  const int size = bs(rng);
  for (int i = 0; i < size; ++i) c.batch.push_back({random_features(rng), random_params(rng), "s" + std::to_string(i)});
  return c;
}

struct Result {
  double max_rel_error = 0;
  std::string worst;
};

// Relative error |g - fd| / max(|g|, |fd|); components where both are below
// `floor` in magnitude are compared absolutely against floor * 1e-4.
inline Result check(const Case& c, std::span<const double> grid, double h = 1e-5, double floor = 1e-4) {
  const carf::GradientResult g = carf::gradients(c.model, c.batch, grid);
  carf::MlpModel m = c.model;
  Result r;
  for (std::size_t i = 0; i < m.weights.parameter_count(); ++i) {
    const double orig = m.weights.at(i);
    m.weights.at(i) = orig + h;
    const double up = carf::mean_loss(m, c.batch, grid);
    m.weights.at(i) = orig - h;
    const double down = carf::mean_loss(m, c.batch, grid);
    m.weights.at(i) = orig;
    const double fd = (up - down) / (2 * h);
    const double an = g.grad.at(i);
    const double scale = std::max({std::abs(fd), std::abs(an), floor});
    const double rel = std::abs(fd - an) / scale;
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst = m.weights.describe(i);
    }
  }
  return r;
}

}  // namespace gradcheck
