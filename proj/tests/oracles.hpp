// Independent reference implementations used by the tests. Deliberately
// naive: direct loops, explicit matrices, brute-force enumeration.
#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <random>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "carf/media_io.hpp"

namespace oracle {

inline std::uint8_t px(const carf::Plane& p, int x, int y) {
  x = std::clamp(x, 0, p.width - 1);
  y = std::clamp(y, 0, p.height - 1);
  return p.data[static_cast<std::size_t>(y) * p.width + x];
}

inline std::uint32_t sad16(const carf::Plane& a, int ax, int ay, const carf::Plane& b, int bx, int by) {
  std::uint32_t s = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) s += std::abs(int(px(a, ax + x, ay + y)) - int(px(b, bx + x, by + y)));
  return s;
}

// Sylvester-construction 8x8 Hadamard matrix.
inline Eigen::Matrix<double, 8, 8> hadamard8() {
  Eigen::Matrix<double, 8, 8> h;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) h(i, j) = (std::popcount(unsigned(i & j)) % 2) ? -1.0 : 1.0;
  return h;
}

inline double hadamard_abs_sum(const Eigen::Matrix<double, 8, 8>& r) {
  const auto h = hadamard8();
  return (h * r * h.transpose()).cwiseAbs().sum();
}

// SATD of two 16x16 blocks: explicit H R H^T per 8x8 quadrant, total halved.
inline std::uint32_t satd16(const carf::Plane& a, int ax, int ay, const carf::Plane& b, int bx, int by) {
  double total = 0;
  for (int qy = 0; qy < 16; qy += 8)
    for (int qx = 0; qx < 16; qx += 8) {
      Eigen::Matrix<double, 8, 8> r;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          r(y, x) = int(px(a, ax + qx + x, ay + qy + y)) - int(px(b, bx + qx + x, by + qy + y));
      total += hadamard_abs_sum(r);
    }
  return static_cast<std::uint32_t>(std::llround(total)) / 2;
}

struct FullSearch {
  int dx = 0, dy = 0;
  std::uint32_t cost = 0;
};

// Every candidate inside the search window that keeps the reference block in
// the picture (or the clamped origin when the picture is smaller than a
// block). Ties: smaller |dx|+|dy|, then |dy|, |dx|, dy, dx.
inline FullSearch full_search(const carf::Plane& cur, const carf::Plane& ref, int mb_x, int mb_y, int range) {
  const int x0 = mb_x * 16, y0 = mb_y * 16;
  const int lo_x = std::max(-range, -x0), hi_x = std::min(range, std::max(ref.width - 16 - x0, 0));
  const int lo_y = std::max(-range, -y0), hi_y = std::min(range, std::max(ref.height - 16 - y0, 0));
  auto key = [](int dx, int dy) { return std::make_tuple(std::abs(dx) + std::abs(dy), std::abs(dy), std::abs(dx), dy, dx); };
  FullSearch best{0, 0, std::numeric_limits<std::uint32_t>::max()};
  for (int dy = lo_y; dy <= hi_y; ++dy)
    for (int dx = lo_x; dx <= hi_x; ++dx) {
      const std::uint32_t c = satd16(cur, x0, y0, ref, x0 + dx, y0 + dy);
      if (c < best.cost || (c == best.cost && key(dx, dy) < key(best.dx, best.dy))) best = {dx, dy, c};
    }
  return best;
}

// Ordinary least squares through the normal equations.
inline Eigen::VectorXd normal_equations(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  const Eigen::MatrixXd ata = a.transpose() * a;
  return ata.ldlt().solve(a.transpose() * y);
}

// NNLS by enumerating every passive set: least squares on the subset,
// keep feasible solutions, return the one with the smallest residual.
inline Eigen::VectorXd nnls_enumerate(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(a.cols());
  Eigen::VectorXd best = Eigen::VectorXd::Zero(n);
  double best_res = (y).squaredNorm();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<int> cols;
    for (int j = 0; j < n; ++j)
      if (mask & (1u << j)) cols.push_back(j);
    Eigen::MatrixXd sub(a.rows(), cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) sub.col(k) = a.col(cols[k]);
    const Eigen::VectorXd xs = sub.colPivHouseholderQr().solve(y);
    if ((xs.array() < 0).any()) continue;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < cols.size(); ++k) x(cols[k]) = xs(k);
    const double res = (a * x - y).squaredNorm();
    if (res < best_res) {
      best_res = res;
      best = x;
    }
  }
  return best;
}

// Trapezoid integral of f over [lo, hi] with n intervals.
inline double trapezoid(const std::function<double(double)>& f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double s = 0.5 * (f(lo) + f(hi));
  for (int i = 1; i < n; ++i) s += f(lo + i * h);
  return s * h;
}

// Two-pass (Welford-style running update) population coefficient of variation.
inline double welford_cv(const std::vector<double>& xs) {
  double mean = 0, m2 = 0;
  std::size_t n = 0;
  for (double x : xs) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  return std::sqrt(m2 / static_cast<double>(n)) / mean;
}

// Mean of each 2x2 block, rounded half up.
inline carf::Plane downsample(const carf::Plane& p) {
  carf::Plane out(p.width / 2, p.height / 2);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double m = (px(p, 2 * x, 2 * y) + px(p, 2 * x + 1, 2 * y) + px(p, 2 * x, 2 * y + 1) +
                        px(p, 2 * x + 1, 2 * y + 1)) / 4.0;
      out.data[static_cast<std::size_t>(y) * out.width + x] = static_cast<std::uint8_t>(std::floor(m + 0.5));
    }
  return out;
}

inline carf::Plane random_plane(std::mt19937_64& rng, int w, int h) {
  carf::Plane p(w, h);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : p.data) v = static_cast<std::uint8_t>(d(rng));
  return p;
}

}  // namespace oracle
