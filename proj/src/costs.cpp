#include "carf/costs.hpp"

#include <cstdlib>
#include <string>

#include "carf/error.hpp"

namespace carf {

namespace {

void check_same_shape(const BlockView& a, const BlockView& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw UsageError(std::string(what) + ": block dimension mismatch (" + std::to_string(a.width) +
                     "x" + std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height) + ")");
  }
}

// In-place 8-point Walsh-Hadamard butterfly (natural order is irrelevant for
// the absolute sum).
inline void wht8(int* v, int step) {
  int t[8];
  for (int i = 0; i < 8; ++i) t[i] = v[i * step];
  for (int len = 1; len < 8; len <<= 1) {
    for (int i = 0; i < 8; i += 2 * len) {
      for (int j = i; j < i + len; ++j) {
        const int x = t[j];
        const int y = t[j + len];
        t[j] = x + y;
        t[j + len] = x - y;
      }
    }
  }
  for (int i = 0; i < 8; ++i) v[i * step] = t[i];
}

}  // namespace

std::uint32_t sad(const BlockView& a, const BlockView& b) {
  check_same_shape(a, b, "sad");
  std::uint32_t sum = 0;
  for (int y = 0; y < a.height; ++y) {
    const std::uint8_t* ra = a.data + y * a.stride;
    const std::uint8_t* rb = b.data + y * b.stride;
    for (int x = 0; x < a.width; ++x) sum += static_cast<std::uint32_t>(std::abs(ra[x] - rb[x]));
  }
  return sum;
}

std::uint32_t hadamard_abs_sum_8x8(std::span<const int, 64> residual) {
  int m[64];
  for (int i = 0; i < 64; ++i) m[i] = residual[i];
  for (int r = 0; r < 8; ++r) wht8(m + 8 * r, 1);
  for (int c = 0; c < 8; ++c) wht8(m + c, 8);
  std::uint32_t sum = 0;
  for (int v : m) sum += static_cast<std::uint32_t>(std::abs(v));
  return sum;
}

std::uint32_t satd(const BlockView& a, const BlockView& b) {
  check_same_shape(a, b, "satd");
  if (a.width % 8 != 0 || a.height % 8 != 0) {
    throw UsageError("satd: block dimensions must be multiples of 8");
  }
  std::uint64_t total = 0;
  int residual[64];
  for (int by = 0; by < a.height; by += 8) {
    for (int bx = 0; bx < a.width; bx += 8) {
      for (int y = 0; y < 8; ++y) {
        const std::uint8_t* ra = a.data + (by + y) * a.stride + bx;
        const std::uint8_t* rb = b.data + (by + y) * b.stride + bx;
        for (int x = 0; x < 8; ++x) residual[8 * y + x] = ra[x] - rb[x];
      }
      total += hadamard_abs_sum_8x8(std::span<const int, 64>(residual, 64));
    }
  }
  return static_cast<std::uint32_t>(total / 2);
}

}  // namespace carf
