#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace carf {

inline constexpr int kMbSize = 16;
inline constexpr int kMbSamples = kMbSize * kMbSize;

using MbBlock = std::array<std::uint8_t, kMbSamples>;

// Strided view over a rectangular block of 8-bit samples.
struct BlockView {
  const std::uint8_t* data = nullptr;
  int width = 0;
  int height = 0;
  int stride = 0;

  static BlockView of(const MbBlock& block) { return {block.data(), kMbSize, kMbSize, kMbSize}; }
  std::uint8_t at(int x, int y) const { return data[y * stride + x]; }
};

// Sum of absolute differences. Throws UsageError on dimension mismatch.
std::uint32_t sad(const BlockView& a, const BlockView& b);

// Sum of absolute 8x8 Hadamard-transformed differences over every 8x8
// sub-block, halved (floor). Dimensions must match and be multiples of 8.
std::uint32_t satd(const BlockView& a, const BlockView& b);

inline std::uint32_t sad(const MbBlock& a, const MbBlock& b) {
  return sad(BlockView::of(a), BlockView::of(b));
}
inline std::uint32_t satd(const MbBlock& a, const MbBlock& b) {
  return satd(BlockView::of(a), BlockView::of(b));
}

// Unnormalized sum |H * r * H^T| of one 8x8 residual block.
std::uint32_t hadamard_abs_sum_8x8(std::span<const int, 64> residual);

}  // namespace carf
