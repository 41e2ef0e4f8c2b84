#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace carf {

struct Rational {
  int num = 25;
  int den = 1;

  double value() const { return static_cast<double>(num) / den; }
  bool operator==(const Rational&) const = default;
};

// One 8-bit sample plane, row-major, no padding.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Plane() = default;
  Plane(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

  // Edge-replicating fetch for coordinates outside the picture.
  std::uint8_t clamped(int x, int y) const {
    x = x < 0 ? 0 : (x >= width ? width - 1 : x);
    y = y < 0 ? 0 : (y >= height ? height - 1 : y);
    return at(x, y);
  }

  bool operator==(const Plane&) const = default;
};

// 4:2:0 picture: chroma planes are half size in each dimension.
struct Frame {
  int index = 0;
  Plane y;
  Plane u;
  Plane v;

  Frame() = default;
  Frame(int idx, int width, int height, std::uint8_t luma = 0, std::uint8_t chroma = 128)
      : index(idx), y(width, height, luma), u(width / 2, height / 2, chroma),
        v(width / 2, height / 2, chroma) {}

  int width() const { return y.width; }
  int height() const { return y.height; }
  bool operator==(const Frame&) const = default;
};

struct VideoSequence {
  int width = 0;
  int height = 0;
  Rational fps;
  std::vector<Frame> frames;
  std::optional<double> source_bitrate_kbps;

  double duration_seconds() const { return frames.size() / fps.value(); }

  // Throws DataError when dimensions, frame geometry or fps are inconsistent.
  void validate() const;
};

// --- Y4M ------------------------------------------------------------------
// Only 8-bit 4:2:0 (C420, C420jpeg, C420paldv, C420mpeg2 or no C tag) is
// accepted. An `XSOURCE_KBPS=<value>` comment tag carries source_bitrate.

VideoSequence parse_y4m(std::span<const std::uint8_t> bytes);
VideoSequence read_y4m(const std::filesystem::path& path);

void write_y4m(const VideoSequence& seq, std::ostream& out);
void write_y4m(const VideoSequence& seq, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_y4m(const VideoSequence& seq);

// Half-resolution copy; each sample is the round-half-up mean of its 2x2 block.
Plane downsample_half(const Plane& plane);
Frame downsample_half(const Frame& frame);

// --- synthetic sequences ---------------------------------------------------

struct FlatPattern {
  int luma = 128;
};

// Independent uniform noise in every frame.
struct NoisePattern {
  std::uint64_t seed = 1;
  int mean = 128;
  int amplitude = 64;
};

// Smooth sinusoidal texture translated by (dx, dy) luma pixels per frame:
// frame t+1 at (x, y) equals frame t at (x - dx, y - dy). `detail` adds
// texture-space noise that moves with the content.
struct TexturePattern {
  int dx = 0;
  int dy = 0;
  std::uint64_t seed = 1;
  int mean = 128;
  int amplitude = 60;
  int detail = 0;
};

using BasicPattern = std::variant<FlatPattern, NoisePattern, TexturePattern>;

// Frames [0, at) come from `before`, frames [at, ...) from `after` (with the
// after-pattern's own clock starting at 0).
struct HardCutPattern {
  int at = 1;
  BasicPattern before;
  BasicPattern after;
};

using Pattern = std::variant<FlatPattern, NoisePattern, TexturePattern, HardCutPattern>;

struct SyntheticSpec {
  int width = 64;
  int height = 64;
  int frames = 1;
  Rational fps{25, 1};
  Pattern pattern;
  std::optional<double> source_bitrate_kbps;
};

VideoSequence synth_sequence(const SyntheticSpec& spec);

// Renders a single frame of a basic pattern at local time t.
Frame render_pattern(const BasicPattern& pattern, int width, int height, int t, int index);

}  // namespace carf
