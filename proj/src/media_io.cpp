#include "carf/media_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string_view>

#include "carf/detail/hash.hpp"
#include "carf/error.hpp"

namespace carf {

namespace {

constexpr std::string_view kSignature = "YUV4MPEG2";
constexpr std::string_view kFrameMarker = "FRAME";
constexpr std::string_view kSourceTag = "XSOURCE_KBPS=";

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::size_t frame_payload_size(int width, int height) {
  const std::size_t luma = static_cast<std::size_t>(width) * height;
  return luma + 2 * (luma / 4);
}

std::uint8_t clamp_sample(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

void VideoSequence::validate() const {
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
    throw DataError("video dimensions must be positive and even, got " + std::to_string(width) +
                    "x" + std::to_string(height));
  }
  if (fps.num <= 0 || fps.den <= 0) throw DataError("frame rate must be positive");
  for (const Frame& f : frames) {
    if (f.y.width != width || f.y.height != height || f.u.width != width / 2 ||
        f.u.height != height / 2 || f.v.width != width / 2 || f.v.height != height / 2) {
      throw DataError("frame " + std::to_string(f.index) + " has inconsistent plane geometry");
    }
  }
}

VideoSequence parse_y4m(std::span<const std::uint8_t> bytes) {
  const std::string_view data(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (data.substr(0, kSignature.size()) != kSignature ||
      (data.size() > kSignature.size() && data[kSignature.size()] != ' ' &&
       data[kSignature.size()] != '\n')) {
    throw Y4mError("malformed header: missing YUV4MPEG2 signature", 0);
  }
  const std::size_t header_end = data.find('\n');
  if (header_end == std::string_view::npos) {
    throw Y4mError("malformed header: no terminating newline", data.size());
  }

  VideoSequence seq;
  seq.width = -1;
  seq.height = -1;
  std::size_t pos = kSignature.size();
  while (pos < header_end) {
    if (data[pos] == ' ') {
      ++pos;
      continue;
    }
    std::size_t token_end = data.find(' ', pos);
    if (token_end == std::string_view::npos || token_end > header_end) token_end = header_end;
    const std::string_view token = data.substr(pos, token_end - pos);
    const std::string_view value = token.substr(1);
    switch (token[0]) {
      case 'W':
        if (!parse_number(value, seq.width) || seq.width <= 0) {
          throw Y4mError("malformed header: bad width '" + std::string(token) + "'", pos);
        }
        break;
      case 'H':
        if (!parse_number(value, seq.height) || seq.height <= 0) {
          throw Y4mError("malformed header: bad height '" + std::string(token) + "'", pos);
        }
        break;
      case 'F': {
        const std::size_t colon = value.find(':');
        if (colon == std::string_view::npos || !parse_number(value.substr(0, colon), seq.fps.num) ||
            !parse_number(value.substr(colon + 1), seq.fps.den) || seq.fps.num <= 0 ||
            seq.fps.den <= 0) {
          throw Y4mError("malformed header: bad frame rate '" + std::string(token) + "'", pos);
        }
        break;
      }
      case 'C':
        if (value != "420" && value != "420jpeg" && value != "420paldv" && value != "420mpeg2") {
          throw Y4mError("unsupported color space '" + std::string(value) + "'", pos);
        }
        break;
      case 'X':
        if (token.starts_with(kSourceTag)) {
          double kbps = 0;
          if (!parse_number(token.substr(kSourceTag.size()), kbps) || !(kbps > 0)) {
            throw Y4mError("malformed header: bad source bitrate tag", pos);
          }
          seq.source_bitrate_kbps = kbps;
        }
        break;
      case 'I':
      case 'A':
        break;
      default:
        throw Y4mError("malformed header: unknown tag '" + std::string(token) + "'", pos);
    }
    pos = token_end;
  }
  if (seq.width <= 0 || seq.height <= 0) {
    throw Y4mError("malformed header: missing width or height", header_end);
  }
  if (seq.width % 2 != 0 || seq.height % 2 != 0) {
    throw Y4mError("malformed header: 4:2:0 requires even dimensions", header_end);
  }

  const std::size_t payload = frame_payload_size(seq.width, seq.height);
  const std::size_t luma_size = static_cast<std::size_t>(seq.width) * seq.height;
  pos = header_end + 1;
  while (pos < data.size()) {
    if (data.substr(pos, kFrameMarker.size()) != kFrameMarker) {
      throw Y4mError("malformed frame marker", pos);
    }
    const std::size_t marker_end = data.find('\n', pos);
    if (marker_end == std::string_view::npos) {
      throw Y4mError("truncated frame header", pos);
    }
    const std::size_t start = marker_end + 1;
    if (data.size() - start < payload) {
      throw Y4mError("truncated frame payload", start);
    }
    Frame frame(static_cast<int>(seq.frames.size()), seq.width, seq.height);
    const std::uint8_t* src = bytes.data() + start;
    std::memcpy(frame.y.data.data(), src, luma_size);
    std::memcpy(frame.u.data.data(), src + luma_size, luma_size / 4);
    std::memcpy(frame.v.data.data(), src + luma_size + luma_size / 4, luma_size / 4);
    seq.frames.push_back(std::move(frame));
    pos = start + payload;
  }
  if (seq.frames.empty()) throw Y4mError("no frames", pos);
  return seq;
}

VideoSequence read_y4m(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_y4m(bytes);
}

void write_y4m(const VideoSequence& seq, std::ostream& out) {
  seq.validate();
  out << kSignature << " W" << seq.width << " H" << seq.height << " F" << seq.fps.num << ':'
      << seq.fps.den << " Ip A1:1 C420jpeg";
  if (seq.source_bitrate_kbps) {
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), *seq.source_bitrate_kbps);
    out << ' ' << kSourceTag << std::string_view(buf.data(), res.ptr - buf.data());
  }
  out << '\n';
  for (const Frame& f : seq.frames) {
    out << kFrameMarker << '\n';
    for (const Plane* p : {&f.y, &f.u, &f.v}) {
      out.write(reinterpret_cast<const char*>(p->data.data()),
                static_cast<std::streamsize>(p->data.size()));
    }
  }
}

void write_y4m(const VideoSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_y4m(seq, out);
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<std::uint8_t> encode_y4m(const VideoSequence& seq) {
  std::ostringstream out(std::ios::binary);
  write_y4m(seq, out);
  const std::string s = out.str();
  return {s.begin(), s.end()};
}

Plane downsample_half(const Plane& plane) {
  if (plane.width % 2 != 0 || plane.height % 2 != 0) {
    throw UsageError("downsample_half requires even plane dimensions, got " +
                     std::to_string(plane.width) + "x" + std::to_string(plane.height));
  }
  Plane out(plane.width / 2, plane.height / 2);
  for (int y = 0; y < out.height; ++y) {
    const std::uint8_t* r0 = &plane.data[static_cast<std::size_t>(2 * y) * plane.width];
    const std::uint8_t* r1 = r0 + plane.width;
    std::uint8_t* dst = &out.data[static_cast<std::size_t>(y) * out.width];
    for (int x = 0; x < out.width; ++x) {
      const int s = r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1];
      dst[x] = static_cast<std::uint8_t>((s + 2) >> 2);
    }
  }
  return out;
}

Frame downsample_half(const Frame& frame) {
  Frame out;
  out.index = frame.index;
  out.y = downsample_half(frame.y);
  out.u = downsample_half(frame.u);
  out.v = downsample_half(frame.v);
  return out;
}

namespace {

struct Wave {
  double kx;  // radians per pixel
  double ky;
  double phase;
  double weight;
};

// Eight evenly spread directions, wavelengths 20..40 px.
constexpr int kTextureWaves = 8;

std::array<Wave, kTextureWaves> texture_waves(std::uint64_t seed) {
  std::array<Wave, kTextureWaves> waves{};
  double total = 0;
  const double base = detail::unit_interval(detail::hash_of(seed, 2, 0));
  for (int k = 0; k < kTextureWaves; ++k) {
    const double wavelength = 20.0 + 20.0 * detail::unit_interval(detail::hash_of(seed, 1, k));
    const double jitter = (detail::unit_interval(detail::hash_of(seed, 2, k + 1)) - 0.5) / (2.0 * kTextureWaves);
    const double angle = std::numbers::pi * (base + static_cast<double>(k) / kTextureWaves + jitter);
    const double freq = 2.0 * std::numbers::pi / wavelength;
    waves[k].kx = freq * std::cos(angle);
    waves[k].ky = freq * std::sin(angle);
    waves[k].phase = 2.0 * std::numbers::pi * detail::unit_interval(detail::hash_of(seed, 3, k));
    waves[k].weight = 0.5 + detail::unit_interval(detail::hash_of(seed, 4, k));
    total += waves[k].weight;
  }
  for (Wave& w : waves) w.weight /= total;
  return waves;
}

double signed_noise(std::uint64_t seed, std::int64_t a, std::int64_t b, std::int64_t c) {
  return 2.0 * detail::unit_interval(detail::hash_of(seed, a, b, c)) - 1.0;
}

Frame render_texture(const TexturePattern& p, int width, int height, int t, int index) {
  Frame f(index, width, height);
  const auto waves = texture_waves(p.seed);
  // Luma texture space is shifted by (dx, dy) * t; chroma samples sit on the
  // even luma lattice so the same integer shift applies at twice the spacing.
  auto luma_at = [&](std::int64_t tx, std::int64_t ty) {
    double v = 0;
    for (const Wave& w : waves) v += w.weight * std::sin(w.kx * tx + w.ky * ty + w.phase);
    double s = p.mean + p.amplitude * v;
    if (p.detail != 0) s += p.detail * signed_noise(p.seed, 0, tx, ty);
    return s;
  };
  const std::int64_t ox = static_cast<std::int64_t>(p.dx) * t;
  const std::int64_t oy = static_cast<std::int64_t>(p.dy) * t;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) f.y.at(x, y) = clamp_sample(luma_at(x - ox, y - oy));
  }
  for (int y = 0; y < height / 2; ++y) {
    for (int x = 0; x < width / 2; ++x) {
      const std::int64_t tx = 2 * x - ox;
      const std::int64_t ty = 2 * y - oy;
      double cu = 0;
      for (const Wave& w : waves) cu += w.weight * std::cos(w.kx * tx + w.ky * ty + w.phase);
      const double cv = std::sin(waves[0].kx * tx + waves[0].ky * ty + waves[0].phase);
      f.u.at(x, y) = clamp_sample(128.0 + 0.3 * p.amplitude * cu);
      f.v.at(x, y) = clamp_sample(128.0 - 0.25 * p.amplitude * cv);
    }
  }
  return f;
}

Frame render_noise(const NoisePattern& p, int width, int height, int t, int index) {
  Frame f(index, width, height);
  int plane_id = 0;
  for (Plane* plane : {&f.y, &f.u, &f.v}) {
    const double amp = plane_id == 0 ? p.amplitude : p.amplitude / 4.0;
    const double mean = plane_id == 0 ? p.mean : 128.0;
    const std::uint64_t plane_seed = detail::hash_of(p.seed, t, plane_id);
    for (int y = 0; y < plane->height; ++y) {
      for (int x = 0; x < plane->width; ++x) {
        plane->at(x, y) = clamp_sample(mean + amp * signed_noise(plane_seed, x, y, 0));
      }
    }
    ++plane_id;
  }
  return f;
}

}  // namespace

Frame render_pattern(const BasicPattern& pattern, int width, int height, int t, int index) {
  return std::visit(
      [&](const auto& p) -> Frame {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, FlatPattern>) {
          return Frame(index, width, height, clamp_sample(p.luma), 128);
        } else if constexpr (std::is_same_v<T, NoisePattern>) {
          return render_noise(p, width, height, t, index);
        } else {
          return render_texture(p, width, height, t, index);
        }
      },
      pattern);
}

VideoSequence synth_sequence(const SyntheticSpec& spec) {
  if (spec.frames <= 0) throw UsageError("synth_sequence: zero frames requested");
  VideoSequence seq;
  seq.width = spec.width;
  seq.height = spec.height;
  seq.fps = spec.fps;
  seq.source_bitrate_kbps = spec.source_bitrate_kbps;
  if (spec.width <= 0 || spec.height <= 0 || spec.width % 2 || spec.height % 2) {
    throw UsageError("synth_sequence: dimensions must be positive and even");
  }
  if (spec.fps.num <= 0 || spec.fps.den <= 0) throw UsageError("synth_sequence: bad frame rate");
  seq.frames.reserve(spec.frames);
  for (int t = 0; t < spec.frames; ++t) {
    if (const auto* cut = std::get_if<HardCutPattern>(&spec.pattern)) {
      if (t < cut->at) {
        seq.frames.push_back(render_pattern(cut->before, spec.width, spec.height, t, t));
      } else {
        seq.frames.push_back(render_pattern(cut->after, spec.width, spec.height, t - cut->at, t));
      }
    } else {
      const BasicPattern basic = std::visit(
          [](const auto& p) -> BasicPattern {
            if constexpr (std::is_same_v<std::decay_t<decltype(p)>, HardCutPattern>) {
              return FlatPattern{};
            } else {
              return p;
            }
          },
          spec.pattern);
      seq.frames.push_back(render_pattern(basic, spec.width, spec.height, t, t));
    }
  }
  return seq;
}

}  // namespace carf
