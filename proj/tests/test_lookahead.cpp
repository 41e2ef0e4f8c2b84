#include <cmath>
#include <random>

#include "carf/costs.hpp"
#include "carf/error.hpp"
#include "carf/lookahead.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace carf;

namespace {

MbBlock random_block(std::mt19937_64& rng) {
  MbBlock b;
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : b) v = static_cast<std::uint8_t>(d(rng));
  return b;
}

Plane plane_of(const MbBlock& b) {
  Plane p(16, 16);
  std::copy(b.begin(), b.end(), p.data.begin());
  return p;
}

std::vector<FrameStats> static_stats(int n) {
  std::vector<FrameStats> s(n);
  for (int i = 0; i < n; ++i) {
    s[i].frame_index = i;
    s[i].slice_type = i == 0 ? SliceType::I : SliceType::P;
    s[i].intra_cost_total = 5000;
    s[i].inter_cost_total = 0;
  }
  return s;
}

}  // namespace

TEST_CASE("sad") {
  std::mt19937_64 rng(1);
  const MbBlock a = random_block(rng);
  CHECK(sad(a, a) == 0);
  MbBlock zero{}, full;
  full.fill(255);
  CHECK(sad(zero, full) == 65280);
  for (int k = 0; k < 100; ++k) {
    const MbBlock x = random_block(rng), y = random_block(rng);
    CHECK(sad(x, y) == oracle::sad16(plane_of(x), 0, 0, plane_of(y), 0, 0));
  }
}

TEST_CASE("satd") {
  std::mt19937_64 rng(2);
  const MbBlock a = random_block(rng);
  CHECK(satd(a, a) == 0);

  SUBCASE("single nonzero residual sample r gives 64 r, halved to 32 r") {
    for (int r : {1, 7, -13, 255}) {
      std::array<int, 64> res{};
      res[19] = r;
      CHECK(hadamard_abs_sum_8x8(res) == 64u * std::abs(r));
    }
    MbBlock x{}, y{};
    x[5 * 16 + 3] = 40;
    CHECK(satd(x, y) == 32u * 40);
  }
  SUBCASE("random pairs match H R H^T") {
    for (int k = 0; k < 200; ++k) {
      const MbBlock x = random_block(rng), y = random_block(rng);
      CHECK(satd(x, y) == oracle::satd16(plane_of(x), 0, 0, plane_of(y), 0, 0));
    }
  }
  SUBCASE("shape mismatch is a usage error") {
    std::uint8_t buf[256] = {};
    CHECK_THROWS_AS(satd(BlockView{buf, 16, 16, 16}, BlockView{buf, 8, 16, 16}), UsageError);
  }
}

TEST_CASE("motion_search") {
  SUBCASE("identical frames give zero vector and zero cost") {
    std::mt19937_64 rng(4);
    const Plane p = oracle::random_plane(rng, 64, 48);
    const auto r = motion_search(p, p, 1, 1, 16);
    CHECK(r.mv == MotionVector{0, 0});
    CHECK(r.cost == 0);
  }
  SUBCASE("flat frames tie-break to (0, 0)") {
    const Plane p(64, 64, 77);
    const auto r = motion_search(p, p, 2, 2, 16);
    CHECK(r.mv == MotionVector{0, 0});
    CHECK(r.cost == 0);
  }
  SUBCASE("texture moved by (4, 2) is found and agrees with full search") {
    const auto v = synth_sequence({96, 96, 2, {25, 1}, TexturePattern{4, 2, 21, 128, 80, 0}, {}});
    const auto r = motion_search(v.frames[1].y, v.frames[0].y, 2, 2, 16);
    CHECK(r.mv == MotionVector{-4, -2});
    CHECK(r.cost == 0);
    const auto o = oracle::full_search(v.frames[1].y, v.frames[0].y, 2, 2, 16);
    CHECK(o.dx == -4);
    CHECK(o.dy == -2);
    CHECK(o.cost == 0);
  }
  SUBCASE("candidate window respects picture bounds") {
    std::mt19937_64 rng(5);
    const Plane cur = oracle::random_plane(rng, 48, 32);
    const Plane ref = oracle::random_plane(rng, 48, 32);
    for (int my = 0; my < 2; ++my)
      for (int mx = 0; mx < 3; ++mx) {
        const auto r = motion_search(cur, ref, mx, my, 16);
        CHECK(mx * 16 + r.mv.dx >= 0);
        CHECK(mx * 16 + r.mv.dx + 16 <= 48);
        CHECK(my * 16 + r.mv.dy >= 0);
        CHECK(my * 16 + r.mv.dy + 16 <= 32);
        CHECK(r.cost == oracle::satd16(cur, mx * 16, my * 16, ref, mx * 16 + r.mv.dx, my * 16 + r.mv.dy));
      }
  }
}

TEST_CASE("intra_cost") {
  SUBCASE("flat interior MB costs the penalty only") {
    CHECK(intra_cost(Plane(64, 64, 90), 1, 1) == kIntraPenalty);
  }
  SUBCASE("vertical stripes: vertical predictor is exact") {
    Plane p(48, 48);
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 48; ++x) p.at(x, y) = static_cast<std::uint8_t>((x * 37) % 256);
    CHECK(intra_cost(p, 1, 1) == kIntraPenalty);
    CHECK(intra_cost(p, 2, 1) == kIntraPenalty);
  }
  SUBCASE("top-left MB predicts from the 128 border") {
    CHECK(intra_cost(Plane(32, 32, 128), 0, 0) == kIntraPenalty);
    // Residual -78 everywhere: DC coefficient 64 * 78 per 8x8, four blocks, halved.
    CHECK(intra_cost(Plane(32, 32, 50), 0, 0) == 4 * 64 * 78 / 2 + kIntraPenalty);
  }
}

TEST_CASE("analyze_frame") {
  const auto v = synth_sequence({128, 96, 3, {25, 1}, TexturePattern{4, 2, 8, 120, 70, 6}, {}});
  const Frame l0 = downsample_half(v.frames[0]);
  const Frame l1 = downsample_half(v.frames[1]);

  SUBCASE("first frame is intra") {
    const FrameStats s = analyze_frame(l0, nullptr, 0);
    CHECK(s.slice_type == SliceType::I);
    CHECK(s.inter_cost_total == 0);
    CHECK(s.total_mb_count == 4 * 3);
    CHECK(s.intra_mb_count == s.total_mb_count);
  }
  SUBCASE("identical frames cost nothing to predict") {
    const FrameStats s = analyze_frame(l0, &l0, 1);
    CHECK(s.inter_cost_total == 0);
    CHECK(s.intra_mb_count == 0);
    CHECK(s.intra_cost_total > 0);
  }
  SUBCASE("translating texture is cheaper to predict than to intra-code") {
    const FrameStats s = analyze_frame(l1, &l0, 1);
    CHECK(s.inter_cost_total < s.intra_cost_total);
  }
  SUBCASE("OpenMP and serial sequence analysis agree") {
    std::vector<Frame> low;
    for (const Frame& f : v.frames) low.push_back(downsample_half(f));
    const auto a = analyze_sequence(low);
    const auto b = analyze_sequence_serial(low);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].intra_cost_total == b[i].intra_cost_total);
      CHECK(a[i].inter_cost_total == b[i].inter_cost_total);
      CHECK(a[i].ac_energy_total == b[i].ac_energy_total);
    }
  }
}

TEST_CASE("detect_scenecut") {
  const LookaheadParams p;
  FrameStats s;
  s.slice_type = SliceType::P;
  SUBCASE("identical frames never cut") {
    s.intra_cost_total = 9000;
    s.inter_cost_total = 0;
    CHECK_FALSE(detect_scenecut(s, 100, p));
  }
  SUBCASE("all-zero costs never cut") { CHECK_FALSE(detect_scenecut(s, 100, p)); }
  SUBCASE("bias ramps with distance") {
    s.intra_cost_total = 1000;
    s.inter_cost_total = 700;
    CHECK(detect_scenecut(s, 40, p));       // threshold 600
    CHECK_FALSE(detect_scenecut(s, 10, p));  // threshold 900
  }
  SUBCASE("black to texture hard cut") {
    const TexturePattern tex{2, 1, 3, 128, 80, 10};
    const auto v = synth_sequence({128, 96, 62, {25, 1}, HardCutPattern{60, FlatPattern{0}, tex}, {}});
    const Frame a = downsample_half(v.frames[59]);
    const Frame b = downsample_half(v.frames[60]);
    CHECK(detect_scenecut(analyze_frame(b, &a, 60), 60, p));
  }
}

TEST_CASE("segment_gops") {
  LookaheadParams p;
  SUBCASE("100 static frames are one GOP") {
    const auto spans = segment_gops(static_stats(100), p);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0] == GopSpan{0, 99, false});
  }
  SUBCASE("600 static frames split at keyint_max") {
    const auto spans = segment_gops(static_stats(600), p);
    REQUIRE(spans.size() == 3);
    CHECK(spans[0].length() == 250);
    CHECK(spans[1].length() == 250);
    CHECK(spans[2].length() == 100);
    CHECK_FALSE(spans[1].scenecut_triggered);
  }
  SUBCASE("cut before keyint_min is suppressed") {
    auto s = static_stats(100);
    s[30].inter_cost_total = 5000;
    CHECK(segment_gops(s, p).size() == 1);
    s[45].inter_cost_total = 5000;
    const auto spans = segment_gops(s, p);
    REQUIRE(spans.size() == 2);
    CHECK(spans[1] == GopSpan{45, 99, true});
  }
  SUBCASE("hard cut at 60 on real content") {
    const TexturePattern a{3, 1, 31, 90, 60, 8};
    const TexturePattern b{-2, 2, 32, 170, 70, 8};
    const auto v = synth_sequence({128, 96, 90, {25, 1}, HardCutPattern{60, a, b}, {}});
    const auto la = run_lookahead(v, p);
    REQUIRE(la.spans.size() == 2);
    CHECK(la.spans[0] == GopSpan{0, 59, false});
    CHECK(la.spans[1] == GopSpan{60, 89, true});
    CHECK(la.stats[60].slice_type == SliceType::I);
    CHECK(la.stats[61].slice_type == SliceType::P);
  }
  SUBCASE("incremental segmenter matches batch") {
    auto s = static_stats(700);
    s[120].inter_cost_total = 5000;
    s[300].inter_cost_total = 5000;
    GopSegmenter seg(p);
    std::vector<int> idr;
    for (const auto& st : s)
      if (seg.push(st)) idr.push_back(st.frame_index);
    const auto spans = seg.finish();
    CHECK(spans == segment_gops(s, p));
    REQUIRE(idr.size() == spans.size());
    for (std::size_t i = 0; i < idr.size(); ++i) CHECK(idr[i] == spans[i].start_frame);
  }
  SUBCASE("bad params") {
    p.keyint_max = 10;
    CHECK_THROWS_AS(segment_gops(static_stats(5), p), UsageError);
  }
}
