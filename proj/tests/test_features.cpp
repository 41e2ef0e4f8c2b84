#include <cmath>
#include <random>

#include "carf/decision.hpp"
#include "carf/error.hpp"
#include "carf/features.hpp"
#include "doctest.h"

using namespace carf;

namespace {

GopFeatures features_of(const VideoSequence& v, const LookaheadParams& p = {}) {
  const auto la = run_lookahead(v, p);
  return aggregate_gop(la.stats, v.frames, sequence_meta(v));
}

}  // namespace

TEST_CASE("aggregate_gop on flat identical frames") {
  const auto v = synth_sequence({64, 64, 3, {30, 1}, FlatPattern{100}, 900.0});
  const auto la = run_lookahead(v, {});
  const GopFeatures f = aggregate_gop(la.stats, v.frames, sequence_meta(v));
  const double intra_per_mb = static_cast<double>(la.stats[0].intra_cost_total) / 4.0;
  CHECK(f.pred_cost_score == doctest::Approx(intra_per_mb / 3.0));
  CHECK(f.ac_score == 0.0);
  CHECK(f.intra_mb_pct == 0.0);
  CHECK(f.mv_len_mean == 0.0);
  CHECK(f.pixel_sum_y == 100.0 * 64 * 64);
  CHECK(f.pixel_sqsum_y == 100.0 * 100.0 * 64 * 64);
  CHECK(f.pixel_sum_u == 128.0 * 32 * 32);
  CHECK(f.source_bitrate == 900.0);
  CHECK(f.fps == 30.0);
}

TEST_CASE("single-frame GOP has no P-frame statistics") {
  const auto v = synth_sequence({64, 64, 1, {25, 1}, TexturePattern{1, 1, 4, 128, 60, 9}, {}});
  const GopFeatures f = features_of(v);
  CHECK(f.intra_mb_pct == 0.0);
  CHECK(f.mv_len_mean == 0.0);
  CHECK(f.ac_score > 0.0);
  // Without a source bitrate tag the raw 4:2:0 rate is used.
  CHECK(f.source_bitrate == doctest::Approx(64 * 64 * 1.5 * 8 * 25 / 1000.0));
}

TEST_CASE("translating texture (4, 2) has mv length near sqrt(5) on the half-size grid") {
  const auto v = synth_sequence({192, 128, 8, {25, 1}, TexturePattern{4, 2, 17, 128, 80, 6}, {}});
  const GopFeatures f = features_of(v);
  CHECK(std::abs(f.mv_len_mean - std::sqrt(5.0)) <= 0.5);
  CHECK(f.intra_mb_pct >= 0.0);
  CHECK(f.intra_mb_pct <= 100.0);
}

TEST_CASE("aggregate_gop input checks") {
  const auto v = synth_sequence({64, 64, 3, {25, 1}, FlatPattern{10}, {}});
  const auto la = run_lookahead(v, {});
  CHECK_THROWS_AS(aggregate_gop(std::span(la.stats).first(0), std::span(v.frames).first(0), {}), UsageError);
  CHECK_THROWS_AS(aggregate_gop(la.stats, std::span(v.frames).first(2), {}), UsageError);
}

TEST_CASE("feature array order round-trips") {
  FeatureVector a;
  for (std::size_t i = 0; i < kFeatureCount; ++i) a[i] = 1.5 * i - 3;
  CHECK(GopFeatures::from_array(a).to_array() == a);
  CHECK(GopFeatures::names()[7] == "ac_score");
}

TEST_CASE("fit_scaler") {
  SUBCASE("two samples 0 and 2 give mean 1 and std 1") {
    FeatureVector lo{}, hi{};
    hi.fill(2.0);
    const std::vector<GopFeatures> s = {GopFeatures::from_array(lo), GopFeatures::from_array(hi)};
    const FeatureScaler sc = fit_scaler(s);
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      CHECK(sc.mean[i] == 1.0);
      CHECK(sc.stddev[i] == 1.0);
    }
    CHECK(sc.apply(s[1])[4] == 1.0);
  }
  SUBCASE("constant column gets std 1 and scales to 0") {
    FeatureVector a{}, b{};
    a.fill(5.0);
    b.fill(5.0);
    b[0] = 7.0;
    const std::vector<GopFeatures> s = {GopFeatures::from_array(a), GopFeatures::from_array(b)};
    const FeatureScaler sc = fit_scaler(s);
    CHECK(sc.stddev[3] == 1.0);
    CHECK(sc.apply(s[0])[3] == 0.0);
    CHECK(sc.stddev[0] == 1.0);  // {5, 7}: population std is exactly 1
  }
  SUBCASE("random corpus is z-scored") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0, 1);
    std::vector<GopFeatures> s;
    for (int k = 0; k < 300; ++k) {
      FeatureVector v;
      for (std::size_t i = 0; i < kFeatureCount; ++i) v[i] = 1000.0 * i + (i + 1) * 37.0 * n(rng);
      s.push_back(GopFeatures::from_array(v));
    }
    const FeatureScaler sc = fit_scaler(s);
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      double m = 0, m2 = 0;
      for (const auto& f : s) m += sc.apply(f)[i];
      m /= s.size();
      for (const auto& f : s) m2 += std::pow(sc.apply(f)[i] - m, 2);
      CHECK(std::abs(m) < 1e-9);
      CHECK(std::abs(std::sqrt(m2 / s.size()) - 1.0) < 1e-9);
    }
    const FeatureVector back = sc.inverse(sc.apply(s[5]));
    for (std::size_t i = 0; i < kFeatureCount; ++i) CHECK(back[i] == doctest::Approx(s[5].to_array()[i]));
  }
  SUBCASE("needs two samples, checks version") {
    const std::vector<GopFeatures> one(1);
    CHECK_THROWS_AS(fit_scaler(one), UsageError);
    FeatureScaler sc;
    sc.stddev.fill(1.0);
    sc.version = 2;
    CHECK_THROWS_AS(apply_scaler(sc, GopFeatures{}, kFeatureVersion), UsageError);
  }
}
