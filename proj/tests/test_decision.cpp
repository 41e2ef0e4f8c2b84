#include <sstream>

#include "carf/decision.hpp"
#include "carf/error.hpp"
#include "doctest.h"

using namespace carf;

namespace {

FeatureScaler unit_scaler() {
  FeatureScaler s;
  s.stddev.fill(1.0);
  return s;
}

// Scaler roughly matched to small synthetic clips so a random network
// produces feature-dependent, finite outputs.
FeatureScaler clip_scaler() {
  FeatureScaler s;
  s.mean = {2000, 1.5e6, 3.6e5, 3.6e5, 2.5e8, 5e7, 5e7, 3000, 20, 2, 3000, 30};
  s.stddev = {1500, 5e5, 1e5, 1e5, 1e8, 2e7, 2e7, 2000, 20, 2, 1000, 10};
  return s;
}

VideoSequence cut_video(int frames, int at) {
  const TexturePattern a{2, 1, 5, 80, 60, 8};
  const TexturePattern b{-1, 2, 6, 180, 70, 12};
  return synth_sequence({128, 96, frames, {25, 1}, HardCutPattern{at, a, b}, 2500.0});
}

}  // namespace

TEST_CASE("decide_crf") {
  SUBCASE("constant c = 28 model") {
    const MlpModel m = constant_model({0, 0, 28}, unit_scaler());
    for (double t : {300.0, 1200.0, 4300.0}) CHECK(decide_crf(m, GopFeatures{}, t).crf == 28.0);
  }
  SUBCASE("targets outside the trained range are answered and flagged") {
    const MlpModel m = constant_model({0.1, -6, 70}, unit_scaler());
    CHECK(decide_crf(m, GopFeatures{}, 150).extrapolated);
    CHECK(decide_crf(m, GopFeatures{}, 20000).extrapolated);
    CHECK_FALSE(decide_crf(m, GopFeatures{}, 200).extrapolated);
    CHECK_FALSE(decide_crf(m, GopFeatures{}, 12000).extrapolated);
    CHECK(decide_crf(m, GopFeatures{}, 20000).crf >= 0.0);
  }
  SUBCASE("known curve, target on the curve") {
    const RateModelParams truth{0.15, -8.0, 75};
    const MlpModel m = constant_model(truth, unit_scaler());
    for (double crf : {16.0, 23.5, 31.0, 38.0}) {
      const double target = bitrate_for_crf(truth, crf);
      CHECK(std::abs(decide_crf(m, GopFeatures{}, target).crf - crf) <= 0.5);
    }
  }
  SUBCASE("bad target") { CHECK_THROWS_AS(decide_crf(constant_model({0, 0, 28}, unit_scaler()), {}, 0), UsageError); }
}

TEST_CASE("plan_sequence") {
  const LookaheadParams p;
  SUBCASE("static video gives one entry") {
    const auto v = synth_sequence({64, 64, 100, {25, 1}, FlatPattern{90}, {}});
    const EncodePlan plan = plan_sequence(v, constant_model({0, 0, 28}, unit_scaler()), 1000, p);
    REQUIRE(plan.entries.size() == 1);
    CHECK(plan.entries[0].span == GopSpan{0, 99, false});
    CHECK(plan.entries[0].crf == 28.0);
  }
  SUBCASE("hard cut gives two entries") {
    const auto v = cut_video(90, 60);
    const MlpModel m = init_model(64, 32, 3, clip_scaler());
    const EncodePlan plan = plan_sequence(v, m, 1500, p);
    REQUIRE(plan.entries.size() == 2);
    CHECK(plan.entries[1].span.start_frame == 60);
    CHECK(plan.entries[1].span.scenecut_triggered);
    CHECK(plan.model_fingerprint == model_fingerprint(m));
  }
  SUBCASE("linear models: lower target never lowers the CRF") {
    const auto v = cut_video(90, 60);
    const MlpModel m = constant_model({0, -6.5, 80}, unit_scaler());
    const EncodePlan lo = plan_sequence(v, m, 800, p), hi = plan_sequence(v, m, 3000, p);
    for (std::size_t i = 0; i < lo.entries.size(); ++i) CHECK(lo.entries[i].crf >= hi.entries[i].crf);
  }
}

TEST_CASE("streaming planner matches the batch plan") {
  const MlpModel m = init_model(64, 32, 11, clip_scaler());
  for (int rc : {100, 20, 5}) {
    LookaheadParams p;
    p.rc_lookahead = rc;
    p.keyint_min = 10;
    p.keyint_max = 30;
    const auto v = cut_video(75, 47);
    const EncodePlan batch = plan_sequence(v, m, 1800, p);
    StreamingPlanner sp(m, 1800, p, sequence_meta(v));
    std::size_t streamed = 0;
    for (const Frame& f : v.frames) streamed += sp.push(f).size();
    const EncodePlan stream = sp.finish();
    INFO("rc_lookahead " << rc);
    CHECK(streamed <= batch.entries.size());
    REQUIRE(stream.entries.size() == batch.entries.size());
    CHECK(batch.entries.size() >= 3);
    for (std::size_t i = 0; i < batch.entries.size(); ++i) {
      CHECK(stream.entries[i].span == batch.entries[i].span);
      CHECK(stream.entries[i].crf == batch.entries[i].crf);
      CHECK(stream.entries[i].params.a == batch.entries[i].params.a);
      CHECK(stream.entries[i].params.c == batch.entries[i].params.c);
    }
    CHECK(plan_to_json(stream) == plan_to_json(batch));
  }
}

TEST_CASE("plan files") {
  EncodePlan plan;
  plan.target_kbps = 1200;
  plan.model_fingerprint = "00ff00ff00ff00ff";
  plan.entries = {{{0, 59, false}, 27.3, {0.1, -6, 70}, false}, {{60, 99, true}, 31.0, {0.2, -7.5, 81}, true}};
  SUBCASE("json round-trip") {
    const EncodePlan back = plan_from_json(plan_to_json(plan));
    CHECK(plan_to_json(back) == plan_to_json(plan));
    CHECK(back.entries[1].span.scenecut_triggered);
    CHECK(back.entries[1].extrapolated);
  }
  SUBCASE("encoder args") {
    std::ostringstream out;
    write_encoder_args(plan, out);
    CHECK(out.str() == "0 59 --crf 27.3\n60 99 --crf 31.0\n");
  }
  SUBCASE("gaps are rejected") {
    plan.entries[1].span.start_frame = 61;
    CHECK_THROWS_AS(plan_from_json(plan_to_json(plan)), DataError);
  }
  SUBCASE("garbage") { CHECK_THROWS_AS(plan_from_json("{\"gops\": ["), DataError); }
}
