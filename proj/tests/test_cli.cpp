#include <filesystem>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>

#include "carf/cli.hpp"
#include "carf/nn.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run carf_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = carf::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("carf_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path kData = CARF_TEST_DATA_DIR;

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(carf_run({}).code == 2);
  const Run r = carf_run({"frobnicate"});
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
  CHECK(carf_run({"analyze", "/nonexistent/clip.y4m"}).code == 2);
  CHECK(carf_run({"decide"}).code == 2);
  CHECK(carf_run({"analyze", "x.y4m", "--scenecut-bias", "2"}).code == 2);
  CHECK(carf_run({"--help"}).code == 0);
}

TEST_CASE("analyze") {
  const fs::path dir = fresh_dir("analyze");
  const std::string still = (dir / "still.y4m").string(), cut = (dir / "cut.y4m").string();
  REQUIRE(carf_run({"synth", "--out", still, "--pattern", "flat", "--frames", "100", "--width", "64", "--height", "64"}).code == 0);
  REQUIRE(carf_run({"synth", "--out", cut, "--pattern", "cut", "--frames", "90", "--cut-at", "60"}).code == 0);

  Run r = carf_run({"analyze", still});
  CHECK(r.code == 0);
  CHECK(r.out.find("GOPs 1") != std::string::npos);

  r = carf_run({"analyze", cut, "--out-dir", (dir / "out").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("GOPs 2") != std::string::npos);
  CHECK(r.out.find("scenecut") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "stats.jsonl"));
  CHECK(slurp(dir / "out" / "gops.json").find("\"start\": 60") != std::string::npos);

  std::ofstream(dir / "bad.y4m") << "YUV4MPEG2 W16 H16 F25:1 C444\n";
  CHECK(carf_run({"analyze", (dir / "bad.y4m").string()}).code == 1);
  fs::remove_all(dir);
}

TEST_CASE("fit") {
  const fs::path dir = fresh_dir("fit");
  std::ofstream csv(dir / "obs.csv");
  csv << "crf,kbps\n" << std::setprecision(17);
  for (double crf = 12; crf <= 40; crf += 2) csv << crf << ',' << std::exp((crf - 60) / -6.0) << '\n';
  csv.close();
  const Run r = carf_run({"fit", (dir / "obs.csv").string()});
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(std::abs(j.at("a").get<double>()) < 1e-9);
  CHECK(j.at("b").get<double>() == doctest::Approx(-6));
  CHECK(j.at("c").get<double>() == doctest::Approx(60));
  fs::remove_all(dir);
}

TEST_CASE("decide with a constant model prints crf 28.0") {
  const fs::path dir = fresh_dir("decide");
  carf::FeatureScaler sc;
  sc.stddev.fill(1.0);
  carf::save_model(carf::constant_model({0, 0, 28}, sc), dir / "model.json");
  const std::string clip = (dir / "c.y4m").string();
  REQUIRE(carf_run({"synth", "--out", clip, "--frames", "12", "--width", "64", "--height", "64"}).code == 0);
  const Run r = carf_run({"decide", clip, "--model", (dir / "model.json").string(), "--target-bitrate", "1500",
                          "--out-dir", (dir / "plan").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("28.0") != std::string::npos);
  CHECK(slurp(dir / "plan" / "encoder_args.txt") == "0 11 --crf 28.0\n");

  std::ofstream(dir / "broken.json") << "{\"format\": \"carf-mlp\"";
  CHECK(carf_run({"decide", clip, "--model", (dir / "broken.json").string(), "--target-bitrate", "1500"}).code == 1);
  fs::remove_all(dir);
}

TEST_CASE("report") {
  const fs::path dir = fresh_dir("report");
  const std::string anchor = (kData / "data" / "rd_anchor.csv").string();
  const std::string test = (kData / "data" / "rd_test.csv").string();
  SUBCASE("identical curves give an all-zero table") {
    const Run r = carf_run({"report", "--anchor", anchor, "--test", anchor});
    CHECK(r.code == 0);
    CHECK(std::regex_search(r.out, std::regex("[1-9]\\.")) == false);
  }
  SUBCASE("golden table") {
    const Run r = carf_run({"report", "--anchor", anchor, "--test", test, "--out-dir", dir.string()});
    CHECK(r.code == 0);
    const std::string golden = slurp(kData / "golden" / "bd_rate_table.txt");
    CHECK(r.out == golden);
    CHECK(slurp(dir / "bd_rate.txt") == golden);
    CHECK(slurp(dir / "bd_rate.csv").find("crowd,-10.0000,-5.0000,0.0000") != std::string::npos);
  }
  SUBCASE("error CDF") {
    std::ofstream(dir / "errors.csv") << "error_pct\n10\n30\n";
    const Run r = carf_run({"report", "--errors", (dir / "errors.csv").string(), "--out-dir", dir.string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("within 20%: 50.0%") != std::string::npos);
    CHECK(slurp(dir / "cdf.csv") == "error_pct,cumulative_fraction\n10,0.5\n30,1\n");
  }
  SUBCASE("needs inputs") { CHECK(carf_run({"report"}).code == 2); }
  fs::remove_all(dir);
}

TEST_CASE("planted pipeline: synth-corpus, dataset-build, train, decide, execute, eval") {
  const fs::path dir = fresh_dir("pipeline");
  const std::string corpus = (dir / "corpus").string();
  REQUIRE(carf_run({"synth-corpus", "--clips", "200", "--width", "64", "--height", "64", "--out-dir", corpus}).code == 0);
  const std::string planted = (dir / "corpus" / "planted.json").string();
  const std::string clips = (dir / "corpus" / "clips").string();

  Run r = carf_run({"dataset-build", clips, "--backend", "synthetic", "--planted", planted, "--out-dir", (dir / "ds1").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("records 200") != std::string::npos);
  REQUIRE(carf_run({"dataset-build", clips, "--backend", "synthetic", "--planted", planted, "--out-dir", (dir / "ds2").string(),
                    "--jobs", "3"}).code == 0);
  CHECK(slurp(dir / "ds1" / "dataset.jsonl") == slurp(dir / "ds2" / "dataset.jsonl"));

  r = carf_run({"train", (dir / "ds1" / "dataset.jsonl").string(), "--out-dir", (dir / "m1").string(), "--epochs", "200"});
  REQUIRE(r.code == 0);
  std::smatch m;
  REQUIRE(std::regex_search(r.out, m, std::regex("validation loss ([0-9.]+)")));
  CHECK(std::stod(m[1]) < 1.0);
  REQUIRE(carf_run({"train", (dir / "ds1" / "dataset.jsonl").string(), "--out-dir", (dir / "m2").string(), "--epochs", "200"}).code == 0);
  CHECK(slurp(dir / "m1" / "model.json") == slurp(dir / "m2" / "model.json"));

  const std::string model = (dir / "m1" / "model.json").string();
  const std::string clip = (dir / "corpus" / "clips" / "clip0003.y4m").string();
  REQUIRE(carf_run({"decide", clip, "--model", model, "--target-bitrate", "1200", "--out-dir", (dir / "plan").string()}).code == 0);
  r = carf_run({"execute", clip, "--plan", (dir / "plan" / "plan.json").string(), "--backend", "synthetic", "--planted", planted,
                "--out-dir", (dir / "exec").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("target 1200.00 kbps") != std::string::npos);
  CHECK(carf_run({"execute", clip, "--backend", "synthetic", "--planted", planted}).code == 2);

  r = carf_run({"eval", clips, "--model", model, "--backend", "synthetic", "--planted", planted, "--target-bitrate", "750,2850",
                "--out-dir", (dir / "eval").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("clips 200, targets 2") != std::string::npos);
  CHECK(fs::exists(dir / "eval" / "cdf.csv"));
  fs::remove_all(dir);
}
