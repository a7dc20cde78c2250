#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pfvc/pipeline/cli.hpp"
#include "pfvc/pipeline/commands.hpp"

using namespace pfvc;
using namespace pfvc::pipeline;

namespace fs = std::filesystem;

TEST_CASE("config: defaults, overrides, unknown keys, file parsing") {
  PipelineConfig cfg;
  CHECK(cfg.get_int("dsp.hop") == 256);
  CHECK(cfg.get_real("flow.sigma_min") == doctest::Approx(1e-4));
  CHECK(cfg.get_bool("flow.use_pitch"));

  cfg.set("flow.ode_steps", "20");
  CHECK(cfg.get_int("flow.ode_steps") == 20);
  CHECK_THROWS_WITH_AS(cfg.set("flow.nonsense", "1"), doctest::Contains("unknown key"),
                       std::runtime_error);
  CHECK_THROWS_AS(cfg.get("no.such"), std::runtime_error);

  const auto path = fs::temp_directory_path() / "pfvc_cfg_test.cfg";
  {
    std::ofstream f(path);
    f << "# comment line\n"
      << "corpus.n_speakers = 7   # trailing comment\n"
      << "\n"
      << "flow.cfg_scale = 2.0\n";
  }
  PipelineConfig loaded;
  loaded.load_file(path.string());
  CHECK(loaded.get_int("corpus.n_speakers") == 7);
  CHECK(loaded.get_real("flow.cfg_scale") == doctest::Approx(2.0));
  fs::remove(path);

  PipelineConfig bad;
  std::ofstream(path) << "pitch.codebook_size\n";
  CHECK_THROWS_WITH_AS(bad.load_file(path.string()), doctest::Contains("missing '='"),
                       std::runtime_error);
  fs::remove(path);
}

TEST_CASE("config hashes: sampling keys do not invalidate checkpoints") {
  PipelineConfig a, b;
  CHECK(a.full_hash() == b.full_hash());
  CHECK(a.model_hash() == b.model_hash());

  b.set("flow.ode_steps", "20");  // sampling-time knob
  CHECK(a.model_hash() == b.model_hash());
  CHECK(a.full_hash() != b.full_hash());

  b.set("flow.hidden", "128");  // architecture knob
  CHECK(a.model_hash() != b.model_hash());
}

TEST_CASE("config rejects non-numeric values on typed access") {
  PipelineConfig cfg;
  cfg.set("dsp.hop", "fast");
  CHECK_THROWS_WITH_AS(cfg.get_int("dsp.hop"), doctest::Contains("non-numeric"),
                       std::runtime_error);
  cfg.set("flow.use_pitch", "maybe");
  CHECK_THROWS_WITH_AS(cfg.get_bool("flow.use_pitch"), doctest::Contains("non-boolean"),
                       std::runtime_error);
}

TEST_CASE("pearson correlation on hand-computed cases") {
  CHECK(pearson({1, 2, 3, 4}, {2, 4, 6, 8}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3, 4}, {8, 6, 4, 2}) == doctest::Approx(-1.0));
  CHECK(pearson({1, 1, 1}, {2, 3, 4}) == doctest::Approx(0.0));  // degenerate x
  CHECK(std::fabs(pearson({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5})) < 1.0);
}

TEST_CASE("envelope classification picks the nearest centroid") {
  std::vector<core::Tensor> centroids;
  centroids.push_back(core::Tensor::from(1, 3, {0, 0, 0}));
  centroids.push_back(core::Tensor::from(1, 3, {5, 5, 5}));
  CHECK(classify_envelope(core::Tensor::from(1, 3, {1, 0, 1}), centroids) == 0);
  CHECK(classify_envelope(core::Tensor::from(1, 3, {4, 6, 5}), centroids) == 1);
}

TEST_CASE("eval report serialization carries the summary line") {
  EvalReport report;
  report.pitch_style_correlation = 0.85;
  report.content_match_rate = 0.92;
  report.envelope_classification_accuracy = 0.95;
  report.codebook_usage = 0.7;
  EvalRow row;
  row.source = "a.wav";
  row.prompt = "b.wav";
  report.rows.push_back(row);

  const auto path = fs::temp_directory_path() / "pfvc_report_test.tsv";
  report.write_tsv(path.string());
  std::ifstream f(path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(text.find("SUMMARY r=0.85 content=0.92 envelope=0.95 usage=0.7") !=
        std::string::npos);
  CHECK(text.find("a.wav\tb.wav") != std::string::npos);
  fs::remove(path);
}

TEST_CASE("stage dependency errors name the missing artifact and its producer") {
  PipelineConfig cfg;
  const auto dir = fs::temp_directory_path() / "pfvc_no_corpus";
  fs::remove_all(dir);
  CHECK_THROWS_WITH_AS(cmd_train_pitch(cfg, dir.string(), "x.ckpt", false),
                       doctest::Contains("make-corpus"), StageError);

  CHECK_THROWS_WITH_AS(
      cmd_train_cfm(cfg, dir.string(), "missing_pitch.ckpt", "missing_content.ckpt",
                    "out.ckpt"),
      doctest::Contains("make-corpus"), StageError);
}

TEST_CASE("cli surfaces errors as nonzero exit with a reason") {
  CHECK(cli_run({"make-corpus"}) != 0);                       // missing --out
  CHECK(cli_run({"--set", "bogus.key=1", "gradcheck"}) != 0); // unknown key
  CHECK(cli_run({"train-pitch", "--corpus", "/nonexistent/corpus", "--out",
                 "/tmp/pfvc_nope.ckpt", "--runs", "/tmp/pfvc_runs_test"}) != 0);
  fs::remove_all("/tmp/pfvc_runs_test");
}

TEST_CASE("run log records the resolved config and hash") {
  PipelineConfig cfg;
  const auto dir = fs::temp_directory_path() / "pfvc_runs";
  fs::remove_all(dir);
  write_run_log(cfg, "unit-test", "note", dir.string());
  bool found = false;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.path().filename() == "run.log") {
      std::ifstream f(e.path());
      std::string text((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
      CHECK(text.find("command: unit-test") != std::string::npos);
      CHECK(text.find(cfg.full_hash()) != std::string::npos);
      CHECK(text.find("dsp.hop = 256") != std::string::npos);
      found = true;
    }
  }
  CHECK(found);
  fs::remove_all(dir);
}

TEST_CASE("gradcheck suite covers the named blocks and passes") {
  auto report = run_gradcheck_suite(1e-4, 11);
  INFO(report.summary());
  CHECK(report.pass);
  std::vector<std::string> needed = {"conv1d",      "attention",   "layer_norm",
                                     "conformer_block", "asp",     "flow_decoder",
                                     "vq_straight_through"};
  for (const auto& want : needed) {
    bool present = false;
    for (const auto& b : report.blocks)
      if (b.name.rfind(want + "/", 0) == 0) present = true;
    INFO("block family: ", want);
    CHECK(present);
  }
}
