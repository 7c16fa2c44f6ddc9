#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "causalpose/cli.hpp"
#include "causalpose/errors.hpp"
#include "causalpose/kvconfig.hpp"
#include "causalpose/trainer.hpp"
#include "doctest.h"

using namespace causalpose;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("kv parsing: comments, repeats, conversions, errors") {
  KvConfig kv = KvConfig::parse_text(
      "# header comment\n"
      "alpha = 3.5  # trailing comment\n"
      "name = toy run\n"
      "edge = 0 1\n"
      "edge = 1 2\n"
      "flag = on\n"
      "ints = 4 5 6\n",
      "<test>");
  CHECK(kv.get_double("alpha") == 3.5);
  CHECK(kv.get_str("name") == "toy run");
  CHECK(kv.get_all("edge").size() == 2);
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_ints("ints") == std::vector<int>{4, 5, 6});
  CHECK(kv.get_int("missing", 9) == 9);
  CHECK_THROWS_AS(kv.get_int("alpha"), ConfigError);
  CHECK_THROWS_AS(kv.get_str("missing"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_text("key value without equals\n", "<t>"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_file("no_such_file.cfg"), ConfigError);
}

TEST_CASE("train config round-trips through its serialization") {
  TrainConfig cfg;
  cfg.dataset = "foo.bin";
  cfg.epochs = 7;
  cfg.lambda = 0.25;
  cfg.strategy = InterventionStrategy::threshold(0.65);
  TrainConfig back = TrainConfig::from_kv(KvConfig::parse_text(cfg.serialize(), "<rt>"));
  CHECK(back.serialize() == cfg.serialize());
  CHECK(back.strategy.kind == StrategyKind::Threshold);
  CHECK(back.strategy.tau == 0.65);
}

TEST_CASE("config overrides replace values and reject unknown keys") {
  TrainConfig cfg;
  cfg.apply_override("lambda", "0");
  CHECK(cfg.lambda == 0.0);
  cfg.apply_override("strategy", "threshold");
  CHECK(cfg.strategy.kind == StrategyKind::Threshold);
  CHECK_THROWS_AS(cfg.apply_override("no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("epochs", "-3"), ConfigError);
}

TEST_CASE("config validation catches bad fields") {
  TrainConfig cfg;
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("cli: gen, train, eval, dump round-trip with deterministic outputs") {
  TempDir dir("cli_flow.tmp");
  spit(dir.path / "bench.cfg",
       "n_samples = 48\nseed = 5\nocclusion_rate = 0.3\nconfound_strength = 0.8\n");
  CHECK(cli::run({"gen", "--config", (dir.path / "bench.cfg").string(), "--out",
                  (dir.path / "data").string()}) == 0);
  CHECK(fs::exists(dir.path / "data/dataset.bin"));
  CHECK(fs::exists(dir.path / "data/manifest.txt"));

  // regenerating with the same seed gives an identical manifest
  std::string manifest1 = slurp(dir.path / "data/manifest.txt");
  CHECK(cli::run({"gen", "--config", (dir.path / "bench.cfg").string(), "--out",
                  (dir.path / "data2").string()}) == 0);
  CHECK(slurp(dir.path / "data2/manifest.txt") == manifest1);

  spit(dir.path / "train.cfg",
       "dataset = " + (dir.path / "data/dataset.bin").string() +
           "\nepochs = 2\nbatch_size = 16\nwarmup_iters = 5\nseed = 3\nd_emb = 16\nbins = 16\n"
           "d_hidden = 24\nintervention_n = 2\n");
  CHECK(cli::run({"train", "--config", (dir.path / "train.cfg").string(), "--out",
                  (dir.path / "run1").string()}) == 0);
  CHECK(fs::exists(dir.path / "run1/checkpoint.bin"));
  CHECK(fs::exists(dir.path / "run1/train_log.jsonl"));
  std::string resolved = slurp(dir.path / "run1/resolved_config.txt");
  CHECK(resolved.find("seed = 3") != std::string::npos);

  // byte-identical checkpoints across reruns
  CHECK(cli::run({"train", "--config", (dir.path / "train.cfg").string(), "--out",
                  (dir.path / "run2").string()}) == 0);
  CHECK(slurp(dir.path / "run1/checkpoint.bin") == slurp(dir.path / "run2/checkpoint.bin"));
  CHECK(slurp(dir.path / "run1/train_log.jsonl") == slurp(dir.path / "run2/train_log.jsonl"));

  // an override must change the resolved config echo
  CHECK(cli::run({"train", "--config", (dir.path / "train.cfg").string(), "--out",
                  (dir.path / "run3").string(), "--override", "lambda=0"}) == 0);
  CHECK(slurp(dir.path / "run3/resolved_config.txt").find("lambda = 0\n") != std::string::npos);

  CHECK(cli::run({"eval", "--checkpoint", (dir.path / "run1/checkpoint.bin").string(),
                  "--dataset", (dir.path / "data/dataset.bin").string(), "--enrich", "2", "0.0",
                  "--freq", "--out", (dir.path / "metrics").string()}) == 0);
  std::string metrics = slurp(dir.path / "metrics/metrics.jsonl");
  CHECK(metrics.find("\"metric\":\"pck\"") != std::string::npos);
  CHECK(metrics.find("\"metric\":\"enrichment\"") != std::string::npos);
  CHECK(metrics.find("\"metric\":\"intervention_frequency\"") != std::string::npos);

  CHECK(cli::run({"dump-embeddings", "--checkpoint", (dir.path / "run1/checkpoint.bin").string(),
                  "--dataset", (dir.path / "data/dataset.bin").string(), "--out",
                  (dir.path / "emb.jsonl").string(), "--samples", "4"}) == 0);
  std::string dump = slurp(dir.path / "emb.jsonl");
  // exactly K canonical rows
  size_t z_rows = 0, pos = 0;
  while ((pos = dump.find("\"kind\":\"z\"", pos)) != std::string::npos) {
    ++z_rows;
    pos += 1;
  }
  CHECK(z_rows == 8);
  CHECK(dump.find("\"kind\":\"f\"") != std::string::npos);
}

TEST_CASE("cli: config errors exit 2, data mismatches exit 3") {
  TempDir dir("cli_err.tmp");
  spit(dir.path / "bad.cfg", "epochs = not_a_number\n");
  CHECK(cli::run({"train", "--config", (dir.path / "bad.cfg").string(), "--out",
                  (dir.path / "o").string()}) == 2);
  CHECK(cli::run({"train", "--config", "missing.cfg", "--out", (dir.path / "o").string()}) == 2);
  CHECK(cli::run({"no-such-command"}) == 2);
  CHECK(cli::run({"scm-verify"}) == 2);

  // eval against a dataset with different geometry: exit 3
  spit(dir.path / "bench.cfg", "n_samples = 24\nseed = 5\n");
  REQUIRE(cli::run({"gen", "--config", (dir.path / "bench.cfg").string(), "--out",
                    (dir.path / "dataA").string()}) == 0);
  spit(dir.path / "skel.cfg",
       "k = 4\nnames = a b c d\nedge = 0 1\nedge = 1 2\nedge = 2 3\nhyperedge = all : 0 1 2 3\n");
  spit(dir.path / "bench_small.cfg",
       "n_samples = 24\nseed = 5\nskeleton = " + (dir.path / "skel.cfg").string() + "\n");
  REQUIRE(cli::run({"gen", "--config", (dir.path / "bench_small.cfg").string(), "--out",
                    (dir.path / "dataB").string()}) == 0);
  spit(dir.path / "train.cfg",
       "dataset = " + (dir.path / "dataA/dataset.bin").string() +
           "\nepochs = 1\nbatch_size = 8\nwarmup_iters = 2\nseed = 3\nd_emb = 8\nbins = 8\n"
           "d_hidden = 12\nintervention_n = 1\n");
  REQUIRE(cli::run({"train", "--config", (dir.path / "train.cfg").string(), "--out",
                    (dir.path / "run").string()}) == 0);
  CHECK(cli::run({"eval", "--checkpoint", (dir.path / "run/checkpoint.bin").string(),
                  "--dataset", (dir.path / "dataB/dataset.bin").string()}) == 3);
}

TEST_CASE("cli: scm-verify consumes files, sweeps random models, rejects bad files") {
  TempDir dir("cli_scm.tmp");
  spit(dir.path / "ok.scm",
       "sizes = 2 2 2 2\n"
       "p_c = 0.3 0.7\n"
       "p_x_given_c = 0.6 0.4 0.2 0.8\n"
       "p_f_given_x = 0.7 0.3 0.4 0.6\n"
       "p_y_given_cf = 0.9 0.1 0.2 0.8 0.5 0.5 0.3 0.7\n");
  CHECK(cli::run({"scm-verify", (dir.path / "ok.scm").string()}) == 0);
  CHECK(cli::run({"scm-verify", "--random", "50", "--seed", "7"}) == 0);

  spit(dir.path / "bad.scm", "sizes = 2 2 2 2\np_c = 0.3 0.8\n");
  CHECK(cli::run({"scm-verify", (dir.path / "bad.scm").string()}) == 2);
}

TEST_CASE("cli: single-op gradcheck") {
  CHECK(cli::run({"gradcheck", "--op", "softmax"}) == 0);
  CHECK(cli::run({"gradcheck", "--op", "definitely_not_an_op"}) == 2);
}
