#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "causalpose/errors.hpp"
#include "causalpose/rng.hpp"
#include "causalpose/trainer.hpp"
#include "doctest.h"

using namespace causalpose;

namespace {

Dataset toy_dataset(int n, uint64_t seed, BenchMode mode = BenchMode::Confounded) {
  BenchConfig cfg;
  cfg.n_samples = n;
  cfg.seed = seed;
  cfg.mode = mode;
  return generate_dataset(cfg);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  cfg.warmup_iters = 5;
  cfg.seed = 11;
  cfg.d_emb = 16;
  cfg.bins = 16;
  cfg.d_hidden = 24;
  cfg.strategy = InterventionStrategy::top_n(2);
  return cfg;
}

Trainer make_trainer(const Dataset& ds, const TrainConfig& cfg) {
  ModelDims dims;
  dims.d_in = ds.d_in;
  dims.k = ds.k();
  dims.d_emb = cfg.d_emb;
  dims.d_hidden = cfg.d_hidden;
  dims.bins = cfg.bins;
  return Trainer(PoseModel::init(dims, ds.skeleton, cfg.strategy, cfg.seed), cfg);
}

}  // namespace

TEST_CASE("cosine schedule: first ramp step, peak, floor") {
  LrSchedule s;
  s.base_lr = 2e-3;
  s.warmup_iters = 1000;
  s.total_iters = 10000;
  s.floor_ratio = 0.05;
  CHECK(s.at(0) == doctest::Approx(2e-6).epsilon(1e-12));  // base/warmup on the first step
  CHECK(s.at(999) == doctest::Approx(2e-3).epsilon(1e-12));
  CHECK(s.at(1000) == doctest::Approx(2e-3).epsilon(1e-9));
  CHECK(s.at(10000) == doctest::Approx(1e-4).epsilon(1e-9));  // floor
  for (int64_t i = 1000; i < 9999; i += 500) CHECK(s.at(i) >= s.at(i + 1));
}

TEST_CASE("optimizer: pure decay without gradients") {
  std::vector<std::pair<std::string, Tensor>> params{{"w", Tensor({3}, {1.0, -2.0, 0.5})}};
  AdamWConfig cfg;
  cfg.weight_decay = 0.05;
  cfg.grad_clip_norm = 0.0;
  AdamW opt(params, cfg);
  std::vector<Tensor> grads{Tensor({3}, 0.0)};
  Tensor before = params[0].second;
  double lr = 1e-2;
  opt.step(params, grads, lr);
  for (int i = 0; i < 3; ++i) {
    CHECK(params[0].second[i] == before[i] - lr * (cfg.weight_decay * before[i]));
  }
}

TEST_CASE("optimizer: global norm clipping halves an over-norm gradient") {
  std::vector<std::pair<std::string, Tensor>> params{{"w", Tensor({2}, 0.0)},
                                                     {"v", Tensor({1}, 0.0)}};
  AdamWConfig cfg;
  cfg.grad_clip_norm = 35.0;
  cfg.weight_decay = 0.0;
  AdamW opt(params, cfg);
  // norm 70: components (42, 40, 39.69...) -> pick a clean construction
  std::vector<Tensor> grads{Tensor({2}, {42.0, 40.0}), Tensor({1}, {std::sqrt(70.0 * 70.0 - 42.0 * 42.0 - 40.0 * 40.0)})};
  AdamW::StepStats stats = opt.step(params, grads, 1e-3);
  CHECK(stats.grad_norm == doctest::Approx(70.0).epsilon(1e-12));
  CHECK(stats.clipped);
  CHECK(grads[0][0] == doctest::Approx(21.0).epsilon(1e-12));
  CHECK(grads[0][1] == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("optimizer aborts on non-finite gradients naming the parameter") {
  std::vector<std::pair<std::string, Tensor>> params{{"bad_param", Tensor({1}, 0.0)}};
  AdamW opt(params, AdamWConfig{});
  std::vector<Tensor> grads{Tensor({1}, std::numeric_limits<double>::quiet_NaN())};
  CHECK_THROWS_WITH_AS(opt.step(params, grads, 1e-3), doctest::Contains("bad_param"),
                       NumericError);
}

TEST_CASE("two trainers with one seed stay bit-identical over ten steps") {
  Dataset ds = toy_dataset(64, 5);
  TrainConfig cfg = small_config();
  Trainer a = make_trainer(ds, cfg);
  Trainer b = make_trainer(ds, cfg);
  a.set_total_iters(100);
  b.set_total_iters(100);
  std::vector<int> idx;
  for (int i = 0; i < cfg.batch_size; ++i) idx.push_back(i);
  Batch batch = make_batch(ds, idx);
  for (int step = 0; step < 10; ++step) {
    StepResult ra = a.train_step(batch);
    StepResult rb = b.train_step(batch);
    CHECK(ra.loss_total == rb.loss_total);
  }
  for (size_t i = 0; i < a.model().params.size(); ++i) {
    CHECK(bitwise_equal(a.model().params[i].second, b.model().params[i].second));
  }
}

TEST_CASE("canonical rows decay but receive no gradient when nothing is selected") {
  Dataset ds = toy_dataset(32, 7);
  TrainConfig cfg = small_config();
  cfg.strategy = InterventionStrategy::threshold(2.0);  // scores < 1: never selected
  Trainer t = make_trainer(ds, cfg);
  t.set_total_iters(100);
  Tensor z0 = t.model().param("z");
  std::vector<int> idx;
  for (int i = 0; i < cfg.batch_size; ++i) idx.push_back(i);
  StepResult res = t.train_step(make_batch(ds, idx));
  for (int64_t i = 0; i < res.mask.numel(); ++i) CHECK(res.mask[i] == 0.0);
  const Tensor& z1 = t.model().param("z");
  double lr = res.opt.lr;
  for (int64_t i = 0; i < z0.numel(); ++i) {
    // exact decoupled decay: zero gradient keeps both moments at zero
    CHECK(z1[i] == z0[i] - lr * (cfg.weight_decay * z0[i]));
  }
}

TEST_CASE("fit logs ceil(n/b) records per epoch and writes a checkpoint") {
  Dataset ds = toy_dataset(50, 9);
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  cfg.out_dir = "trainer_fit_out.tmp";
  std::filesystem::create_directories(cfg.out_dir);
  Trainer t = make_trainer(ds, cfg);
  std::vector<TrainLogRecord> log = t.fit(ds);
  CHECK(log.size() == 4);  // ceil(50/16)
  CHECK(std::filesystem::exists("trainer_fit_out.tmp/checkpoint.bin"));
  for (const auto& rec : log) {
    CHECK(std::isfinite(rec.loss_total));
    CHECK(rec.intervention_counts.size() == 8);
  }
  std::filesystem::remove_all(cfg.out_dir);
}

TEST_CASE("identical configs produce byte-identical checkpoints") {
  Dataset ds = toy_dataset(48, 13);
  TrainConfig cfg = small_config();
  auto run = [&](const std::string& path) {
    Trainer t = make_trainer(ds, cfg);
    t.fit(ds);
    t.make_checkpoint().save(path);
  };
  run("ckpt_a.tmp");
  run("ckpt_b.tmp");
  std::ifstream fa("ckpt_a.tmp", std::ios::binary), fb("ckpt_b.tmp", std::ios::binary);
  std::string a((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string b((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(a == b);
  CHECK(!a.empty());
  std::remove("ckpt_a.tmp");
  std::remove("ckpt_b.tmp");
}

TEST_CASE("resume continues the uninterrupted trajectory exactly") {
  Dataset ds = toy_dataset(48, 17);
  TrainConfig cfg = small_config();
  cfg.epochs = 4;

  Trainer full = make_trainer(ds, cfg);
  std::vector<TrainLogRecord> full_log = full.fit(ds);

  Trainer first_half = make_trainer(ds, cfg);
  std::vector<TrainLogRecord> log1 = first_half.fit(ds, nullptr, 2);
  Checkpoint mid = first_half.make_checkpoint();

  Trainer resumed = make_trainer(ds, cfg);
  resumed.restore(mid);
  std::vector<TrainLogRecord> log2 = resumed.fit(ds);

  CHECK(log1.size() + log2.size() == full_log.size());
  for (size_t i = 0; i < log2.size(); ++i) {
    CHECK(log2[i].loss_total == full_log[log1.size() + i].loss_total);
    CHECK(log2[i].lr == full_log[log1.size() + i].lr);
  }
  for (size_t i = 0; i < full.model().params.size(); ++i) {
    CHECK(bitwise_equal(full.model().params[i].second, resumed.model().params[i].second));
  }
}

TEST_CASE("checkpoints round-trip the model and trainer state") {
  Dataset ds = toy_dataset(32, 21);
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  Trainer t = make_trainer(ds, cfg);
  t.fit(ds);
  Checkpoint ckpt = t.make_checkpoint();
  ckpt.save("ckpt_rt.tmp");
  Checkpoint loaded = Checkpoint::load("ckpt_rt.tmp");
  CHECK(loaded.has_trainer_state);
  CHECK(loaded.opt_iter == ckpt.opt_iter);
  CHECK(loaded.epochs_done == 1);
  CHECK(loaded.dims.k == 8);
  REQUIRE(loaded.params.size() == ckpt.params.size());
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    CHECK(loaded.params[i].first == ckpt.params[i].first);
    CHECK(bitwise_equal(loaded.params[i].second, ckpt.params[i].second));
  }
  PoseModel m = loaded.to_model();
  CHECK(m.skeleton.canonical_form() == ds.skeleton.canonical_form());
  // corrupting a byte breaks the checksum
  {
    std::fstream f("ckpt_rt.tmp", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    char c;
    f.seekg(40);
    f.get(c);
    f.seekp(40);
    f.put(static_cast<char>(c ^ 0x1));
  }
  CHECK_THROWS_AS(Checkpoint::load("ckpt_rt.tmp"), DataError);
  std::remove("ckpt_rt.tmp");
}

TEST_CASE("the stage-2 hook swaps the data source at the configured epoch") {
  Dataset stage1 = toy_dataset(32, 23);
  BenchConfig cfg2;
  cfg2.n_samples = 32;
  cfg2.seed = 23;
  cfg2.occlusion_rate = 0.05;  // reduced-occlusion analog
  Dataset stage2 = generate_dataset(cfg2);

  TrainConfig cfg = small_config();
  cfg.epochs = 2;
  cfg.stage2_epoch = 2;
  Trainer with = make_trainer(stage1, cfg);
  auto log_with = with.fit(stage1, &stage2);

  TrainConfig plain = cfg;
  plain.stage2_epoch = 0;
  Trainer without = make_trainer(stage1, plain);
  auto log_without = without.fit(stage1);

  REQUIRE(log_with.size() == log_without.size());
  // epoch 0 identical, epoch 1 diverges once the source switches
  CHECK(log_with[0].loss_total == log_without[0].loss_total);
  bool diverged = false;
  for (size_t i = 0; i < log_with.size(); ++i) {
    if (log_with[i].epoch >= 1 && log_with[i].loss_total != log_without[i].loss_total) {
      diverged = true;
    }
  }
  CHECK(diverged);
}

TEST_CASE("loss halves within 200 iterations on a 50-sample set at defaults") {
  Dataset ds = toy_dataset(50, 27);
  TrainConfig cfg;  // desk defaults: lr 1e-3, warmup 100, B 32, d_emb 32, bins 32
  cfg.epochs = 200;
  cfg.seed = 11;
  cfg.strategy = InterventionStrategy::top_n(2);
  Trainer t = make_trainer(ds, cfg);
  auto log = t.fit(ds);
  REQUIRE(log.size() == 400);  // 2 iterations per epoch at B=32
  double early = 0.0, at200 = 0.0;
  for (int i = 0; i < 5; ++i) {
    early += log[static_cast<size_t>(i)].loss_total;
    at200 += log[static_cast<size_t>(195 + i)].loss_total;
  }
  CHECK(at200 < 0.5 * early);
}

TEST_CASE("evaluation runs the counterfactual path only and never touches the table") {
  Dataset ds = toy_dataset(16, 29);
  TrainConfig cfg = small_config();
  Trainer t = make_trainer(ds, cfg);
  Tensor z_before = t.model().param("z");
  std::vector<int> idx{0, 1, 2, 3};
  Batch batch = make_batch(ds, idx);
  PoseModel::EvalOut out = t.model().run_eval(batch.x);
  CHECK(bitwise_equal(t.model().param("z"), z_before));

  // the eval build has no observational branch
  Graph g;
  BuildOptions opt;
  opt.with_cim = true;
  PipelineHandles h = t.model().build(g, 4, opt);
  CHECK_FALSE(h.has_observational);
  CHECK(h.obs_px == -1);
}
