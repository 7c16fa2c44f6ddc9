#include "causalpose/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "causalpose/checkpoint.hpp"
#include "causalpose/errors.hpp"
#include "causalpose/gradcheck.hpp"
#include "causalpose/metrics.hpp"
#include "causalpose/scm.hpp"
#include "causalpose/trainer.hpp"
#include "json.hpp"

namespace causalpose::cli {

namespace {
namespace fs = std::filesystem;
using nlohmann::json;

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::string>& overrides) {
  TrainConfig cfg = TrainConfig::from_kv(KvConfig::parse_file(config_path));
  for (const auto& ov : overrides) {
    size_t eq = ov.find('=');
    if (eq == std::string::npos) throw ConfigError("--override expects key=value, got " + ov);
    cfg.apply_override(ov.substr(0, eq), ov.substr(eq + 1));
  }
  if (cfg.dataset.empty()) throw ConfigError("train config: `dataset` is required");
  cfg.out_dir = out_dir;
  fs::create_directories(out_dir);

  Dataset train = load_dataset(cfg.dataset);
  Dataset stage2;
  bool has_stage2 = cfg.stage2_epoch > 0 && !cfg.stage2_dataset.empty();
  if (has_stage2) stage2 = load_dataset(cfg.stage2_dataset);

  ModelDims dims;
  dims.d_in = train.d_in;
  dims.k = train.k();
  dims.d_emb = cfg.d_emb;
  dims.d_hidden = cfg.d_hidden;
  dims.bins = cfg.bins;
  PoseModel model = PoseModel::init(dims, train.skeleton, cfg.strategy, cfg.seed);

  Trainer trainer(std::move(model), cfg);
  if (!cfg.resume.empty()) trainer.restore(Checkpoint::load(cfg.resume));

  write_file(fs::path(out_dir) / "resolved_config.txt", cfg.serialize());

  std::vector<TrainLogRecord> log = trainer.fit(train, has_stage2 ? &stage2 : nullptr);

  std::ofstream lf(fs::path(out_dir) / "train_log.jsonl");
  for (const auto& r : log) {
    json rec{{"iter", r.iter},
             {"epoch", r.epoch},
             {"loss_total", r.loss_total},
             {"loss_kpt", r.loss_kpt},
             {"loss_cf", r.loss_cf},
             {"loss_score", r.loss_score},
             {"lr", r.lr},
             {"grad_norm", r.grad_norm},
             {"clipped", r.clipped},
             {"intervention_counts", r.intervention_counts}};
    lf << rec.dump() << "\n";
  }
  if (!lf) throw DataError("train log write failed");
  std::printf("trained %d epochs, %lld iterations; outputs in %s\n", trainer.epochs_done(),
              static_cast<long long>(trainer.iterations()), out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_path, double radius,
             const std::vector<double>& enrich, bool freq, const std::string& out_dir) {
  PoseModel model = Checkpoint::load(ckpt_path).to_model();
  Dataset ds = load_dataset(dataset_path);
  EvalDump dump = evaluate_model(model, ds);  // throws DataError on mismatch

  std::vector<json> records;
  PckReport pck = pck_from_dump(dump, ds, radius);
  {
    json groups = json::object();
    for (const auto& [name, v] : pck.per_group) groups[name] = v;
    records.push_back(json{{"metric", "pck"},
                           {"radius", pck.radius},
                           {"overall", pck.overall},
                           {"visible_total", pck.visible_total},
                           {"groups", groups}});
    std::printf("pck@%.17g overall = %.17g  (visible keypoints: %lld)\n", radius, pck.overall,
                static_cast<long long>(pck.visible_total));
    for (const auto& [name, v] : pck.per_group) std::printf("pck.%s = %.17g\n", name.c_str(), v);
  }
  if (enrich.size() == 2) {
    EnrichmentReport er =
        enrichment_from_dump(dump, ds, static_cast<int>(enrich[0]), enrich[1]);
    records.push_back(json{{"metric", "enrichment"},
                           {"top_n", er.top_n},
                           {"easy_drop_p", er.easy_drop_p},
                           {"kept", er.kept},
                           {"excluded_empty_complement", er.excluded_empty_complement},
                           {"mean_delta", er.mean_delta},
                           {"ci_lo", er.ci_lo},
                           {"ci_hi", er.ci_hi}});
    std::printf("enrichment n=%d p=%.17g: mean delta = %.17g, 95%% ci [%.17g, %.17g], kept %lld\n",
                er.top_n, er.easy_drop_p, er.mean_delta, er.ci_lo, er.ci_hi,
                static_cast<long long>(er.kept));
  }
  if (freq) {
    FrequencyReport fr = frequency_from_dump(dump, ds);
    json groups = json::object();
    for (const auto& [name, f] : fr.per_group) groups[name] = f;
    records.push_back(
        json{{"metric", "intervention_frequency"}, {"overall", fr.overall}, {"groups", groups}});
    std::printf("intervention frequency overall = %.17g\n", fr.overall);
    for (const auto& [name, f] : fr.per_group) std::printf("freq.%s = %.17g\n", name.c_str(), f);
  }
  {
    ScoreValidationReport sv = score_validation_from_dump(dump, ds);
    json rec{{"metric", "confounder_scores"},
             {"n_occluded", sv.n_occluded},
             {"n_visible", sv.n_visible}};
    if (sv.occluded_group_present) {
      rec["median_occluded"] = sv.median_occluded;
      rec["q1_occluded"] = sv.q1_occluded;
      rec["q3_occluded"] = sv.q3_occluded;
      rec["rank_sum_z"] = sv.rank_sum.z;
      rec["rank_sum_p_one_sided"] = sv.rank_sum.p_one_sided;
    } else {
      rec["occluded_group"] = "absent";
    }
    if (sv.n_visible > 0) {
      rec["median_visible"] = sv.median_visible;
      rec["q1_visible"] = sv.q1_visible;
      rec["q3_visible"] = sv.q3_visible;
    }
    records.push_back(rec);
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream mf(fs::path(out_dir) / "metrics.jsonl");
    for (const auto& r : records) mf << r.dump() << "\n";
    if (!mf) throw DataError("metrics write failed");
  }
  return 0;
}

int cmd_gen(const std::string& config_path, const std::string& out_dir) {
  BenchConfig cfg = BenchConfig::from_file(config_path);
  Dataset ds = generate_dataset(cfg);
  fs::create_directories(out_dir);
  save_dataset(ds, (fs::path(out_dir) / "dataset.bin").string(),
               (fs::path(out_dir) / "manifest.txt").string());
  std::printf("generated %d samples (K=%d, d_in=%d) into %s\n", ds.size(), ds.k(), ds.d_in,
              out_dir.c_str());
  return 0;
}

int cmd_scm_verify(const std::string& scm_path, int random_count, uint64_t seed, double tolerance) {
  if (!scm_path.empty()) {
    DiscreteScm scm = [&]() {
      try {
        return DiscreteScm::load_file(scm_path);
      } catch (const DataError& e) {
        // malformed input is a usage error for this command
        throw ConfigError(e.what());
      }
    }();
    DoCalcReport rep = verify_docalc(scm, tolerance);
    std::fputs(rep.str().c_str(), stdout);
    std::printf("%s\n", rep.all_pass() ? "PASS" : "FAIL");
    return rep.all_pass() ? 0 : 1;
  }
  int pass = 0;
  double worst3 = 0.0, worst2 = 0.0, worst1 = 0.0;
  for (int i = 0; i < random_count; ++i) {
    Rng rng(mix64(seed, static_cast<uint64_t>(i)));
    DiscreteScm scm = DiscreteScm::random(rng);
    DoCalcReport rep = verify_docalc(scm, tolerance);
    worst3 = std::max(worst3, rep.max_dev_rule3);
    worst2 = std::max(worst2, rep.max_dev_rule2);
    worst1 = std::max(worst1, rep.max_dev_adjustment);
    if (rep.all_pass()) ++pass;
  }
  std::printf("%d/%d random models pass at tolerance %.17g\n", pass, random_count, tolerance);
  std::printf("worst deviations: action-invariance %.17g, exchange %.17g, adjustment %.17g\n",
              worst3, worst2, worst1);
  return pass == random_count ? 0 : 1;
}

int cmd_gradcheck(const std::string& only_op, uint64_t seed) {
  bool all_ok = true;
  auto report = [&](const std::string& name, const GradCheckResult& res) {
    bool ok = res.max_rel_err < 1e-4;
    all_ok = all_ok && ok;
    std::printf("%-18s max rel err %.17g over %lld checks  %s", name.c_str(), res.max_rel_err,
                static_cast<long long>(res.checked), ok ? "PASS" : "FAIL");
    if (!ok && !res.worst_param.empty()) {
      std::printf("  (worst: %s[%lld])", res.worst_param.c_str(),
                  static_cast<long long>(res.worst_index));
    }
    std::printf("\n");
  };
  if (!only_op.empty()) {
    report(only_op, gradcheck_op(only_op, seed));
  } else {
    for (const auto& name : gradcheck_op_names()) report(name, gradcheck_op(name, seed));
    report("composite_loss", gradcheck_composite_loss(seed));
  }
  return all_ok ? 0 : 1;
}

int cmd_dump_embeddings(const std::string& ckpt_path, const std::string& dataset_path,
                        const std::string& out_path, int sample_count) {
  PoseModel model = Checkpoint::load(ckpt_path).to_model();
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot write " + out_path);

  const Tensor& z = model.param("z");
  for (int kp = 0; kp < model.dims.k; ++kp) {
    json row{{"kind", "z"},
             {"keypoint", kp},
             {"name", model.skeleton.names[static_cast<size_t>(kp)]}};
    std::vector<double> vec(static_cast<size_t>(model.dims.d_emb));
    for (int j = 0; j < model.dims.d_emb; ++j) vec[static_cast<size_t>(j)] = z.at2(kp, j);
    row["vec"] = vec;
    out << row.dump() << "\n";
  }

  if (!dataset_path.empty() && sample_count > 0) {
    Dataset ds = load_dataset(dataset_path);
    if (ds.d_in != model.dims.d_in || ds.k() != model.dims.k) {
      throw DataError("dump-embeddings: dataset geometry does not match the checkpoint");
    }
    int n = std::min(sample_count, ds.size());
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    Batch batch = make_batch(ds, idx);

    Graph g;
    BuildOptions opt;
    opt.with_cim = false;
    PipelineHandles h = model.build(g, n, opt);
    model.bind_params(g);
    g.bind("in.x", batch.x);
    Tensor f = g.eval(h.embeddings);
    for (int i = 0; i < n; ++i) {
      for (int kp = 0; kp < model.dims.k; ++kp) {
        json row{{"kind", "f"},
                 {"sample", i},
                 {"keypoint", kp},
                 {"name", model.skeleton.names[static_cast<size_t>(kp)]},
                 {"context", ds.samples[static_cast<size_t>(i)].context_id},
                 {"occluded",
                  static_cast<bool>(ds.samples[static_cast<size_t>(i)].occluded[static_cast<size_t>(kp)])}};
        std::vector<double> vec(static_cast<size_t>(model.dims.d_emb));
        for (int j = 0; j < model.dims.d_emb; ++j) vec[static_cast<size_t>(j)] = f.at3(i, kp, j);
        row["vec"] = vec;
        out << row.dump() << "\n";
      }
    }
  }
  if (!out) throw DataError("embedding dump write failed");
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"causal-intervention pose estimation workbench"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a model from a config file");
  std::string train_config, train_out;
  std::vector<std::string> overrides;
  train->add_option("--config", train_config, "key=value config file")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--override", overrides, "override a config key, key=value");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_data, eval_out;
  double eval_radius = 0.05;
  std::vector<double> enrich;
  bool freq = false;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--dataset", eval_data)->required();
  eval->add_option("--radius", eval_radius, "pck radius in normalized units");
  eval->add_option("--enrich", enrich, "top-n and easy-drop fraction")->expected(2);
  eval->add_flag("--freq", freq, "emit per-group intervention frequencies");
  eval->add_option("--out", eval_out, "directory for metrics.jsonl");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic benchmark dataset");
  std::string gen_config, gen_out;
  gen->add_option("--config", gen_config)->required();
  gen->add_option("--out", gen_out, "output directory")->required();

  // scm-verify
  auto* scmv = app.add_subcommand("scm-verify", "verify the adjustment identities on an scm");
  std::string scm_file;
  int random_count = 0;
  uint64_t scm_seed = 7;
  double scm_tol = 1e-11;
  scmv->add_option("file", scm_file, "scm definition file");
  scmv->add_option("--random", random_count, "verify N random models instead");
  scmv->add_option("--seed", scm_seed);
  scmv->add_option("--tolerance", scm_tol);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks for ops and the full loss");
  std::string gc_op;
  uint64_t gc_seed = 1;
  gc->add_option("--op", gc_op, "check a single op");
  gc->add_option("--seed", gc_seed);

  // dump-embeddings
  auto* dump = app.add_subcommand("dump-embeddings", "write canonical and sampled embeddings");
  std::string dump_ckpt, dump_data, dump_out;
  int dump_samples = 64;
  dump->add_option("--checkpoint", dump_ckpt)->required();
  dump->add_option("--dataset", dump_data);
  dump->add_option("--out", dump_out)->required();
  dump->add_option("--samples", dump_samples);

  std::vector<char*> argv;
  std::vector<std::string> storage;
  storage.emplace_back("causalpose");
  for (const auto& a : args) storage.push_back(a);
  for (auto& s : storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(train_config, train_out, overrides);
    if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_radius, enrich, freq, eval_out);
    if (*gen) return cmd_gen(gen_config, gen_out);
    if (*scmv) {
      if (scm_file.empty() && random_count <= 0) {
        throw ConfigError("scm-verify: pass a file or --random N");
      }
      return cmd_scm_verify(scm_file, random_count, scm_seed, scm_tol);
    }
    if (*gc) return cmd_gradcheck(gc_op, gc_seed);
    if (*dump) return cmd_dump_embeddings(dump_ckpt, dump_data, dump_out, dump_samples);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

}  // namespace causalpose::cli
