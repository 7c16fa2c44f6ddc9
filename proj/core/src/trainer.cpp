#include "causalpose/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "causalpose/errors.hpp"
#include "causalpose/rng.hpp"

namespace causalpose {

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
  TrainConfig c;
  c.dataset = kv.get_str("dataset", "");
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.lr = kv.get_double("lr", c.lr);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.warmup_iters = kv.get_int("warmup_iters", c.warmup_iters);
  c.lr_floor_ratio = kv.get_double("lr_floor_ratio", c.lr_floor_ratio);
  c.grad_clip_norm = kv.get_double("grad_clip_norm", c.grad_clip_norm);
  c.lambda = kv.get_double("lambda", c.lambda);
  c.seed = static_cast<uint64_t>(kv.get_int("seed", 1));
  c.d_emb = static_cast<int>(kv.get_int("d_emb", c.d_emb));
  c.bins = static_cast<int>(kv.get_int("bins", c.bins));
  c.d_hidden = static_cast<int>(kv.get_int("d_hidden", c.d_hidden));
  c.sigma_bins = kv.get_double("sigma_bins", c.sigma_bins);
  c.score_loss_weight = kv.get_double("score_loss_weight", c.score_loss_weight);
  c.cim = kv.get_bool("cim", true);
  c.checkpoint_every = static_cast<int>(kv.get_int("checkpoint_every", c.checkpoint_every));
  c.stage2_epoch = static_cast<int>(kv.get_int("stage2_epoch", 0));
  c.stage2_dataset = kv.get_str("stage2_dataset", "");
  c.resume = kv.get_str("resume", "");
  c.skeleton = kv.get_str("skeleton", c.skeleton);
  std::string strat = kv.get_str("strategy", "topn");
  if (strat == "topn") {
    c.strategy = InterventionStrategy::top_n(static_cast<int>(kv.get_int("intervention_n", 2)));
  } else if (strat == "threshold") {
    c.strategy = InterventionStrategy::threshold(kv.get_double("threshold_tau", 0.8));
  } else {
    throw ConfigError("train config: strategy must be topn|threshold, got " + strat);
  }
  c.validate();
  return c;
}

void TrainConfig::apply_override(const std::string& key, const std::string& value) {
  KvConfig kv = KvConfig::parse_text(serialize(), "<resolved>");
  if (!kv.has(key)) throw ConfigError("override: unknown config key `" + key + "`");
  kv.set(key, value);
  *this = from_kv(kv);
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("train config: epochs must be positive");
  if (batch_size <= 0) throw ConfigError("train config: batch_size must be positive");
  if (lr <= 0.0) throw ConfigError("train config: lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be nonnegative");
  if (warmup_iters <= 0) throw ConfigError("train config: warmup_iters must be positive");
  if (lambda < 0.0) throw ConfigError("train config: lambda must be nonnegative");
  if (sigma_bins <= 0.0) throw ConfigError("train config: sigma_bins must be positive");
  if (d_emb <= 0 || bins <= 0 || d_hidden <= 0) {
    throw ConfigError("train config: model dims must be positive");
  }
  if (strategy.kind == StrategyKind::TopN && strategy.n < 0) {
    throw ConfigError("train config: intervention_n must be nonnegative");
  }
}

std::string TrainConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "dataset = " << dataset << "\n";
  os << "epochs = " << epochs << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "lr = " << lr << "\n";
  os << "weight_decay = " << weight_decay << "\n";
  os << "warmup_iters = " << warmup_iters << "\n";
  os << "lr_floor_ratio = " << lr_floor_ratio << "\n";
  os << "grad_clip_norm = " << grad_clip_norm << "\n";
  os << "lambda = " << lambda << "\n";
  os << "strategy = " << (strategy.kind == StrategyKind::TopN ? "topn" : "threshold") << "\n";
  os << "intervention_n = " << strategy.n << "\n";
  os << "threshold_tau = " << strategy.tau << "\n";
  os << "seed = " << seed << "\n";
  os << "d_emb = " << d_emb << "\n";
  os << "bins = " << bins << "\n";
  os << "d_hidden = " << d_hidden << "\n";
  os << "sigma_bins = " << sigma_bins << "\n";
  os << "score_loss_weight = " << score_loss_weight << "\n";
  os << "cim = " << (cim ? "on" : "off") << "\n";
  os << "checkpoint_every = " << checkpoint_every << "\n";
  os << "stage2_epoch = " << stage2_epoch << "\n";
  os << "stage2_dataset = " << stage2_dataset << "\n";
  os << "resume = " << resume << "\n";
  os << "skeleton = " << skeleton << "\n";
  return os.str();
}

Trainer::Trainer(PoseModel model, const TrainConfig& cfg)
    : model_(std::move(model)),
      cfg_(cfg),
      opt_(model_.params, AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay, cfg.grad_clip_norm}) {
  sched_.base_lr = cfg.lr;
  sched_.warmup_iters = cfg.warmup_iters;
  sched_.floor_ratio = cfg.lr_floor_ratio;
  sched_.total_iters = cfg.warmup_iters + 1;  // refined by fit()
}

Trainer::CachedGraph& Trainer::graph_for(int batch_size) {
  auto it = cache_.find(batch_size);
  if (it != cache_.end()) return it->second;
  CachedGraph cg;
  cg.graph = std::make_unique<Graph>();
  BuildOptions opt;
  opt.with_cim = cfg_.cim;
  opt.with_losses = true;
  opt.with_observational = cfg_.cim;
  opt.lambda = cfg_.lambda;
  opt.score_loss_weight = cfg_.score_loss_weight;
  cg.handles = model_.build(*cg.graph, batch_size, opt);
  return cache_.emplace(batch_size, std::move(cg)).first->second;
}

StepResult Trainer::train_step(const Batch& batch) {
  int B = batch.x.shape[0];
  CachedGraph& cg = graph_for(B);
  Graph& g = *cg.graph;
  const PipelineHandles& h = cg.handles;

  model_.bind_params(g);
  g.bind("in.x", batch.x);
  GroundTruthEncoding gt =
      encode_targets(batch.coords, batch.visibility, cfg_.sigma_bins, model_.dims.bins);
  g.bind("in.qx", gt.qx);
  g.bind("in.qy", gt.qy);
  g.bind("in.w", gt.w);

  StepResult res;
  if (cfg_.cim) {
    res.scores = confounder_scores(g.eval(h.score_px), g.eval(h.score_py));
    res.mask = select_intervention(res.scores, model_.strategy);
    Tensor stable({B, model_.dims.k});
    double n_stable = 0.0;
    for (int64_t i = 0; i < res.mask.numel(); ++i) {
      stable[i] = res.mask[i] != 0.0 ? 0.0 : 1.0;
      n_stable += stable[i];
    }
    g.bind("in.mask", res.mask);
    g.bind("in.stable", stable);
    g.bind("in.cf_norm", Tensor::scalar(n_stable > 0.0 ? 1.0 / n_stable : 0.0));
  }

  const Tensor& total = g.eval(h.loss_total);
  if (!total.all_finite()) {
    throw NumericError("train_step: non-finite loss at iteration " + std::to_string(iter_));
  }
  res.loss_total = total.data[0];
  res.loss_kpt = g.value(h.loss_kpt).data[0];
  res.loss_score = g.value(h.loss_score).data[0];
  res.loss_cf = h.loss_cf >= 0 ? g.eval(h.loss_cf).data[0] : 0.0;

  g.backward(h.loss_total);
  std::vector<Tensor> grads;
  grads.reserve(model_.params.size());
  for (const auto& [name, t] : model_.params) {
    std::string pname = PoseModel::param_placeholder(name);
    if (g.has_placeholder(pname) && g.has_grad(g.id_of(pname))) {
      grads.push_back(g.grad(g.id_of(pname)));
    } else {
      grads.push_back(Tensor::zeros(t.shape));  // not part of this graph
    }
  }
  res.opt = opt_.step(model_.params, grads, sched_.at(iter_));
  ++iter_;
  return res;
}

std::vector<TrainLogRecord> Trainer::fit(const Dataset& train, const Dataset* stage2,
                                         int stop_after_epochs) {
  if (train.size() == 0) throw DataError("fit: empty dataset");
  int64_t iters_per_epoch = (train.size() + cfg_.batch_size - 1) / cfg_.batch_size;
  sched_.total_iters = iters_per_epoch * cfg_.epochs;
  int last_epoch = stop_after_epochs > 0 ? std::min(stop_after_epochs, cfg_.epochs) : cfg_.epochs;

  std::vector<TrainLogRecord> log;
  for (int epoch = epochs_done_; epoch < last_epoch; ++epoch) {
    const Dataset& source =
        (stage2 != nullptr && cfg_.stage2_epoch > 0 && epoch + 1 >= cfg_.stage2_epoch) ? *stage2
                                                                                       : train;
    std::vector<int> order(static_cast<size_t>(source.size()));
    for (int i = 0; i < source.size(); ++i) order[static_cast<size_t>(i)] = i;
    Rng shuffle_rng(mix64(cfg_.seed, 0x73687566ULL, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg_.batch_size)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg_.batch_size));
      std::vector<int> idx(order.begin() + static_cast<int64_t>(start),
                           order.begin() + static_cast<int64_t>(stop));
      Batch batch = make_batch(source, idx);
      StepResult step = train_step(batch);

      TrainLogRecord rec;
      rec.iter = iter_ - 1;
      rec.epoch = epoch;
      rec.loss_total = step.loss_total;
      rec.loss_kpt = step.loss_kpt;
      rec.loss_cf = step.loss_cf;
      rec.loss_score = step.loss_score;
      rec.lr = step.opt.lr;
      rec.grad_norm = step.opt.grad_norm;
      rec.clipped = step.opt.clipped;
      rec.intervention_counts.assign(static_cast<size_t>(model_.dims.k), 0);
      if (step.mask.numel() > 0) {
        for (int b = 0; b < step.mask.shape[0]; ++b) {
          for (int kp = 0; kp < model_.dims.k; ++kp) {
            if (step.mask.at2(b, kp) != 0.0) ++rec.intervention_counts[static_cast<size_t>(kp)];
          }
        }
      }
      log.push_back(std::move(rec));
    }
    epochs_done_ = epoch + 1;

    if (!cfg_.out_dir.empty() &&
        (epochs_done_ % std::max(1, cfg_.checkpoint_every) == 0 || epochs_done_ == cfg_.epochs)) {
      Checkpoint ckpt = make_checkpoint();
      ckpt.save((std::filesystem::path(cfg_.out_dir) / "checkpoint.bin").string());
    }
  }
  return log;
}

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint c = Checkpoint::from_model(model_, cfg_.lambda);
  c.has_trainer_state = true;
  c.moment1 = opt_.moment1();
  c.moment2 = opt_.moment2();
  c.opt_iter = opt_.iterations();
  c.epochs_done = epochs_done_;
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  PoseModel restored = ckpt.to_model();
  if (restored.param_names() != model_.param_names()) {
    throw DataError("restore: checkpoint parameter set does not match the model");
  }
  model_ = std::move(restored);
  if (!ckpt.has_trainer_state) throw DataError("restore: checkpoint lacks trainer state");
  opt_.restore(ckpt.moment1, ckpt.moment2, ckpt.opt_iter);
  iter_ = ckpt.opt_iter;
  epochs_done_ = ckpt.epochs_done;
}

}  // namespace causalpose
