#ifndef CAUSALPOSE_TRAINER_HPP
#define CAUSALPOSE_TRAINER_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "causalpose/checkpoint.hpp"
#include "causalpose/kvconfig.hpp"
#include "causalpose/model.hpp"
#include "causalpose/objective.hpp"
#include "causalpose/optimizer.hpp"
#include "causalpose/synthbench.hpp"

namespace causalpose {

struct TrainConfig {
  std::string dataset;
  std::string out_dir;
  int epochs = 30;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.05;
  int64_t warmup_iters = 100;
  double lr_floor_ratio = 0.05;
  double grad_clip_norm = 35.0;
  double lambda = 0.1;
  InterventionStrategy strategy = InterventionStrategy::top_n(2);
  uint64_t seed = 1;
  int d_emb = 32;
  int bins = 32;
  int d_hidden = 64;
  double sigma_bins = 1.0;
  double score_loss_weight = 1.0;
  bool cim = true;  // off -> plain supervised baseline path
  int checkpoint_every = 1;
  int stage2_epoch = 0;  // 1-based first epoch trained on the stage-2 dataset; 0 disables
  std::string stage2_dataset;
  std::string resume;
  std::string skeleton = "builtin:toy8";

  static TrainConfig from_kv(const KvConfig& kv);
  void apply_override(const std::string& key, const std::string& value);
  std::string serialize() const;
  void validate() const;
};

struct TrainLogRecord {
  int64_t iter = 0;
  int epoch = 0;
  double loss_total = 0.0, loss_kpt = 0.0, loss_cf = 0.0, loss_score = 0.0;
  double lr = 0.0, grad_norm = 0.0;
  bool clipped = false;
  std::vector<int> intervention_counts;  // per keypoint type, this batch
};

struct StepResult {
  double loss_total = 0.0, loss_kpt = 0.0, loss_cf = 0.0, loss_score = 0.0;
  Tensor scores;  // B x K confounder scores (cim path only)
  Tensor mask;    // B x K selection mask (cim path only)
  AdamW::StepStats opt;
};

// Owns the parameters and optimizer state; runs the per-batch joint update of
// the network parameters and the canonical table: encode, score, select,
// replace, reason, predict on both paths, one optimizer step.
class Trainer {
 public:
  Trainer(PoseModel model, const TrainConfig& cfg);

  StepResult train_step(const Batch& batch);
  // Runs to cfg.epochs; stop_after_epochs > 0 interrupts at that epoch count
  // (checkpoints written along the way make the run resumable).
  std::vector<TrainLogRecord> fit(const Dataset& train, const Dataset* stage2 = nullptr,
                                  int stop_after_epochs = 0);

  void set_total_iters(int64_t total) { sched_.total_iters = total; }
  int64_t iterations() const { return iter_; }
  int epochs_done() const { return epochs_done_; }

  const PoseModel& model() const { return model_; }
  PoseModel& model() { return model_; }

  Checkpoint make_checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  struct CachedGraph {
    std::unique_ptr<Graph> graph;
    PipelineHandles handles;
  };
  CachedGraph& graph_for(int batch_size);

  PoseModel model_;
  TrainConfig cfg_;
  AdamW opt_;
  LrSchedule sched_;
  std::map<int, CachedGraph> cache_;
  int64_t iter_ = 0;
  int epochs_done_ = 0;
};

}  // namespace causalpose

#endif
