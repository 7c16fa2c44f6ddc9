#ifndef CAUSALPOSE_OPTIMIZER_HPP
#define CAUSALPOSE_OPTIMIZER_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "causalpose/tensor.hpp"

namespace causalpose {

struct LrSchedule {
  double base_lr = 1e-3;
  int64_t warmup_iters = 100;
  int64_t total_iters = 1;
  double floor_ratio = 0.05;  // cosine decays to base_lr * floor_ratio

  // linear ramp over the warmup, then cosine annealing to the floor
  double at(int64_t iter) const;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
  double grad_clip_norm = 35.0;  // <= 0 disables clipping
};

// Decoupled-weight-decay adaptive-moment optimizer over a named parameter
// list. Global gradient-norm clipping runs before the moment update.
class AdamW {
 public:
  AdamW(const std::vector<std::pair<std::string, Tensor>>& params, AdamWConfig cfg);

  struct StepStats {
    double grad_norm = 0.0;
    bool clipped = false;
    double lr = 0.0;
  };

  // grads must be ordered like the parameter list; non-finite entries abort
  // with the parameter name.
  StepStats step(std::vector<std::pair<std::string, Tensor>>& params,
                 std::vector<Tensor>& grads, double lr);

  int64_t iterations() const { return t_; }

  // state (de)serialization for exact resume
  const std::vector<Tensor>& moment1() const { return m_; }
  const std::vector<Tensor>& moment2() const { return v_; }
  void restore(std::vector<Tensor> m, std::vector<Tensor> v, int64_t t);

 private:
  AdamWConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  int64_t t_ = 0;
};

}  // namespace causalpose

#endif
