#include "causalpose/optimizer.hpp"

#include <cmath>

#include "causalpose/errors.hpp"

namespace causalpose {

double LrSchedule::at(int64_t iter) const {
  if (iter < warmup_iters) {
    return base_lr * static_cast<double>(iter + 1) / static_cast<double>(warmup_iters);
  }
  double floor = base_lr * floor_ratio;
  int64_t span = total_iters - warmup_iters;
  if (span <= 0) return floor;
  double prog = static_cast<double>(iter - warmup_iters) / static_cast<double>(span);
  prog = std::min(1.0, prog);
  return floor + 0.5 * (base_lr - floor) * (1.0 + std::cos(3.14159265358979323846 * prog));
}

AdamW::AdamW(const std::vector<std::pair<std::string, Tensor>>& params, AdamWConfig cfg)
    : cfg_(cfg) {
  for (const auto& [name, t] : params) {
    m_.push_back(Tensor::zeros(t.shape));
    v_.push_back(Tensor::zeros(t.shape));
  }
}

AdamW::StepStats AdamW::step(std::vector<std::pair<std::string, Tensor>>& params,
                             std::vector<Tensor>& grads, double lr) {
  if (grads.size() != params.size()) throw ConfigError("optimizer step: gradient list mismatch");
  StepStats stats;
  stats.lr = lr;

  double sq = 0.0;
  for (size_t i = 0; i < grads.size(); ++i) {
    const Tensor& g = grads[i];
    for (double gv : g.data) {
      if (!std::isfinite(gv)) {
        throw NumericError("non-finite gradient for parameter `" + params[i].first +
                           "` at optimizer iteration " + std::to_string(t_));
      }
      sq += gv * gv;
    }
  }
  stats.grad_norm = std::sqrt(sq);
  if (cfg_.grad_clip_norm > 0.0 && stats.grad_norm > cfg_.grad_clip_norm) {
    double scale = cfg_.grad_clip_norm / stats.grad_norm;
    for (auto& g : grads) {
      for (double& gv : g.data) gv *= scale;
    }
    stats.clipped = true;
  }

  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].second;
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const Tensor& g = grads[i];
    for (int64_t j = 0; j < p.numel(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[j]);
    }
  }
  return stats;
}

void AdamW::restore(std::vector<Tensor> m, std::vector<Tensor> v, int64_t t) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw DataError("optimizer restore: state size mismatch");
  }
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

}  // namespace causalpose
