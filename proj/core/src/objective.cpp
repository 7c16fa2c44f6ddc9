#include "causalpose/objective.hpp"

#include <cmath>

#include "causalpose/errors.hpp"

namespace causalpose {

namespace {
constexpr double kKlEps = 1e-12;

void fill_axis(Tensor& q, int b, int k, double coord, double sigma_bins, int bins, int* clamped) {
  if (coord < 0.0 || coord > 1.0) {
    coord = std::min(1.0, std::max(0.0, coord));
    ++*clamped;
  }
  // distances to bin centers, shifted so the largest term is exp(0); keeps
  // the row well-defined for arbitrarily small sigma
  double sigma = sigma_bins / bins;
  double best = 1e300;
  std::vector<double> d2(static_cast<size_t>(bins));
  for (int i = 0; i < bins; ++i) {
    double c = (i + 0.5) / bins;
    d2[static_cast<size_t>(i)] = (c - coord) * (c - coord);
    best = std::min(best, d2[static_cast<size_t>(i)]);
  }
  double denom = 2.0 * sigma * sigma;
  double sum = 0.0;
  for (int i = 0; i < bins; ++i) {
    double v = std::exp(-(d2[static_cast<size_t>(i)] - best) / denom);
    q.at3(b, k, i) = v;
    sum += v;
  }
  for (int i = 0; i < bins; ++i) q.at3(b, k, i) /= sum;
}
}  // namespace

GroundTruthEncoding encode_targets(const Tensor& coords, const Tensor& visibility,
                                   double sigma_bins, int bins) {
  if (coords.rank() != 3 || coords.shape[2] != 2) {
    throw ShapeError("encode_targets: want B x K x 2 coords, got " + shape_str(coords.shape));
  }
  if (sigma_bins <= 0.0) throw ConfigError("encode_targets: sigma_bins must be positive");
  int b = coords.shape[0], k = coords.shape[1];
  if (visibility.shape != Shape{b, k}) {
    throw ShapeError("encode_targets: visibility must be B x K");
  }
  GroundTruthEncoding gt;
  gt.qx = Tensor({b, k, bins});
  gt.qy = Tensor({b, k, bins});
  gt.w = visibility;
  for (double v : gt.w.data) {
    if (v != 0.0 && v != 1.0) throw DataError("encode_targets: visibility weights must be binary");
  }
  for (int bb = 0; bb < b; ++bb) {
    for (int kk = 0; kk < k; ++kk) {
      fill_axis(gt.qx, bb, kk, coords.at3(bb, kk, 0), sigma_bins, bins, &gt.clamped);
      fill_axis(gt.qy, bb, kk, coords.at3(bb, kk, 1), sigma_bins, bins, &gt.clamped);
    }
  }
  return gt;
}

double kl_divergence(const std::vector<double>& q, const std::vector<double>& p) {
  if (q.size() != p.size()) throw ShapeError("kl_divergence: length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < q.size(); ++i) {
    if (q[i] > 0.0) acc += q[i] * std::log(q[i] / std::max(p[i], kKlEps));
  }
  return acc;
}

namespace {
double row_kl(const Tensor& q, const Tensor& p, int b, int k) {
  int bins = q.shape[2];
  double acc = 0.0;
  for (int i = 0; i < bins; ++i) {
    double qv = q.at3(b, k, i);
    if (qv > 0.0) acc += qv * std::log(qv / std::max(p.at3(b, k, i), kKlEps));
  }
  return acc;
}
}  // namespace

double keypoint_loss(const GroundTruthEncoding& gt, const Tensor& px, const Tensor& py) {
  if (px.shape != gt.qx.shape || py.shape != gt.qy.shape) {
    throw ShapeError("keypoint_loss: prediction/target shape mismatch");
  }
  int b = px.shape[0], k = px.shape[1];
  double total = 0.0;
  for (int bb = 0; bb < b; ++bb) {
    for (int kk = 0; kk < k; ++kk) {
      total += gt.w.at2(bb, kk) * (row_kl(gt.qx, px, bb, kk) + row_kl(gt.qy, py, bb, kk));
    }
  }
  return total / b;
}

double consistency_loss(const Tensor& obs_px, const Tensor& obs_py, const Tensor& cf_px,
                        const Tensor& cf_py, const Tensor& mask) {
  if (obs_px.shape != cf_px.shape || obs_py.shape != cf_py.shape) {
    throw ShapeError("consistency_loss: path shape mismatch");
  }
  int b = cf_px.shape[0], k = cf_px.shape[1];
  if (mask.shape != Shape{b, k}) throw ShapeError("consistency_loss: mask must be B x K");
  double total = 0.0;
  int64_t stable = 0;
  for (int bb = 0; bb < b; ++bb) {
    for (int kk = 0; kk < k; ++kk) {
      if (mask.at2(bb, kk) != 0.0) continue;
      ++stable;
      total += row_kl(obs_px, cf_px, bb, kk) + row_kl(obs_py, cf_py, bb, kk);
    }
  }
  if (stable == 0) return 0.0;
  return total / static_cast<double>(stable);
}

double total_loss(double l_kpt, double l_cf, double lambda) {
  if (lambda < 0.0) throw ConfigError("total_loss: lambda must be nonnegative");
  return l_kpt + lambda * l_cf;
}

}  // namespace causalpose
