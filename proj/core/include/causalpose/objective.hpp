#ifndef CAUSALPOSE_OBJECTIVE_HPP
#define CAUSALPOSE_OBJECTIVE_HPP

#include "causalpose/tensor.hpp"

namespace causalpose {

// Targets for both axes plus binary visibility weights.
struct GroundTruthEncoding {
  Tensor qx;  // B x K x bins, rows sum to 1
  Tensor qy;
  Tensor w;   // B x K in {0,1}
  int clamped = 0;  // coords outside [0,1] clamped, counted
};

// Discretized Gaussian around the true bin, renormalized per row.
// sigma_bins is measured in bin widths.
GroundTruthEncoding encode_targets(const Tensor& coords, const Tensor& visibility,
                                   double sigma_bins, int bins);

// KL(q || p) over one distribution; 0 log 0 = 0, p floored at 1e-12.
double kl_divergence(const std::vector<double>& q, const std::vector<double>& p);

// sum_k w_k [KL(Qx||Px) + KL(Qy||Py)], averaged over the batch
double keypoint_loss(const GroundTruthEncoding& gt, const Tensor& px, const Tensor& py);

// mean over non-intervened keypoints of KL(obs || cf), both axes summed.
// The observational side enters as a fixed target. An empty stable set
// yields 0.
double consistency_loss(const Tensor& obs_px, const Tensor& obs_py, const Tensor& cf_px,
                        const Tensor& cf_py, const Tensor& mask);

double total_loss(double l_kpt, double l_cf, double lambda);

}  // namespace causalpose

#endif
