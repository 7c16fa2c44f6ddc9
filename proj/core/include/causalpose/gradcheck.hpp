#ifndef CAUSALPOSE_GRADCHECK_HPP
#define CAUSALPOSE_GRADCHECK_HPP

#include <map>
#include <string>
#include <vector>

#include "causalpose/graph.hpp"

namespace causalpose {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  int64_t checked = 0;
  // components whose disagreement stayed within the stencil's own 64-bit
  // cancellation floor (eps*|loss|/2h); only counted when a floor is enabled
  int64_t below_noise_floor = 0;
  double noise_floor = 0.0;
};

// Central-difference check of every component of every listed placeholder
// against the analytic reverse pass. Relative error is
// |analytic - cd| / max(|analytic|, |cd|, 1e-8).
//
// With noise_floor_scale > 0, components that miss the relative gate but
// agree within noise_floor_scale * eps * |loss| / (2*step) are excluded from
// max_rel_err: below that magnitude the stencil carries no signal, so
// relative comparison is meaningless at 64-bit. They still must agree
// absolutely at the floor.
GradCheckResult grad_check(Graph& g, NodeId loss, const std::vector<std::string>& params,
                           const std::map<std::string, Tensor>& point, double step = 1e-5,
                           double noise_floor_scale = 0.0);

// Named single-op checks; shared by the gradcheck command and the acceptance
// suite. stop_gradient is checked for exact zeros rather than against finite
// differences.
std::vector<std::string> gradcheck_op_names();
GradCheckResult gradcheck_op(const std::string& name, uint64_t seed);

// Full pipeline loss at random init (toy skeleton, d_emb=16). The selection
// mask and both fixed targets are frozen at the base point so the checked
// function is exactly the differentiable restriction the reverse pass
// computes.
GradCheckResult gradcheck_composite_loss(uint64_t seed);

}  // namespace causalpose

#endif
