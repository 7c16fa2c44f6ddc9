#ifndef CAUSALPOSE_MODEL_HPP
#define CAUSALPOSE_MODEL_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "causalpose/graph.hpp"
#include "causalpose/skeleton.hpp"

namespace causalpose {

struct ModelDims {
  int d_in = 0;
  int k = 0;
  int d_emb = 32;
  int d_hidden = 64;
  int bins = 32;
};

enum class StrategyKind { TopN, Threshold };

struct InterventionStrategy {
  StrategyKind kind = StrategyKind::TopN;
  int n = 0;
  double tau = 0.0;

  static InterventionStrategy top_n(int n) { return {StrategyKind::TopN, n, 0.0}; }
  static InterventionStrategy threshold(double tau) { return {StrategyKind::Threshold, 0, tau}; }
  std::string str() const;
};

// ------------------------------------------------------------------
// graph builders (each returns node ids inside the caller's Graph)
// ------------------------------------------------------------------

struct SimccOut {
  NodeId px = -1, py = -1;  // B x K x bins each, rows sum to 1
};

// hidden = relu(x w0 + b0); per-keypoint heads packed into one matrix:
// F = reshape(hidden wh + bh, [B,K,d])
NodeId build_encoder(Graph& g, NodeId x, NodeId w0, NodeId b0, NodeId wh, NodeId bh,
                     const ModelDims& dims);

SimccOut build_simcc_head(Graph& g, NodeId feats, NodeId wx, NodeId bx, NodeId wy, NodeId by);

// Edge convolution with explicit directed edge list and residual connection:
// out_k = max_{j in N(k)} mlp([f_k ; f_j - f_k]) + f_k
NodeId build_edgeconv(Graph& g, NodeId feats, const std::vector<int>& dst,
                      const std::vector<int>& src, int n_nodes, NodeId w1, NodeId b1, NodeId w2,
                      NodeId b2);

// intra-part stage over the physical skeleton edges
NodeId build_intra_part(Graph& g, NodeId feats, const SkeletonSpec& spec, NodeId w1, NodeId b1,
                        NodeId w2, NodeId b2);

struct AttentionParams {
  NodeId conv_w1, conv_b1, conv_w2, conv_b2;  // group-graph edge conv
  NodeId gate_w1, gate_b1, gate_w2, gate_b2;  // one-hidden-layer gate mlp
};

// Inter-part stage: mean-pool groups, one edge conv over the fully connected
// group graph, then channel-wise sigmoid gates averaged over the groups each
// keypoint belongs to.
NodeId build_inter_part(Graph& g, NodeId feats, const SkeletonSpec& spec,
                        const AttentionParams& p);

// ------------------------------------------------------------------
// host-side (non-differentiable) pieces
// ------------------------------------------------------------------

// s(b,k) = 1 - (max px + max py)/2, in [0, 1)
Tensor confounder_scores(const Tensor& px, const Tensor& py);

// 0/1 mask, B x K. Top-n breaks score ties toward the lower keypoint index.
Tensor select_intervention(const Tensor& scores, const InterventionStrategy& strategy);

// argmax decoding to bin centers in [0,1]; ties pick the lower bin
Tensor decode_coords(const Tensor& px, const Tensor& py);

// ------------------------------------------------------------------
// assembled pipeline
// ------------------------------------------------------------------

struct BuildOptions {
  bool with_cim = true;            // scoring -> mask -> counterfactual replacement
  bool with_losses = false;
  bool with_observational = false; // live observational path behind stop-gradient
  bool frozen_consistency_target = false;  // bind obs targets via in.obs_px / in.obs_py
  double lambda = 0.0;
  double score_loss_weight = 1.0;
};

struct PipelineHandles {
  int batch = 0;
  NodeId x = -1;
  NodeId embeddings = -1;       // F
  NodeId score_px = -1, score_py = -1;
  NodeId mask = -1;             // placeholder in.mask (cim only)
  NodeId replaced = -1;         // F' after masked replacement
  NodeId refined = -1;          // F'' after graph reasoning
  NodeId px = -1, py = -1;      // final coordinate distributions
  NodeId obs_px = -1, obs_py = -1;          // live observational dists
  NodeId target_px = -1, target_py = -1;    // consistency targets (sg or frozen)
  NodeId qx = -1, qy = -1, w = -1;          // loss placeholders
  NodeId stable = -1, cf_norm = -1;
  NodeId loss_kpt = -1, loss_cf = -1, loss_score = -1, loss_total = -1;
  bool has_observational = false;
};

class PoseModel {
 public:
  ModelDims dims;
  SkeletonSpec skeleton;
  InterventionStrategy strategy;
  std::vector<std::pair<std::string, Tensor>> params;  // fixed order

  static PoseModel init(const ModelDims& dims, SkeletonSpec skeleton,
                        InterventionStrategy strategy, uint64_t seed);

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  bool has_param(const std::string& name) const;
  std::vector<std::string> param_names() const;
  int64_t param_count() const;

  PipelineHandles build(Graph& g, int batch, const BuildOptions& opt) const;
  void bind_params(Graph& g) const;
  static std::string param_placeholder(const std::string& name) { return "p." + name; }

  struct EvalOut {
    Tensor px, py;      // B x K x bins
    Tensor scores;      // B x K
    Tensor mask;        // B x K
    Tensor coords;      // B x K x 2
  };
  // Counterfactual path only; never touches the observational branch.
  EvalOut run_eval(const Tensor& x_batch) const;
};

}  // namespace causalpose

#endif
