#include "causalpose/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "causalpose/errors.hpp"
#include "causalpose/rng.hpp"

namespace causalpose {

std::string InterventionStrategy::str() const {
  std::ostringstream os;
  if (kind == StrategyKind::TopN) {
    os << "topn " << n;
  } else {
    os << "threshold " << tau;
  }
  return os.str();
}

NodeId build_encoder(Graph& g, NodeId x, NodeId w0, NodeId b0, NodeId wh, NodeId bh,
                     const ModelDims& dims) {
  NodeId hidden = g.relu(g.add(g.matmul(x, w0), b0));
  NodeId flat = g.add(g.matmul(hidden, wh), bh);
  int batch = g.shape_of(x)[0];
  return g.reshape(flat, {batch, dims.k, dims.d_emb});
}

SimccOut build_simcc_head(Graph& g, NodeId feats, NodeId wx, NodeId bx, NodeId wy, NodeId by) {
  SimccOut out;
  out.px = g.softmax(g.add(g.matmul(feats, wx), bx), -1);
  out.py = g.softmax(g.add(g.matmul(feats, wy), by), -1);
  return out;
}

NodeId build_edgeconv(Graph& g, NodeId feats, const std::vector<int>& dst,
                      const std::vector<int>& src, int n_nodes, NodeId w1, NodeId b1, NodeId w2,
                      NodeId b2) {
  if (dst.empty()) return feats;  // single-node graph: residual only
  NodeId fd = g.gather(feats, 1, dst);
  NodeId fs = g.gather(feats, 1, src);
  NodeId edge_feat = g.concat({fd, g.sub(fs, fd)}, 2);
  NodeId h = g.relu(g.add(g.matmul(edge_feat, w1), b1));
  NodeId msg = g.add(g.matmul(h, w2), b2);
  NodeId agg = g.segment_max(msg, dst, n_nodes);
  return g.add(agg, feats);
}

NodeId build_intra_part(Graph& g, NodeId feats, const SkeletonSpec& spec, NodeId w1, NodeId b1,
                        NodeId w2, NodeId b2) {
  std::vector<int> dst, src;
  for (int k = 0; k < spec.k; ++k) {
    for (int j : spec.neighbors(k)) {
      dst.push_back(k);
      src.push_back(j);
    }
  }
  return build_edgeconv(g, feats, dst, src, spec.k, w1, b1, w2, b2);
}

NodeId build_inter_part(Graph& g, NodeId feats, const SkeletonSpec& spec,
                        const AttentionParams& p) {
  int n_groups = spec.group_count();
  std::vector<NodeId> pooled;
  for (const auto& he : spec.hyperedges) {
    pooled.push_back(g.mean_axis(g.gather(feats, 1, he.members), 1));
  }
  NodeId groups = g.stack(pooled, 1);  // B x G x d

  std::vector<int> dst, src;
  for (int e = 0; e < n_groups; ++e) {
    for (int j = 0; j < n_groups; ++j) {
      if (j == e) continue;
      dst.push_back(e);
      src.push_back(j);
    }
  }
  NodeId refined_groups =
      build_edgeconv(g, groups, dst, src, n_groups, p.conv_w1, p.conv_b1, p.conv_w2, p.conv_b2);

  NodeId gate_hidden = g.relu(g.add(g.matmul(refined_groups, p.gate_w1), p.gate_b1));
  NodeId gates = g.sigmoid(g.add(g.matmul(gate_hidden, p.gate_w2), p.gate_b2));  // B x G x d

  std::vector<NodeId> per_kp;
  for (int k = 0; k < spec.k; ++k) {
    const auto& gs = spec.groups_of[static_cast<size_t>(k)];
    if (gs.empty()) throw DataError("keypoint " + std::to_string(k) + " belongs to no hyperedge");
    per_kp.push_back(g.mean_axis(g.gather(gates, 1, gs), 1));
  }
  NodeId kp_gates = g.stack(per_kp, 1);  // B x K x d
  return g.mul(feats, kp_gates);
}

Tensor confounder_scores(const Tensor& px, const Tensor& py) {
  if (px.rank() != 3 || py.rank() != 3 || px.shape[0] != py.shape[0] || px.shape[1] != py.shape[1]) {
    throw ShapeError("confounder_scores: want matching B x K x bins inputs");
  }
  int b = px.shape[0], k = px.shape[1];
  Tensor s({b, k});
  auto row_max = [](const Tensor& t, int bb, int kk) {
    int bins = t.shape[2];
    double m = t.at3(bb, kk, 0);
    for (int i = 1; i < bins; ++i) m = std::max(m, t.at3(bb, kk, i));
    return m;
  };
  for (int bb = 0; bb < b; ++bb) {
    for (int kk = 0; kk < k; ++kk) {
      s.at2(bb, kk) = 1.0 - 0.5 * (row_max(px, bb, kk) + row_max(py, bb, kk));
    }
  }
  return s;
}

Tensor select_intervention(const Tensor& scores, const InterventionStrategy& strategy) {
  if (scores.rank() != 2) throw ShapeError("select_intervention: want B x K scores");
  int b = scores.shape[0], k = scores.shape[1];
  Tensor mask({b, k}, 0.0);
  if (strategy.kind == StrategyKind::TopN) {
    if (strategy.n < 0 || strategy.n > k) {
      throw ConfigError("select_intervention: n=" + std::to_string(strategy.n) +
                        " outside [0, K=" + std::to_string(k) + "]");
    }
    std::vector<int> order(static_cast<size_t>(k));
    for (int bb = 0; bb < b; ++bb) {
      std::iota(order.begin(), order.end(), 0);
      // stable sort keeps the lower index first on equal scores
      std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
        return scores.at2(bb, i) > scores.at2(bb, j);
      });
      for (int i = 0; i < strategy.n; ++i) mask.at2(bb, order[static_cast<size_t>(i)]) = 1.0;
    }
  } else {
    for (int bb = 0; bb < b; ++bb) {
      for (int kk = 0; kk < k; ++kk) {
        if (scores.at2(bb, kk) > strategy.tau) mask.at2(bb, kk) = 1.0;
      }
    }
  }
  return mask;
}

Tensor decode_coords(const Tensor& px, const Tensor& py) {
  int b = px.shape[0], k = px.shape[1];
  Tensor out({b, k, 2});
  auto arg_max = [](const Tensor& t, int bb, int kk) {
    int bins = t.shape[2];
    int best = 0;
    double bv = t.at3(bb, kk, 0);
    for (int i = 1; i < bins; ++i) {
      if (t.at3(bb, kk, i) > bv) {
        bv = t.at3(bb, kk, i);
        best = i;
      }
    }
    return best;
  };
  for (int bb = 0; bb < b; ++bb) {
    for (int kk = 0; kk < k; ++kk) {
      out.at3(bb, kk, 0) = (arg_max(px, bb, kk) + 0.5) / px.shape[2];
      out.at3(bb, kk, 1) = (arg_max(py, bb, kk) + 0.5) / py.shape[2];
    }
  }
  return out;
}

// ------------------------------------------------------------------
// PoseModel
// ------------------------------------------------------------------

PoseModel PoseModel::init(const ModelDims& dims, SkeletonSpec skeleton,
                          InterventionStrategy strategy, uint64_t seed) {
  auto violations = skeleton.validate();
  if (!violations.empty()) {
    std::string msg = "model init: skeleton invalid:";
    for (const auto& v : violations) msg += " " + v + ";";
    throw DataError(msg);
  }
  if (skeleton.k != dims.k) throw DataError("model init: dims.k does not match skeleton");
  if (strategy.kind == StrategyKind::TopN && (strategy.n < 0 || strategy.n > dims.k)) {
    throw ConfigError("model init: intervention n outside [0, K]");
  }
  PoseModel m;
  m.dims = dims;
  m.skeleton = std::move(skeleton);
  m.strategy = strategy;

  int d = dims.d_emb, h = dims.d_hidden, k = dims.k, bins = dims.bins;
  auto weight = [&](const std::string& name, int rows, int cols) {
    m.params.emplace_back(name, Tensor({rows, cols}));
  };
  auto bias = [&](const std::string& name, int n) { m.params.emplace_back(name, Tensor({n})); };

  weight("enc.w0", dims.d_in, h);
  bias("enc.b0", h);
  weight("enc.wh", h, k * d);
  bias("enc.bh", k * d);
  weight("score.wx", d, bins);
  bias("score.bx", bins);
  weight("score.wy", d, bins);
  bias("score.by", bins);
  weight("gnn.part.w1", 2 * d, d);
  bias("gnn.part.b1", d);
  weight("gnn.part.w2", d, d);
  bias("gnn.part.b2", d);
  weight("gnn.group.w1", 2 * d, d);
  bias("gnn.group.b1", d);
  weight("gnn.group.w2", d, d);
  bias("gnn.group.b2", d);
  weight("gnn.gate.w1", d, d);
  bias("gnn.gate.b1", d);
  weight("gnn.gate.w2", d, d);
  bias("gnn.gate.b2", d);
  weight("head.wx", d, bins);
  bias("head.bx", bins);
  weight("head.wy", d, bins);
  bias("head.by", bins);
  weight("z", k, d);

  for (size_t i = 0; i < m.params.size(); ++i) {
    auto& [name, t] = m.params[i];
    Rng rng(mix64(seed, 0x6d6f64656cULL, i));
    if (name == "z") {
      for (auto& v : t.data) v = rng.normal(0.0, 0.01);
    } else if (t.rank() == 2) {
      double scale = 1.0 / std::sqrt(static_cast<double>(t.shape[0]));
      for (auto& v : t.data) v = rng.normal(0.0, scale);
    }
    // biases stay zero
  }
  return m;
}

Tensor& PoseModel::param(const std::string& name) {
  for (auto& [n, t] : params) {
    if (n == name) return t;
  }
  throw ConfigError("unknown parameter: " + name);
}

const Tensor& PoseModel::param(const std::string& name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return t;
  }
  throw ConfigError("unknown parameter: " + name);
}

bool PoseModel::has_param(const std::string& name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return true;
  }
  return false;
}

std::vector<std::string> PoseModel::param_names() const {
  std::vector<std::string> out;
  for (const auto& [n, t] : params) out.push_back(n);
  return out;
}

int64_t PoseModel::param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

void PoseModel::bind_params(Graph& g) const {
  for (const auto& [name, t] : params) {
    std::string pname = param_placeholder(name);
    if (g.has_placeholder(pname)) g.bind(pname, t);
  }
}

PipelineHandles PoseModel::build(Graph& g, int batch, const BuildOptions& opt) const {
  PipelineHandles h;
  h.batch = batch;
  auto P = [&](const std::string& name) {
    return g.placeholder(param_placeholder(name), param(name).shape, true);
  };

  h.x = g.placeholder("in.x", {batch, dims.d_in});
  NodeId enc_w0 = P("enc.w0"), enc_b0 = P("enc.b0"), enc_wh = P("enc.wh"), enc_bh = P("enc.bh");
  h.embeddings = build_encoder(g, h.x, enc_w0, enc_b0, enc_wh, enc_bh, dims);

  // Scoring projections read the embeddings directly; their auxiliary loss
  // co-trains the encoder, standing in for the pretrained initialization a
  // full-scale encoder would bring.
  SimccOut score =
      build_simcc_head(g, h.embeddings, P("score.wx"), P("score.bx"), P("score.wy"), P("score.by"));
  h.score_px = score.px;
  h.score_py = score.py;

  if (opt.with_cim) {
    h.mask = g.placeholder("in.mask", {batch, dims.k});
    NodeId z = P("z");
    NodeId z_rows = g.replicate(z, batch);
    h.replaced = g.masked_blend(h.embeddings, z_rows, h.mask);
  } else {
    h.replaced = h.embeddings;
  }

  NodeId part_w1 = P("gnn.part.w1"), part_b1 = P("gnn.part.b1");
  NodeId part_w2 = P("gnn.part.w2"), part_b2 = P("gnn.part.b2");
  AttentionParams ap{P("gnn.group.w1"), P("gnn.group.b1"), P("gnn.group.w2"), P("gnn.group.b2"),
                     P("gnn.gate.w1"),  P("gnn.gate.b1"),  P("gnn.gate.w2"),  P("gnn.gate.b2")};
  NodeId head_wx = P("head.wx"), head_bx = P("head.bx");
  NodeId head_wy = P("head.wy"), head_by = P("head.by");

  auto reasoning = [&](NodeId feats) {
    NodeId local = build_intra_part(g, feats, skeleton, part_w1, part_b1, part_w2, part_b2);
    return build_inter_part(g, local, skeleton, ap);
  };

  h.refined = reasoning(h.replaced);
  SimccOut pred = build_simcc_head(g, h.refined, head_wx, head_bx, head_wy, head_by);
  h.px = pred.px;
  h.py = pred.py;

  if (opt.with_observational) {
    if (!opt.with_cim) throw ConfigError("build: observational path requires the cim path");
    NodeId obs_refined = reasoning(h.embeddings);
    SimccOut obs = build_simcc_head(g, obs_refined, head_wx, head_bx, head_wy, head_by);
    h.obs_px = obs.px;
    h.obs_py = obs.py;
    h.target_px = g.stop_gradient(obs.px);
    h.target_py = g.stop_gradient(obs.py);
    h.has_observational = true;
  } else if (opt.frozen_consistency_target) {
    h.target_px = g.placeholder("in.obs_px", {batch, dims.k, dims.bins});
    h.target_py = g.placeholder("in.obs_py", {batch, dims.k, dims.bins});
  }

  if (opt.with_losses) {
    h.qx = g.placeholder("in.qx", {batch, dims.k, dims.bins});
    h.qy = g.placeholder("in.qy", {batch, dims.k, dims.bins});
    h.w = g.placeholder("in.w", {batch, dims.k});

    auto weighted_kl = [&](NodeId px, NodeId py) {
      NodeId per_kp = g.add(g.kl_div(h.qx, px), g.kl_div(h.qy, py));
      return g.mean(g.sum_axis(g.mul(per_kp, h.w), 1));
    };
    h.loss_kpt = weighted_kl(h.px, h.py);
    h.loss_score = weighted_kl(h.score_px, h.score_py);

    NodeId total = h.loss_kpt;
    if (h.target_px >= 0) {
      h.stable = g.placeholder("in.stable", {batch, dims.k});
      h.cf_norm = g.placeholder("in.cf_norm", Shape{});
      NodeId per_kp = g.add(g.kl_div(h.target_px, h.px), g.kl_div(h.target_py, h.py));
      h.loss_cf = g.mul(g.sum(g.mul(per_kp, h.stable)), h.cf_norm);
      total = g.add(total, g.scale(h.loss_cf, opt.lambda));
    }
    h.loss_total = g.add(total, g.scale(h.loss_score, opt.score_loss_weight));
  }
  return h;
}

PoseModel::EvalOut PoseModel::run_eval(const Tensor& x_batch) const {
  if (x_batch.rank() != 2 || x_batch.shape[1] != dims.d_in) {
    throw ShapeError("run_eval: want B x d_in input, got " + shape_str(x_batch.shape));
  }
  int batch = x_batch.shape[0];
  Graph g;
  BuildOptions opt;
  opt.with_cim = true;
  PipelineHandles h = build(g, batch, opt);
  bind_params(g);
  g.bind("in.x", x_batch);

  EvalOut out;
  Tensor spx = g.eval(h.score_px);
  Tensor spy = g.eval(h.score_py);
  out.scores = confounder_scores(spx, spy);
  out.mask = select_intervention(out.scores, strategy);
  g.bind("in.mask", out.mask);
  out.px = g.eval(h.px);
  out.py = g.eval(h.py);
  out.coords = decode_coords(out.px, out.py);
  return out;
}

}  // namespace causalpose
