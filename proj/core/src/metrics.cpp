#include "causalpose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "causalpose/errors.hpp"

namespace causalpose {

EvalDump evaluate_model(const PoseModel& model, const Dataset& ds, int eval_batch) {
  if (ds.d_in != model.dims.d_in || ds.k() != model.dims.k) {
    throw DataError("evaluate_model: dataset geometry (d_in=" + std::to_string(ds.d_in) +
                    ", K=" + std::to_string(ds.k()) + ") does not match the checkpoint");
  }
  int n = ds.size();
  int k = ds.k();
  EvalDump dump;
  dump.coords = Tensor({n, k, 2});
  dump.scores = Tensor({n, k});
  dump.mask = Tensor({n, k});
  dump.errors = Tensor({n, k});
  for (int start = 0; start < n; start += eval_batch) {
    int stop = std::min(n, start + eval_batch);
    std::vector<int> idx;
    for (int i = start; i < stop; ++i) idx.push_back(i);
    Batch b = make_batch(ds, idx);
    PoseModel::EvalOut out = model.run_eval(b.x);
    for (int i = 0; i < stop - start; ++i) {
      for (int kp = 0; kp < k; ++kp) {
        double px = out.coords.at3(i, kp, 0);
        double py = out.coords.at3(i, kp, 1);
        dump.coords.at3(start + i, kp, 0) = px;
        dump.coords.at3(start + i, kp, 1) = py;
        dump.scores.at2(start + i, kp) = out.scores.at2(i, kp);
        dump.mask.at2(start + i, kp) = out.mask.at2(i, kp);
        double dx = px - b.coords.at3(i, kp, 0);
        double dy = py - b.coords.at3(i, kp, 1);
        dump.errors.at2(start + i, kp) = std::sqrt(dx * dx + dy * dy);
      }
    }
  }
  return dump;
}

PckReport pck_from_dump(const EvalDump& dump, const Dataset& ds, double radius) {
  if (radius <= 0.0) throw ConfigError("pck: radius must be positive");
  PckReport rep;
  rep.radius = radius;
  int n = ds.size(), k = ds.k();
  int64_t hits = 0;
  for (int i = 0; i < n; ++i) {
    for (int kp = 0; kp < k; ++kp) {
      if (!ds.samples[static_cast<size_t>(i)].visibility[static_cast<size_t>(kp)]) continue;
      ++rep.visible_total;
      if (dump.errors.at2(i, kp) <= radius) ++hits;
    }
  }
  rep.overall = rep.visible_total > 0 ? static_cast<double>(hits) / rep.visible_total : 0.0;
  for (const auto& he : ds.skeleton.hyperedges) {
    int64_t g_total = 0, g_hits = 0;
    for (int i = 0; i < n; ++i) {
      for (int kp : he.members) {
        if (!ds.samples[static_cast<size_t>(i)].visibility[static_cast<size_t>(kp)]) continue;
        ++g_total;
        if (dump.errors.at2(i, kp) <= radius) ++g_hits;
      }
    }
    rep.per_group.emplace_back(he.name,
                               g_total > 0 ? static_cast<double>(g_hits) / g_total : 0.0);
  }
  return rep;
}

PckReport evaluate_pck(const PoseModel& model, const Dataset& ds, double radius) {
  return pck_from_dump(evaluate_model(model, ds), ds, radius);
}

std::vector<double> enrichment_deltas(const EvalDump& dump, const Dataset& ds, int top_n,
                                      int64_t* excluded) {
  if (top_n < 1) throw ConfigError("enrichment: top_n must be >= 1");
  int n = ds.size(), k = ds.k();
  if (excluded != nullptr) *excluded = 0;
  std::vector<double> deltas;
  std::vector<int> order(static_cast<size_t>(k));
  for (int i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return dump.scores.at2(i, a) > dump.scores.at2(i, b);
    });
    std::vector<bool> selected(static_cast<size_t>(k), false);
    for (int j = 0; j < std::min(top_n, k); ++j) selected[static_cast<size_t>(order[static_cast<size_t>(j)])] = true;

    double top_sum = 0.0;
    int top_count = 0;
    double rest_sum = 0.0;
    int rest_count = 0;
    for (int kp = 0; kp < k; ++kp) {
      if (selected[static_cast<size_t>(kp)]) {
        top_sum += dump.errors.at2(i, kp);
        ++top_count;
      } else if (ds.samples[static_cast<size_t>(i)].visibility[static_cast<size_t>(kp)]) {
        rest_sum += dump.errors.at2(i, kp);
        ++rest_count;
      }
    }
    if (rest_count == 0) {
      if (excluded != nullptr) ++*excluded;
      continue;
    }
    deltas.push_back(top_sum / top_count - rest_sum / rest_count);
  }
  return deltas;
}

EnrichmentReport enrichment_from_dump(const EvalDump& dump, const Dataset& ds, int top_n,
                                      double easy_drop_p, int resamples, uint64_t seed) {
  if (easy_drop_p < 0.0 || easy_drop_p >= 1.0) {
    throw ConfigError("enrichment: easy_drop_p must lie in [0,1)");
  }
  EnrichmentReport rep;
  rep.easy_drop_p = easy_drop_p;
  rep.top_n = top_n;

  int n = ds.size(), k = ds.k();
  // rank instances by mean visible error, easiest first
  struct Inst {
    int id;
    double mean_err;
  };
  std::vector<Inst> insts;
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    int count = 0;
    for (int kp = 0; kp < k; ++kp) {
      if (!ds.samples[static_cast<size_t>(i)].visibility[static_cast<size_t>(kp)]) continue;
      sum += dump.errors.at2(i, kp);
      ++count;
    }
    if (count > 0) insts.push_back({i, sum / count});
  }
  std::stable_sort(insts.begin(), insts.end(),
                   [](const Inst& a, const Inst& b) { return a.mean_err < b.mean_err; });
  size_t drop = static_cast<size_t>(easy_drop_p * static_cast<double>(insts.size()));

  std::vector<bool> keep(static_cast<size_t>(n), false);
  for (size_t i = drop; i < insts.size(); ++i) keep[static_cast<size_t>(insts[i].id)] = true;

  int64_t excluded = 0;
  std::vector<double> all_deltas = enrichment_deltas(dump, ds, top_n, &excluded);
  // enrichment_deltas skips excluded instances; align by recomputing with ids
  std::vector<double> kept_deltas;
  {
    size_t cursor = 0;
    std::vector<int> order(static_cast<size_t>(k));
    for (int i = 0; i < n; ++i) {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return dump.scores.at2(i, a) > dump.scores.at2(i, b);
      });
      std::vector<bool> selected(static_cast<size_t>(k), false);
      for (int j = 0; j < std::min(top_n, k); ++j) {
        selected[static_cast<size_t>(order[static_cast<size_t>(j)])] = true;
      }
      int rest_count = 0;
      for (int kp = 0; kp < k; ++kp) {
        if (!selected[static_cast<size_t>(kp)] &&
            ds.samples[static_cast<size_t>(i)].visibility[static_cast<size_t>(kp)]) {
          ++rest_count;
        }
      }
      if (rest_count == 0) continue;  // excluded, not present in all_deltas
      double delta = all_deltas[cursor++];
      if (keep[static_cast<size_t>(i)]) kept_deltas.push_back(delta);
    }
  }
  rep.excluded_empty_complement = excluded;
  rep.kept = static_cast<int64_t>(kept_deltas.size());
  if (!kept_deltas.empty()) {
    BootstrapCi ci = bootstrap_mean_ci(kept_deltas, resamples, seed);
    rep.mean_delta = ci.mean;
    rep.ci_lo = ci.lo;
    rep.ci_hi = ci.hi;
  }
  return rep;
}

EnrichmentReport enrichment_analysis(const PoseModel& model, const Dataset& ds, int top_n,
                                     double easy_drop_p, int resamples, uint64_t seed) {
  return enrichment_from_dump(evaluate_model(model, ds), ds, top_n, easy_drop_p, resamples, seed);
}

ScoreValidationReport score_validation_from_dump(const EvalDump& dump, const Dataset& ds) {
  ScoreValidationReport rep;
  std::vector<double> occ, vis;
  int n = ds.size(), k = ds.k();
  for (int i = 0; i < n; ++i) {
    for (int kp = 0; kp < k; ++kp) {
      double s = dump.scores.at2(i, kp);
      if (ds.samples[static_cast<size_t>(i)].occluded[static_cast<size_t>(kp)]) {
        occ.push_back(s);
      } else {
        vis.push_back(s);
      }
    }
  }
  rep.n_occluded = static_cast<int64_t>(occ.size());
  rep.n_visible = static_cast<int64_t>(vis.size());
  rep.occluded_group_present = !occ.empty();
  if (!vis.empty()) {
    rep.median_visible = median_of(vis);
    rep.q1_visible = quantile_of(vis, 0.25);
    rep.q3_visible = quantile_of(vis, 0.75);
  }
  if (!occ.empty()) {
    rep.median_occluded = median_of(occ);
    rep.q1_occluded = quantile_of(occ, 0.25);
    rep.q3_occluded = quantile_of(occ, 0.75);
  }
  if (!occ.empty() && !vis.empty()) rep.rank_sum = rank_sum_greater(occ, vis);
  return rep;
}

ScoreValidationReport confounder_score_validation(const PoseModel& model, const Dataset& ds) {
  return score_validation_from_dump(evaluate_model(model, ds), ds);
}

FrequencyReport frequency_from_dump(const EvalDump& dump, const Dataset& ds) {
  FrequencyReport rep;
  int n = ds.size(), k = ds.k();
  int64_t selected_total = 0;
  for (int i = 0; i < n; ++i) {
    for (int kp = 0; kp < k; ++kp) {
      if (dump.mask.at2(i, kp) != 0.0) ++selected_total;
    }
  }
  rep.overall = n > 0 ? static_cast<double>(selected_total) / (static_cast<double>(n) * k) : 0.0;
  for (const auto& he : ds.skeleton.hyperedges) {
    int64_t sel = 0;
    for (int i = 0; i < n; ++i) {
      for (int kp : he.members) {
        if (dump.mask.at2(i, kp) != 0.0) ++sel;
      }
    }
    double denom = static_cast<double>(n) * static_cast<double>(he.members.size());
    rep.per_group.emplace_back(he.name, denom > 0 ? sel / denom : 0.0);
  }
  return rep;
}

FrequencyReport intervention_frequency(const PoseModel& model, const Dataset& ds) {
  return frequency_from_dump(evaluate_model(model, ds), ds);
}

}  // namespace causalpose
