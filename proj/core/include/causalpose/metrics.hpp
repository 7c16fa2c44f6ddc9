#ifndef CAUSALPOSE_METRICS_HPP
#define CAUSALPOSE_METRICS_HPP

#include <string>
#include <utility>
#include <vector>

#include "causalpose/model.hpp"
#include "causalpose/stats.hpp"
#include "causalpose/synthbench.hpp"

namespace causalpose {

// Per-sample model outputs collected over a dataset (counterfactual path).
struct EvalDump {
  Tensor coords;   // N x K x 2 decoded predictions
  Tensor scores;   // N x K confounder scores
  Tensor mask;     // N x K selection mask
  Tensor errors;   // N x K Euclidean errors in normalized units
};
EvalDump evaluate_model(const PoseModel& model, const Dataset& ds, int eval_batch = 256);

struct PckReport {
  double overall = 0.0;
  std::vector<std::pair<std::string, double>> per_group;
  int64_t visible_total = 0;
  double radius = 0.0;
};
PckReport evaluate_pck(const PoseModel& model, const Dataset& ds, double radius);
PckReport pck_from_dump(const EvalDump& dump, const Dataset& ds, double radius);

struct EnrichmentReport {
  double easy_drop_p = 0.0;
  int64_t kept = 0;
  int64_t excluded_empty_complement = 0;
  double mean_delta = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  int top_n = 0;
};
// Within-instance contrast: mean error over the top-n proxy-selected
// keypoints minus mean error over the remaining visible ones; instances
// ranked by mean visible error, the easiest fraction p dropped; percentile
// bootstrap over kept instances.
EnrichmentReport enrichment_analysis(const PoseModel& model, const Dataset& ds, int top_n,
                                     double easy_drop_p, int resamples = 1000, uint64_t seed = 17);
EnrichmentReport enrichment_from_dump(const EvalDump& dump, const Dataset& ds, int top_n,
                                      double easy_drop_p, int resamples = 1000, uint64_t seed = 17);
// Raw per-instance deltas, for oracle cross-checks.
std::vector<double> enrichment_deltas(const EvalDump& dump, const Dataset& ds, int top_n,
                                      int64_t* excluded = nullptr);

struct ScoreValidationReport {
  int64_t n_occluded = 0, n_visible = 0;
  double median_occluded = 0.0, median_visible = 0.0;
  double q1_occluded = 0.0, q3_occluded = 0.0;
  double q1_visible = 0.0, q3_visible = 0.0;
  bool occluded_group_present = false;
  RankSumResult rank_sum;  // H1: occluded scores stochastically greater
};
ScoreValidationReport confounder_score_validation(const PoseModel& model, const Dataset& ds);
ScoreValidationReport score_validation_from_dump(const EvalDump& dump, const Dataset& ds);

struct FrequencyReport {
  std::vector<std::pair<std::string, double>> per_group;
  double overall = 0.0;
};
FrequencyReport intervention_frequency(const PoseModel& model, const Dataset& ds);
FrequencyReport frequency_from_dump(const EvalDump& dump, const Dataset& ds);

}  // namespace causalpose

#endif
