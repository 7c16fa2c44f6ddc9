#ifndef CAUSALPOSE_STATS_HPP
#define CAUSALPOSE_STATS_HPP

#include <cstdint>
#include <vector>

namespace causalpose {

double mean_of(const std::vector<double>& v);
double median_of(std::vector<double> v);      // copies, sorts
double quantile_of(std::vector<double> v, double q);  // nearest-rank interpolation

struct BootstrapCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int resamples = 0;
};

// Percentile bootstrap of the mean, seeded.
BootstrapCi bootstrap_mean_ci(const std::vector<double>& values, int resamples, uint64_t seed,
                              double coverage = 0.95);

struct RankSumResult {
  double u_statistic = 0.0;
  double z = 0.0;
  double p_one_sided = 1.0;  // H1: group a stochastically greater than group b
  int64_t n_a = 0, n_b = 0;
};

// Mann-Whitney rank-sum with tie correction and normal approximation.
RankSumResult rank_sum_greater(const std::vector<double>& a, const std::vector<double>& b);

// Plug-in mutual information (nats) between two discrete label vectors.
double mutual_information(const std::vector<int>& a, const std::vector<int>& b);

// Total variation distance between empirical pmfs of two label vectors.
double tv_distance(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace causalpose

#endif
