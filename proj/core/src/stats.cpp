#include "causalpose/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "causalpose/errors.hpp"
#include "causalpose/rng.hpp"

namespace causalpose {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw DataError("mean of empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) { return quantile_of(std::move(v), 0.5); }

double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) throw DataError("quantile of empty sample");
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  size_t lo = static_cast<size_t>(pos);
  size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

BootstrapCi bootstrap_mean_ci(const std::vector<double>& values, int resamples, uint64_t seed,
                              double coverage) {
  if (values.empty()) throw DataError("bootstrap of empty sample");
  BootstrapCi ci;
  ci.mean = mean_of(values);
  ci.resamples = resamples;
  Rng rng(mix64(seed, 0x626f6f74ULL));
  std::vector<double> means(static_cast<size_t>(resamples));
  int n = static_cast<int>(values.size());
  for (int r = 0; r < resamples; ++r) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += values[static_cast<size_t>(rng.uniform_int(n))];
    means[static_cast<size_t>(r)] = s / n;
  }
  double alpha = (1.0 - coverage) / 2.0;
  ci.lo = quantile_of(means, alpha);
  ci.hi = quantile_of(means, 1.0 - alpha);
  return ci;
}

RankSumResult rank_sum_greater(const std::vector<double>& a, const std::vector<double>& b) {
  RankSumResult r;
  r.n_a = static_cast<int64_t>(a.size());
  r.n_b = static_cast<int64_t>(b.size());
  if (a.empty() || b.empty()) throw DataError("rank-sum: empty group");

  struct Obs {
    double v;
    int group;  // 0 = a, 1 = b
  };
  std::vector<Obs> all;
  all.reserve(a.size() + b.size());
  for (double v : a) all.push_back({v, 0});
  for (double v : b) all.push_back({v, 1});
  std::sort(all.begin(), all.end(), [](const Obs& x, const Obs& y) { return x.v < y.v; });

  // midranks with tie bookkeeping
  double rank_sum_a = 0.0;
  double tie_term = 0.0;
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) ++j;
    double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    double t = static_cast<double>(j - i);
    if (t > 1.0) tie_term += t * t * t - t;
    for (size_t m = i; m < j; ++m) {
      if (all[m].group == 0) rank_sum_a += midrank;
    }
    i = j;
  }

  double na = static_cast<double>(r.n_a);
  double nb = static_cast<double>(r.n_b);
  double n = na + nb;
  r.u_statistic = rank_sum_a - na * (na + 1.0) / 2.0;
  double mu = na * nb / 2.0;
  double sigma2 = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (sigma2 <= 0.0) {
    r.z = 0.0;
    r.p_one_sided = 1.0;
    return r;
  }
  r.z = (r.u_statistic - mu) / std::sqrt(sigma2);
  r.p_one_sided = 0.5 * std::erfc(r.z / std::sqrt(2.0));
  return r;
}

double mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) throw DataError("mutual_information: bad inputs");
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  double n = static_cast<double>(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
    pab[{a[i], b[i]}] += 1.0 / n;
  }
  double mi = 0.0;
  for (const auto& [key, pj] : pab) {
    mi += pj * std::log(pj / (pa[key.first] * pb[key.second]));
  }
  return mi;
}

double tv_distance(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty() || b.empty()) throw DataError("tv_distance: empty sample");
  std::map<int, double> pa, pb;
  for (int v : a) pa[v] += 1.0 / static_cast<double>(a.size());
  for (int v : b) pb[v] += 1.0 / static_cast<double>(b.size());
  double tv = 0.0;
  for (const auto& [k, p] : pa) {
    auto it = pb.find(k);
    tv += std::abs(p - (it == pb.end() ? 0.0 : it->second));
  }
  for (const auto& [k, p] : pb) {
    if (!pa.count(k)) tv += p;
  }
  return 0.5 * tv;
}

}  // namespace causalpose
