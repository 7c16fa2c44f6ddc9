#ifndef CAUSALPOSE_SCM_HPP
#define CAUSALPOSE_SCM_HPP

#include <string>
#include <vector>

#include "causalpose/rng.hpp"

namespace causalpose {

// Joint probability table over named finite variables, row-major in the
// declared variable order.
struct DistTable {
  std::vector<std::string> vars;
  std::vector<int> sizes;
  std::vector<double> p;

  int64_t index(const std::vector<int>& assignment) const;
  double at(const std::vector<int>& assignment) const;
  double total() const;
};

// Finite-domain structural causal model with the fixed graph
// C -> X, X -> F, (C,F) -> Y. Immutable once constructed; construction
// validates normalization of every CPT row to 1e-12.
class DiscreteScm {
 public:
  DiscreteScm(std::vector<double> prior_c, std::vector<std::vector<double>> cpt_x_given_c,
              std::vector<std::vector<double>> cpt_f_given_x,
              std::vector<std::vector<double>> cpt_y_given_cf);

  int nc() const { return nc_; }
  int nx() const { return nx_; }
  int nf() const { return nf_; }
  int ny() const { return ny_; }

  double prior(int c) const { return prior_[static_cast<size_t>(c)]; }
  double p_x_given_c(int x, int c) const { return cpt_x_[static_cast<size_t>(c)][static_cast<size_t>(x)]; }
  double p_f_given_x(int f, int x) const { return cpt_f_[static_cast<size_t>(x)][static_cast<size_t>(f)]; }
  double p_y_given_cf(int y, int c, int f) const {
    return cpt_y_[static_cast<size_t>(c) * nf_ + static_cast<size_t>(f)][static_cast<size_t>(y)];
  }

  // Full joint P(c,x,f,y) by enumeration.
  DistTable joint() const;

  // P(Y=y | F=f) from the joint; throws DataError when P(F=f) == 0.
  double observational(int y, int f) const;

  // Graph surgery do(F=f): cpt_f replaced by a point mass, everything else
  // untouched.
  DiscreteScm intervene(int f_value) const;

  // sum_c P(y|f,c) P(c); throws DataError naming the context that violates
  // positivity.
  double backdoor_adjust(int y, int f) const;

  static DiscreteScm load_file(const std::string& path);
  static DiscreteScm random(Rng& rng, int min_size = 2, int max_size = 5);

  std::string serialize() const;

 private:
  int nc_, nx_, nf_, ny_;
  std::vector<double> prior_;
  std::vector<std::vector<double>> cpt_x_;  // [c][x]
  std::vector<std::vector<double>> cpt_f_;  // [x][f]
  std::vector<std::vector<double>> cpt_y_;  // [c*nf+f][y]
};

// Numeric verification of the do-calculus steps on a concrete SCM:
//   rule3: P(c | do(F=f)) == P(c)           for all c, f
//   rule2: P(y | do(F=f), c) == P(y | f, c) for all y, f, c
//   adjustment: sum_c P(y|f,c)P(c) == P(y | do(F=f)) for all y, f
struct DoCalcReport {
  double max_dev_rule3 = 0.0;
  double max_dev_rule2 = 0.0;
  double max_dev_adjustment = 0.0;
  double tolerance = 1e-12;
  bool pass_rule3 = false;
  bool pass_rule2 = false;
  bool pass_adjustment = false;
  bool all_pass() const { return pass_rule3 && pass_rule2 && pass_adjustment; }
  std::string str() const;
};

DoCalcReport verify_docalc(const DiscreteScm& scm, double tolerance = 1e-12);

}  // namespace causalpose

#endif
