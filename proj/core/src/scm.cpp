#include "causalpose/scm.hpp"

#include <cmath>
#include <sstream>

#include "causalpose/errors.hpp"
#include "causalpose/kvconfig.hpp"

namespace causalpose {

namespace {
constexpr double kRowTol = 1e-12;

void check_row(const std::vector<double>& row, const std::string& what, size_t idx) {
  double s = 0.0;
  for (double v : row) {
    if (v < 0.0 || !std::isfinite(v)) {
      throw DataError(what + " row " + std::to_string(idx) + ": negative or non-finite entry");
    }
    s += v;
  }
  if (std::abs(s - 1.0) > kRowTol) {
    throw DataError(what + " row " + std::to_string(idx) + ": sums to " + std::to_string(s) +
                    ", expected 1");
  }
}

void check_domain(int n, const char* var) {
  if (n < 2 || n > 8) {
    throw DataError(std::string("domain size of ") + var + " must be in [2,8], got " +
                    std::to_string(n));
  }
}
}  // namespace

int64_t DistTable::index(const std::vector<int>& assignment) const {
  int64_t idx = 0;
  for (size_t i = 0; i < sizes.size(); ++i) {
    idx = idx * sizes[i] + assignment[i];
  }
  return idx;
}

double DistTable::at(const std::vector<int>& assignment) const {
  return p[static_cast<size_t>(index(assignment))];
}

double DistTable::total() const {
  double s = 0.0;
  for (double v : p) s += v;
  return s;
}

DiscreteScm::DiscreteScm(std::vector<double> prior_c, std::vector<std::vector<double>> cpt_x_given_c,
                         std::vector<std::vector<double>> cpt_f_given_x,
                         std::vector<std::vector<double>> cpt_y_given_cf)
    : prior_(std::move(prior_c)),
      cpt_x_(std::move(cpt_x_given_c)),
      cpt_f_(std::move(cpt_f_given_x)),
      cpt_y_(std::move(cpt_y_given_cf)) {
  nc_ = static_cast<int>(prior_.size());
  check_domain(nc_, "C");
  if (cpt_x_.size() != static_cast<size_t>(nc_)) {
    throw DataError("P(X|C) needs one row per c, got " + std::to_string(cpt_x_.size()));
  }
  nx_ = static_cast<int>(cpt_x_[0].size());
  check_domain(nx_, "X");
  nf_ = static_cast<int>(cpt_f_[0].size());
  check_domain(nf_, "F");
  if (cpt_f_.size() != static_cast<size_t>(nx_)) {
    throw DataError("P(F|X) needs one row per x, got " + std::to_string(cpt_f_.size()));
  }
  if (cpt_y_.size() != static_cast<size_t>(nc_) * nf_) {
    throw DataError("P(Y|C,F) needs |C|*|F| rows, got " + std::to_string(cpt_y_.size()));
  }
  ny_ = static_cast<int>(cpt_y_[0].size());
  check_domain(ny_, "Y");

  check_row(prior_, "P(C)", 0);
  for (size_t i = 0; i < cpt_x_.size(); ++i) {
    if (cpt_x_[i].size() != static_cast<size_t>(nx_)) throw DataError("P(X|C): ragged rows");
    check_row(cpt_x_[i], "P(X|C)", i);
  }
  for (size_t i = 0; i < cpt_f_.size(); ++i) {
    if (cpt_f_[i].size() != static_cast<size_t>(nf_)) throw DataError("P(F|X): ragged rows");
    check_row(cpt_f_[i], "P(F|X)", i);
  }
  for (size_t i = 0; i < cpt_y_.size(); ++i) {
    if (cpt_y_[i].size() != static_cast<size_t>(ny_)) throw DataError("P(Y|C,F): ragged rows");
    check_row(cpt_y_[i], "P(Y|C,F)", i);
  }
}

DistTable DiscreteScm::joint() const {
  DistTable t;
  t.vars = {"c", "x", "f", "y"};
  t.sizes = {nc_, nx_, nf_, ny_};
  t.p.resize(static_cast<size_t>(nc_) * nx_ * nf_ * ny_);
  size_t i = 0;
  for (int c = 0; c < nc_; ++c) {
    for (int x = 0; x < nx_; ++x) {
      for (int f = 0; f < nf_; ++f) {
        for (int y = 0; y < ny_; ++y) {
          t.p[i++] = prior(c) * p_x_given_c(x, c) * p_f_given_x(f, x) * p_y_given_cf(y, c, f);
        }
      }
    }
  }
  return t;
}

double DiscreteScm::observational(int y, int f) const {
  if (f < 0 || f >= nf_ || y < 0 || y >= ny_) throw DataError("observational: value out of domain");
  DistTable j = joint();
  double num = 0.0, den = 0.0;
  for (int c = 0; c < nc_; ++c) {
    for (int x = 0; x < nx_; ++x) {
      for (int yy = 0; yy < ny_; ++yy) {
        double v = j.at({c, x, f, yy});
        den += v;
        if (yy == y) num += v;
      }
    }
  }
  if (den <= 0.0) {
    throw DataError("observational: P(F=" + std::to_string(f) + ") = 0, conditional undefined");
  }
  return num / den;
}

DiscreteScm DiscreteScm::intervene(int f_value) const {
  if (f_value < 0 || f_value >= nf_) {
    throw DataError("intervene: value " + std::to_string(f_value) + " outside domain of F");
  }
  std::vector<std::vector<double>> point_mass(static_cast<size_t>(nx_),
                                              std::vector<double>(static_cast<size_t>(nf_), 0.0));
  for (auto& row : point_mass) row[static_cast<size_t>(f_value)] = 1.0;
  return DiscreteScm(prior_, cpt_x_, std::move(point_mass), cpt_y_);
}

double DiscreteScm::backdoor_adjust(int y, int f) const {
  if (f < 0 || f >= nf_ || y < 0 || y >= ny_) throw DataError("backdoor_adjust: value out of domain");
  DistTable j = joint();
  double acc = 0.0;
  for (int c = 0; c < nc_; ++c) {
    if (prior(c) <= 0.0) continue;
    // P(y|f,c) from the joint
    double num = 0.0, den = 0.0;
    for (int x = 0; x < nx_; ++x) {
      for (int yy = 0; yy < ny_; ++yy) {
        double v = j.at({c, x, f, yy});
        den += v;
        if (yy == y) num += v;
      }
    }
    if (den <= 0.0) {
      throw DataError("backdoor_adjust: positivity violated, P(F=" + std::to_string(f) +
                      ", C=" + std::to_string(c) + ") = 0");
    }
    acc += (num / den) * prior(c);
  }
  return acc;
}

DoCalcReport verify_docalc(const DiscreteScm& scm, double tolerance) {
  DoCalcReport r;
  r.tolerance = tolerance;
  DistTable oj = scm.joint();
  for (int f = 0; f < scm.nf(); ++f) {
    DiscreteScm surgered = scm.intervene(f);
    DistTable j = surgered.joint();
    // positivity for this f: every live context must give F=f some mass;
    // identities involving P(.|f,c) are only defined where that holds
    bool positivity = true;
    for (int c = 0; c < scm.nc(); ++c) {
      if (scm.prior(c) <= 0.0) continue;
      double pfc = 0.0;
      for (int x = 0; x < scm.nx(); ++x) {
        for (int y = 0; y < scm.ny(); ++y) pfc += oj.at({c, x, f, y});
      }
      if (pfc <= 0.0) positivity = false;
    }
    // action invariance of the context marginal is defined regardless
    for (int c = 0; c < scm.nc(); ++c) {
      double pc_do = 0.0;
      for (int x = 0; x < scm.nx(); ++x) {
        for (int ff = 0; ff < scm.nf(); ++ff) {
          for (int y = 0; y < scm.ny(); ++y) pc_do += j.at({c, x, ff, y});
        }
      }
      r.max_dev_rule3 = std::max(r.max_dev_rule3, std::abs(pc_do - scm.prior(c)));
      if (scm.prior(c) <= 0.0 || !positivity) continue;
      for (int y = 0; y < scm.ny(); ++y) {
        // P(y | do(F=f), c)
        double num = 0.0, den = 0.0;
        for (int x = 0; x < scm.nx(); ++x) {
          for (int yy = 0; yy < scm.ny(); ++yy) {
            double v = j.at({c, x, f, yy});
            den += v;
            if (yy == y) num += v;
          }
        }
        double lhs = num / den;
        // P(y | F=f, c) in the unmutilated model
        double onum = 0.0, oden = 0.0;
        for (int x = 0; x < scm.nx(); ++x) {
          for (int yy = 0; yy < scm.ny(); ++yy) {
            double v = oj.at({c, x, f, yy});
            oden += v;
            if (yy == y) onum += v;
          }
        }
        double rhs = onum / oden;
        r.max_dev_rule2 = std::max(r.max_dev_rule2, std::abs(lhs - rhs));
      }
    }
    if (!positivity) continue;
    for (int y = 0; y < scm.ny(); ++y) {
      double adj = scm.backdoor_adjust(y, f);
      double surg = 0.0;
      for (int c = 0; c < scm.nc(); ++c) {
        for (int x = 0; x < scm.nx(); ++x) {
          for (int yy = 0; yy < scm.ny(); ++yy) {
            if (yy == y) surg += j.at({c, x, f, yy});
          }
        }
      }
      r.max_dev_adjustment = std::max(r.max_dev_adjustment, std::abs(adj - surg));
    }
  }
  r.pass_rule3 = r.max_dev_rule3 < tolerance;
  r.pass_rule2 = r.max_dev_rule2 < tolerance;
  r.pass_adjustment = r.max_dev_adjustment < tolerance;
  return r;
}

std::string DoCalcReport::str() const {
  std::ostringstream os;
  os.precision(17);
  os << "action-invariance P(c|do(F))=P(c):     max dev " << max_dev_rule3 << "  "
     << (pass_rule3 ? "PASS" : "FAIL") << "\n";
  os << "exchange P(y|do(F),c)=P(y|f,c):        max dev " << max_dev_rule2 << "  "
     << (pass_rule2 ? "PASS" : "FAIL") << "\n";
  os << "adjustment equals surgery marginal:    max dev " << max_dev_adjustment << "  "
     << (pass_adjustment ? "PASS" : "FAIL") << "\n";
  return os.str();
}

DiscreteScm DiscreteScm::load_file(const std::string& path) {
  KvConfig cfg = KvConfig::parse_file(path);
  for (const auto& key : cfg.keys()) {
    if (key != "sizes" && key != "p_c" && key != "p_x_given_c" && key != "p_f_given_x" &&
        key != "p_y_given_cf") {
      throw DataError("scm file: unknown key `" + key + "` (the model graph is fixed)");
    }
  }
  std::vector<int> sizes = cfg.get_ints("sizes");
  if (sizes.size() != 4) throw DataError("scm file: `sizes` must list |C| |X| |F| |Y|");
  int nc = sizes[0], nx = sizes[1], nf = sizes[2], ny = sizes[3];

  auto rows = [&](const std::string& key, int nrows, int ncols) {
    std::vector<double> flat = cfg.get_doubles(key);
    if (static_cast<int>(flat.size()) != nrows * ncols) {
      throw DataError("scm file: `" + key + "` must hold " + std::to_string(nrows * ncols) +
                      " values (" + std::to_string(nrows) + " rows x " + std::to_string(ncols) +
                      "), got " + std::to_string(flat.size()));
    }
    std::vector<std::vector<double>> out(static_cast<size_t>(nrows));
    for (int r = 0; r < nrows; ++r) {
      out[static_cast<size_t>(r)].assign(flat.begin() + static_cast<int64_t>(r) * ncols,
                                         flat.begin() + static_cast<int64_t>(r + 1) * ncols);
    }
    return out;
  };

  std::vector<double> prior = cfg.get_doubles("p_c");
  if (static_cast<int>(prior.size()) != nc) throw DataError("scm file: `p_c` must hold |C| values");
  return DiscreteScm(prior, rows("p_x_given_c", nc, nx), rows("p_f_given_x", nx, nf),
                     rows("p_y_given_cf", nc * nf, ny));
}

std::string DiscreteScm::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "sizes = " << nc_ << " " << nx_ << " " << nf_ << " " << ny_ << "\n";
  os << "p_c =";
  for (double v : prior_) os << " " << v;
  os << "\np_x_given_c =";
  for (const auto& row : cpt_x_) {
    for (double v : row) os << " " << v;
  }
  os << "\np_f_given_x =";
  for (const auto& row : cpt_f_) {
    for (double v : row) os << " " << v;
  }
  os << "\np_y_given_cf =";
  for (const auto& row : cpt_y_) {
    for (double v : row) os << " " << v;
  }
  os << "\n";
  return os.str();
}

DiscreteScm DiscreteScm::random(Rng& rng, int min_size, int max_size) {
  auto size = [&]() { return min_size + rng.uniform_int(max_size - min_size + 1); };
  int nc = size(), nx = size(), nf = size(), ny = size();
  auto random_row = [&](int n) {
    std::vector<double> row(static_cast<size_t>(n));
    double s = 0.0;
    for (double& v : row) {
      v = 0.05 + rng.uniform();  // bounded away from zero so positivity holds
      s += v;
    }
    for (double& v : row) v /= s;
    return row;
  };
  auto table = [&](int rows, int cols) {
    std::vector<std::vector<double>> t(static_cast<size_t>(rows));
    for (auto& r : t) r = random_row(cols);
    return t;
  };
  return DiscreteScm(random_row(nc), table(nc, nx), table(nx, nf), table(nc * nf, ny));
}

}  // namespace causalpose
