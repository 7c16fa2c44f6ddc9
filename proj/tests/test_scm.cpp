#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>

#include "causalpose/errors.hpp"
#include "causalpose/rng.hpp"
#include "causalpose/scm.hpp"
#include "doctest.h"

using namespace causalpose;

namespace {

DiscreteScm uniform_scm() {
  std::vector<double> u2{0.5, 0.5};
  std::vector<std::vector<double>> rows2{{0.5, 0.5}, {0.5, 0.5}};
  std::vector<std::vector<double>> rows4{{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
  return DiscreteScm(u2, rows2, rows2, rows4);
}

DiscreteScm deterministic_scm() {
  // C=0 always; X=C; F=X; Y determined by (C,F)
  std::vector<double> prior{1.0, 0.0};
  std::vector<std::vector<double>> cpt_x{{1.0, 0.0}, {0.0, 1.0}};
  std::vector<std::vector<double>> cpt_f{{1.0, 0.0}, {0.0, 1.0}};
  std::vector<std::vector<double>> cpt_y{{1.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}, {1.0, 0.0}};
  return DiscreteScm(prior, cpt_x, cpt_f, cpt_y);
}

}  // namespace

TEST_CASE("joint of the uniform model is flat") {
  DistTable j = uniform_scm().joint();
  CHECK(j.p.size() == 16);
  for (double v : j.p) CHECK(v == doctest::Approx(1.0 / 16.0).epsilon(1e-15));
  CHECK(j.total() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("deterministic model has a single unit mass") {
  DistTable j = deterministic_scm().joint();
  int nonzero = 0;
  for (double v : j.p) {
    if (v > 0) {
      ++nonzero;
      CHECK(v == 1.0);
    }
  }
  CHECK(nonzero == 1);
  CHECK(j.at({0, 0, 0, 0}) == 1.0);
}

TEST_CASE("joint marginals match direct chain products") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    DiscreteScm scm = DiscreteScm::random(rng);
    DistTable j = scm.joint();
    // independent chain-rule recomputation of P(c, x)
    for (int c = 0; c < scm.nc(); ++c) {
      for (int x = 0; x < scm.nx(); ++x) {
        double marg = 0.0;
        for (int f = 0; f < scm.nf(); ++f) {
          for (int y = 0; y < scm.ny(); ++y) marg += j.at({c, x, f, y});
        }
        CHECK(marg == doctest::Approx(scm.prior(c) * scm.p_x_given_c(x, c)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("observational distribution reduces to the marginal under independence") {
  // F uniform regardless of X, and Y reads only C, so Y is independent of F
  std::vector<double> prior{0.3, 0.7};
  std::vector<std::vector<double>> cpt_x{{0.2, 0.8}, {0.6, 0.4}};
  std::vector<std::vector<double>> cpt_f{{0.5, 0.5}, {0.5, 0.5}};
  std::vector<std::vector<double>> cpt_y{{0.1, 0.9}, {0.1, 0.9}, {0.8, 0.2}, {0.8, 0.2}};
  DiscreteScm scm(prior, cpt_x, cpt_f, cpt_y);
  DistTable j = scm.joint();
  for (int y = 0; y < 2; ++y) {
    double p_y = 0.0;
    for (int c = 0; c < 2; ++c) {
      for (int x = 0; x < 2; ++x) {
        for (int f = 0; f < 2; ++f) p_y += j.at({c, x, f, y});
      }
    }
    for (int f = 0; f < 2; ++f) {
      CHECK(scm.observational(y, f) == doctest::Approx(p_y).epsilon(1e-12));
    }
  }
}

TEST_CASE("observational matches brute-force enumeration on random models") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    DiscreteScm scm = DiscreteScm::random(rng);
    DistTable j = scm.joint();
    for (int f = 0; f < scm.nf(); ++f) {
      for (int y = 0; y < scm.ny(); ++y) {
        double num = 0.0, den = 0.0;
        for (int c = 0; c < scm.nc(); ++c) {
          for (int x = 0; x < scm.nx(); ++x) {
            for (int yy = 0; yy < scm.ny(); ++yy) {
              double v = j.at({c, x, f, yy});
              den += v;
              if (yy == y) num += v;
            }
          }
        }
        CHECK(scm.observational(y, f) == doctest::Approx(num / den).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("observational on a zero-probability conditioning event throws") {
  // F always 0: conditioning on F=1 undefined
  std::vector<double> prior{0.5, 0.5};
  std::vector<std::vector<double>> cpt_x{{0.5, 0.5}, {0.5, 0.5}};
  std::vector<std::vector<double>> cpt_f{{1.0, 0.0}, {1.0, 0.0}};
  std::vector<std::vector<double>> cpt_y{{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
  DiscreteScm scm(prior, cpt_x, cpt_f, cpt_y);
  CHECK_THROWS_AS(scm.observational(0, 1), DataError);
}

TEST_CASE("intervention is a point mass, preserves the prior, and is idempotent") {
  Rng rng(13);
  DiscreteScm scm = DiscreteScm::random(rng);
  int f0 = 1 % scm.nf();
  DiscreteScm surgered = scm.intervene(f0);

  DistTable j = surgered.joint();
  double pf = 0.0;
  for (int c = 0; c < scm.nc(); ++c) {
    for (int x = 0; x < scm.nx(); ++x) {
      for (int y = 0; y < scm.ny(); ++y) pf += j.at({c, x, f0, y});
    }
  }
  CHECK(pf == doctest::Approx(1.0).epsilon(1e-12));
  for (int c = 0; c < scm.nc(); ++c) {
    double pc = 0.0;
    for (int x = 0; x < scm.nx(); ++x) {
      for (int f = 0; f < scm.nf(); ++f) {
        for (int y = 0; y < scm.ny(); ++y) pc += j.at({c, x, f, y});
      }
    }
    CHECK(pc == doctest::Approx(scm.prior(c)).epsilon(1e-12));
  }
  DiscreteScm twice = surgered.intervene(f0);
  CHECK(twice.serialize() == surgered.serialize());
  CHECK_THROWS_AS(scm.intervene(scm.nf()), DataError);
}

TEST_CASE("adjustment collapses for a single effective context") {
  // prior mass concentrated on c=0: the adjustment is that context's conditional
  std::vector<double> prior{1.0, 0.0};
  std::vector<std::vector<double>> cpt_x{{0.4, 0.6}, {0.5, 0.5}};
  std::vector<std::vector<double>> cpt_f{{0.7, 0.3}, {0.2, 0.8}};
  std::vector<std::vector<double>> cpt_y{{0.9, 0.1}, {0.3, 0.7}, {0.6, 0.4}, {0.5, 0.5}};
  DiscreteScm scm(prior, cpt_x, cpt_f, cpt_y);
  for (int f = 0; f < 2; ++f) {
    for (int y = 0; y < 2; ++y) {
      CHECK(scm.backdoor_adjust(y, f) == doctest::Approx(cpt_y[static_cast<size_t>(f)][static_cast<size_t>(y)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("no confounding arc makes adjustment equal the observational") {
  // cpt_y ignores C: rows repeat across contexts
  std::vector<double> prior{0.25, 0.75};
  std::vector<std::vector<double>> cpt_x{{0.3, 0.7}, {0.8, 0.2}};
  std::vector<std::vector<double>> cpt_f{{0.6, 0.4}, {0.1, 0.9}};
  std::vector<std::vector<double>> cpt_y{{0.2, 0.8}, {0.7, 0.3}, {0.2, 0.8}, {0.7, 0.3}};
  DiscreteScm scm(prior, cpt_x, cpt_f, cpt_y);
  for (int f = 0; f < 2; ++f) {
    for (int y = 0; y < 2; ++y) {
      CHECK(scm.backdoor_adjust(y, f) == doctest::Approx(scm.observational(y, f)).epsilon(1e-11));
    }
  }
}

TEST_CASE("adjustment equals the surgery marginal on random models") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    DiscreteScm scm = DiscreteScm::random(rng);
    for (int f = 0; f < scm.nf(); ++f) {
      DistTable j = scm.intervene(f).joint();
      double sum = 0.0;
      for (int y = 0; y < scm.ny(); ++y) {
        double surg = 0.0;
        for (int c = 0; c < scm.nc(); ++c) {
          for (int x = 0; x < scm.nx(); ++x) surg += j.at({c, x, f, y});
        }
        double adj = scm.backdoor_adjust(y, f);
        CHECK(std::abs(adj - surg) < 1e-12);
        CHECK(adj >= 0.0);
        sum += adj;
      }
      CHECK(std::abs(sum - 1.0) < 1e-11);  // proper distribution over Y
    }
  }
}

TEST_CASE("positivity violation names the offending context") {
  // from C=0, X=0 and F=0 deterministically, so (F=1, C=0) has zero mass
  std::vector<double> prior{0.5, 0.5};
  std::vector<std::vector<double>> cpt_x{{1.0, 0.0}, {0.0, 1.0}};
  std::vector<std::vector<double>> cpt_f{{1.0, 0.0}, {0.0, 1.0}};
  std::vector<std::vector<double>> cpt_y{{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
  DiscreteScm scm(prior, cpt_x, cpt_f, cpt_y);
  CHECK_THROWS_WITH_AS(scm.backdoor_adjust(0, 1), doctest::Contains("C=0"), DataError);
}

TEST_CASE("do-calculus report passes on valid models, exactly on deterministic ones") {
  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    DoCalcReport rep = verify_docalc(DiscreteScm::random(rng));
    CHECK(rep.all_pass());
  }
  DoCalcReport det = verify_docalc(deterministic_scm());
  CHECK(det.all_pass());
  CHECK(det.max_dev_rule3 == 0.0);
  CHECK(det.max_dev_adjustment == 0.0);
}

TEST_CASE("table validation rejects bad rows and domains") {
  std::vector<double> bad_prior{0.5, 0.6};
  std::vector<std::vector<double>> rows2{{0.5, 0.5}, {0.5, 0.5}};
  std::vector<std::vector<double>> rows4(4, std::vector<double>{0.5, 0.5});
  CHECK_THROWS_AS(DiscreteScm(bad_prior, rows2, rows2, rows4), DataError);
  CHECK_THROWS_AS(DiscreteScm({1.0}, {{1.0}}, {{1.0}}, {{1.0}}), DataError);  // domains < 2
  std::vector<std::vector<double>> neg{{1.2, -0.2}, {0.5, 0.5}};
  CHECK_THROWS_AS(DiscreteScm({0.5, 0.5}, neg, rows2, rows4), DataError);
}

TEST_CASE("scm files round-trip and malformed files are rejected") {
  Rng rng(31);
  DiscreteScm scm = DiscreteScm::random(rng);
  std::string path = "scm_roundtrip.tmp";
  {
    std::ofstream out(path);
    out << scm.serialize();
  }
  DiscreteScm loaded = DiscreteScm::load_file(path);
  CHECK(loaded.serialize() == scm.serialize());

  {
    std::ofstream out(path);
    out << "sizes = 2 2 2 2\n"
        << "p_c = 0.5 0.5\n"
        << "p_x_given_c = 0.5 0.5 0.5 0.5\n"
        << "p_f_given_x = 0.9 0.1 0.9 0.1\n"
        << "p_y_given_cf = 0.5 0.5 0.5 0.5 0.5 0.5 0.5 0.5\n"
        << "p_f_given_cx = 1 0 1 0 1 0 1 0\n";  // direct C->F arc: not expressible
  }
  CHECK_THROWS_WITH_AS(DiscreteScm::load_file(path), doctest::Contains("p_f_given_cx"), DataError);

  {
    std::ofstream out(path);
    out << "sizes = 2 2 2 2\n"
        << "p_c = 0.5 0.5\n"
        << "p_x_given_c = 0.5 0.5 0.5 0.5\n"
        << "p_f_given_x = 0.9 0.2 0.9 0.1\n"  // first row sums to 1.1
        << "p_y_given_cf = 0.5 0.5 0.5 0.5 0.5 0.5 0.5 0.5\n";
  }
  CHECK_THROWS_WITH_AS(DiscreteScm::load_file(path), doctest::Contains("row 0"), DataError);
  std::remove(path.c_str());
}
