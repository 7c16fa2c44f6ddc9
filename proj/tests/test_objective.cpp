#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "causalpose/errors.hpp"
#include "causalpose/graph.hpp"
#include "causalpose/objective.hpp"
#include "causalpose/rng.hpp"
#include "doctest.h"

using namespace causalpose;

namespace {

Tensor random_dists(Rng& rng, int b, int k, int bins) {
  Tensor t({b, k, bins});
  for (int bb = 0; bb < b; ++bb) {
    for (int kk = 0; kk < k; ++kk) {
      double s = 0.0;
      for (int i = 0; i < bins; ++i) {
        t.at3(bb, kk, i) = 0.01 + rng.uniform();
        s += t.at3(bb, kk, i);
      }
      for (int i = 0; i < bins; ++i) t.at3(bb, kk, i) /= s;
    }
  }
  return t;
}

}  // namespace

TEST_CASE("target encoding approaches one-hot as sigma shrinks") {
  Tensor coords({1, 1, 2});
  coords.at3(0, 0, 0) = 0.33;  // bin 10 of 32 holds [0.3125, 0.34375)
  coords.at3(0, 0, 1) = 0.77;
  Tensor vis({1, 1}, 1.0);
  GroundTruthEncoding gt = encode_targets(coords, vis, 1e-4, 32);
  CHECK(gt.qx.at3(0, 0, 10) == doctest::Approx(1.0).epsilon(1e-12));
  int true_bin_y = static_cast<int>(0.77 * 32);
  CHECK(gt.qy.at3(0, 0, true_bin_y) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("target at the domain center is symmetric") {
  Tensor coords({1, 1, 2}, 0.5);
  Tensor vis({1, 1}, 1.0);
  GroundTruthEncoding gt = encode_targets(coords, vis, 2.0, 32);
  for (int i = 0; i < 16; ++i) {
    CHECK(gt.qx.at3(0, 0, i) == doctest::Approx(gt.qx.at3(0, 0, 31 - i)).epsilon(1e-12));
  }
}

TEST_CASE("target rows renormalize to one for any sigma") {
  Rng rng(3);
  for (double sigma : {0.25, 1.0, 3.0, 20.0}) {
    Tensor coords({2, 3, 2});
    for (auto& v : coords.data) v = rng.uniform();
    Tensor vis({2, 3}, 1.0);
    GroundTruthEncoding gt = encode_targets(coords, vis, sigma, 16);
    for (int b = 0; b < 2; ++b) {
      for (int k = 0; k < 3; ++k) {
        double sx = 0.0, sy = 0.0;
        for (int i = 0; i < 16; ++i) {
          sx += gt.qx.at3(b, k, i);
          sy += gt.qy.at3(b, k, i);
        }
        CHECK(std::abs(sx - 1.0) < 1e-9);
        CHECK(std::abs(sy - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("out-of-range coordinates are clamped and counted") {
  Tensor coords({1, 2, 2});
  coords.at3(0, 0, 0) = -0.3;
  coords.at3(0, 0, 1) = 0.5;
  coords.at3(0, 1, 0) = 0.5;
  coords.at3(0, 1, 1) = 1.7;
  Tensor vis({1, 2}, 1.0);
  GroundTruthEncoding gt = encode_targets(coords, vis, 1.0, 8);
  CHECK(gt.clamped == 2);
  CHECK(gt.qx.at3(0, 0, 0) > gt.qx.at3(0, 0, 7));  // mass pushed to the low edge
}

TEST_CASE("non-binary visibility is rejected") {
  Tensor coords({1, 1, 2}, 0.5);
  Tensor vis({1, 1}, 0.25);
  CHECK_THROWS_AS(encode_targets(coords, vis, 1.0, 8), DataError);
}

TEST_CASE("keypoint loss: zero at the optimum, annihilated by weights, analytic case") {
  Rng rng(7);
  int b = 2, k = 3, bins = 32;
  Tensor vis({b, k}, 1.0);
  GroundTruthEncoding gt;
  gt.qx = random_dists(rng, b, k, bins);
  gt.qy = random_dists(rng, b, k, bins);
  gt.w = vis;

  CHECK(keypoint_loss(gt, gt.qx, gt.qy) == 0.0);

  Tensor px = random_dists(rng, b, k, bins);
  Tensor py = random_dists(rng, b, k, bins);
  CHECK(keypoint_loss(gt, px, py) > 0.0);

  gt.w = Tensor({b, k}, 0.0);
  CHECK(keypoint_loss(gt, px, py) == 0.0);

  // one visible keypoint, one-hot target, uniform prediction: 2 ln 32
  GroundTruthEncoding single;
  single.qx = Tensor({1, 1, bins}, 0.0);
  single.qy = Tensor({1, 1, bins}, 0.0);
  single.qx.at3(0, 0, 5) = 1.0;
  single.qy.at3(0, 0, 9) = 1.0;
  single.w = Tensor({1, 1}, 1.0);
  Tensor uniform({1, 1, bins}, 1.0 / bins);
  CHECK(keypoint_loss(single, uniform, uniform) ==
        doctest::Approx(2.0 * std::log(32.0)).epsilon(1e-12));
}

TEST_CASE("consistency loss: identity, empty stable set, locality to stable keypoints") {
  Rng rng(9);
  int b = 2, k = 4, bins = 8;
  Tensor obs_px = random_dists(rng, b, k, bins);
  Tensor obs_py = random_dists(rng, b, k, bins);
  CHECK(consistency_loss(obs_px, obs_py, obs_px, obs_py, Tensor({b, k}, 0.0)) == 0.0);

  Tensor cf_px = random_dists(rng, b, k, bins);
  Tensor cf_py = random_dists(rng, b, k, bins);
  CHECK(consistency_loss(obs_px, obs_py, cf_px, cf_py, Tensor({b, k}, 1.0)) == 0.0);

  Tensor mask({b, k}, 0.0);
  mask.at2(0, 1) = 1.0;
  mask.at2(1, 2) = 1.0;
  double base = consistency_loss(obs_px, obs_py, cf_px, cf_py, mask);
  CHECK(base > 0.0);

  // perturbing the prediction on an intervened keypoint changes nothing
  Tensor poked = cf_px;
  double& a = poked.at3(0, 1, 0);
  double& c = poked.at3(0, 1, 1);
  double shift = std::min(0.2, c * 0.5);
  a += shift;
  c -= shift;
  CHECK(consistency_loss(obs_px, obs_py, poked, cf_py, mask) == base);

  // perturbing a stable keypoint does change it
  Tensor poked2 = cf_px;
  double& a2 = poked2.at3(0, 0, 0);
  double& c2 = poked2.at3(0, 0, 1);
  double shift2 = std::min(0.2, c2 * 0.5);
  a2 += shift2;
  c2 -= shift2;
  CHECK(consistency_loss(obs_px, obs_py, poked2, cf_py, mask) != base);
}

TEST_CASE("total loss weighting") {
  CHECK(total_loss(1.5, 7.0, 0.0) == 1.5);
  CHECK(total_loss(1.5, 7.0, 0.1) == doctest::Approx(2.2).epsilon(1e-15));
  for (double lambda : {0.0, 0.01, 0.1, 0.5}) {
    CHECK(total_loss(2.0, 3.0, lambda) == doctest::Approx(2.0 + lambda * 3.0).epsilon(1e-15));
  }
  CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.1), ConfigError);
}

TEST_CASE("graph-built losses agree with the host implementations") {
  Rng rng(13);
  int b = 3, k = 4, bins = 8;
  Tensor coords({b, k, 2});
  for (auto& v : coords.data) v = rng.uniform();
  Tensor vis({b, k});
  for (auto& v : vis.data) v = rng.bernoulli(0.8) ? 1.0 : 0.0;
  GroundTruthEncoding gt = encode_targets(coords, vis, 1.0, bins);

  Tensor px = random_dists(rng, b, k, bins);
  Tensor py = random_dists(rng, b, k, bins);
  Tensor obs_px = random_dists(rng, b, k, bins);
  Tensor obs_py = random_dists(rng, b, k, bins);
  Tensor mask({b, k});
  for (auto& v : mask.data) v = rng.bernoulli(0.3) ? 1.0 : 0.0;

  // graph route: the same wiring build() uses
  Graph g;
  NodeId qx = g.constant(gt.qx), qy = g.constant(gt.qy), w = g.constant(gt.w);
  NodeId pxn = g.constant(px), pyn = g.constant(py);
  NodeId kl_sum = g.add(g.kl_div(qx, pxn), g.kl_div(qy, pyn));
  NodeId l_kpt = g.mean(g.sum_axis(g.mul(kl_sum, w), 1));
  CHECK(g.eval(l_kpt).data[0] == doctest::Approx(keypoint_loss(gt, px, py)).epsilon(1e-13));

  Tensor stable({b, k});
  double n_stable = 0.0;
  for (int64_t i = 0; i < mask.numel(); ++i) {
    stable[i] = mask[i] != 0.0 ? 0.0 : 1.0;
    n_stable += stable[i];
  }
  NodeId per = g.add(g.kl_div(g.constant(obs_px), pxn), g.kl_div(g.constant(obs_py), pyn));
  NodeId l_cf = g.mul(g.sum(g.mul(per, g.constant(stable))),
                      g.constant(Tensor::scalar(1.0 / n_stable)));
  CHECK(g.eval(l_cf).data[0] ==
        doctest::Approx(consistency_loss(obs_px, obs_py, px, py, mask)).epsilon(1e-13));
}
