#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>

#include "causalpose/errors.hpp"
#include "causalpose/gradcheck.hpp"
#include "causalpose/graph.hpp"
#include "causalpose/objective.hpp"
#include "causalpose/rng.hpp"
#include "doctest.h"

using namespace causalpose;

TEST_CASE("elementwise forward basics") {
  Graph g;
  NodeId a = g.constant(Tensor({2}, {1.0, 2.0}));
  NodeId b = g.constant(Tensor({2}, {3.0, 4.0}));
  const Tensor& sum = g.eval(g.add(a, b));
  CHECK(sum.data == std::vector<double>{4.0, 6.0});

  NodeId c = g.constant(Tensor({2}, {10.0, 20.0}));
  const Tensor& prod = g.eval(g.mul(a, c));
  CHECK(prod.data == std::vector<double>{10.0, 40.0});
}

TEST_CASE("matmul identity returns the input") {
  Graph g;
  Tensor eye({3, 3}, 0.0);
  for (int i = 0; i < 3; ++i) eye.at2(i, i) = 1.0;
  Rng rng(4);
  Tensor a({3, 4});
  for (auto& v : a.data) v = rng.normal();
  NodeId out = g.matmul(g.constant(eye), g.constant(a));
  CHECK(bitwise_equal(g.eval(out), a));
}

TEST_CASE("softmax of equal logits is uniform") {
  Graph g;
  NodeId out = g.softmax(g.constant(Tensor({3}, 0.0)), -1);
  for (double v : g.eval(out).data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax analytic two-point case") {
  Graph g;
  NodeId out = g.softmax(g.constant(Tensor({2}, {std::log(1.0), std::log(3.0)})), -1);
  const Tensor& p = g.eval(out);
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax rows normalize and shift invariance holds") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor z({4, 7});
    for (auto& v : z.data) v = 3.0 * rng.normal();
    double c = rng.uniform(-50.0, 50.0);
    Tensor zc = z;
    for (auto& v : zc.data) v += c;

    Graph g;
    const Tensor& p = g.eval(g.softmax(g.constant(z), -1));
    const Tensor& pc = g.eval(g.softmax(g.constant(zc), -1));
    for (int r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int i = 0; i < 7; ++i) s += p.at2(r, i);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    for (int64_t i = 0; i < p.numel(); ++i) CHECK(std::abs(p[i] - pc[i]) < 1e-12);
  }
}

TEST_CASE("shape mismatch names the offending node") {
  Graph g;
  NodeId a = g.placeholder("lhs", {2, 3});
  NodeId b = g.placeholder("rhs", {4});
  CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("add"), ShapeError);
  CHECK_THROWS_AS(g.matmul(a, b), ShapeError);
}

TEST_CASE("backward of x squared") {
  Graph g;
  NodeId x = g.placeholder("x", {}, true);
  NodeId loss = g.mul(x, x);
  g.bind("x", Tensor::scalar(3.0));
  g.backward(loss);
  CHECK(g.grad(x).data[0] == 6.0);
}

TEST_CASE("stop-gradient blocks upstream flow exactly") {
  Graph g;
  NodeId x = g.placeholder("x", {3}, true);
  NodeId y = g.placeholder("y", {3}, true);
  NodeId loss = g.sum(g.mul(g.stop_gradient(g.relu(x)), y));
  g.bind("x", Tensor({3}, {1.0, -2.0, 3.0}));
  g.bind("y", Tensor({3}, {4.0, 5.0, 6.0}));
  g.backward(loss);
  for (double v : g.grad(x).data) CHECK(v == 0.0);
  // y still receives the forwarded values
  CHECK(g.grad(y).data == std::vector<double>{1.0, 0.0, 3.0});
}

TEST_CASE("non-scalar loss is rejected") {
  Graph g;
  NodeId x = g.placeholder("x", {2}, true);
  g.bind("x", Tensor({2}, 1.0));
  CHECK_THROWS_AS(g.backward(g.relu(x)), ShapeError);
}

TEST_CASE("kl matches the scalar-loop oracle on random rows") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> q(8), p(8);
    double sq = 0.0, sp = 0.0;
    for (int i = 0; i < 8; ++i) {
      q[i] = 0.01 + rng.uniform();
      p[i] = 0.01 + rng.uniform();
      sq += q[i];
      sp += p[i];
    }
    for (int i = 0; i < 8; ++i) {
      q[i] /= sq;
      p[i] /= sp;
    }
    // independent scalar-loop oracle
    double expect = 0.0;
    for (int i = 0; i < 8; ++i) expect += q[i] * std::log(q[i] / p[i]);

    Graph g;
    NodeId kl = g.kl_div(g.constant(Tensor({8}, q)), g.constant(Tensor({8}, p)));
    CHECK(g.eval(kl).data[0] == doctest::Approx(expect).epsilon(1e-13));
    CHECK(g.eval(kl).data[0] >= 0.0);
  }
}

TEST_CASE("kl identity and analytic cases") {
  Graph g;
  std::vector<double> q{0.3, 0.7};
  NodeId same = g.kl_div(g.constant(Tensor({2}, q)), g.constant(Tensor({2}, q)));
  CHECK(g.eval(same).data[0] == 0.0);

  NodeId onehot =
      g.kl_div(g.constant(Tensor({2}, {1.0, 0.0})), g.constant(Tensor({2}, {0.5, 0.5})));
  CHECK(g.eval(onehot).data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  CHECK_THROWS_AS(g.kl_div(g.constant(Tensor({2}, q)), g.constant(Tensor({3}, 0.3))), ShapeError);
}

TEST_CASE("kl gradient wrt logits matches both finite differences and p - q") {
  Rng rng(33);
  Tensor q({5});
  double s = 0.0;
  for (auto& v : q.data) {
    v = 0.05 + rng.uniform();
    s += v;
  }
  for (auto& v : q.data) v /= s;
  Tensor z({5});
  for (auto& v : z.data) v = rng.normal();

  Graph g;
  NodeId zp = g.placeholder("z", {5}, true);
  NodeId p = g.softmax(zp, -1);
  NodeId loss = g.kl_div(g.constant(q), p);
  GradCheckResult res = grad_check(g, loss, {"z"}, {{"z", z}}, 1e-5);
  CHECK(res.max_rel_err < 1e-6);

  g.bind("z", z);
  g.backward(loss);
  const Tensor& pz = g.value(p);
  const Tensor& gz = g.grad(zp);
  for (int i = 0; i < 5; ++i) {
    CHECK(gz[i] == doctest::Approx(pz[i] - q[i]).epsilon(1e-10));
  }
}

TEST_CASE("grad_check is near-exact for a linear map") {
  Rng rng(5);
  Graph g;
  NodeId x = g.placeholder("x", {6}, true);
  Tensor w({6});
  for (auto& v : w.data) v = rng.normal();
  NodeId loss = g.sum(g.mul(x, g.constant(w)));
  Tensor x0({6});
  for (auto& v : x0.data) v = rng.normal();
  // wider step: for a linear map the stencil is exact and roundoff ~ eps/h
  GradCheckResult res = grad_check(g, loss, {"x"}, {{"x", x0}}, 1e-3);
  CHECK(res.max_rel_err < 1e-10);
}

TEST_CASE("grad_check sigmoid chain stays below 1e-6") {
  GradCheckResult res = gradcheck_op("sigmoid", 7);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("grad_check rejects bad steps and non-finite losses") {
  Graph g;
  NodeId x = g.placeholder("x", {2}, true);
  NodeId loss = g.sum(x);
  CHECK_THROWS_AS(grad_check(g, loss, {"x"}, {{"x", Tensor({2}, 1.0)}}, 0.5), ConfigError);
  Tensor bad({2}, 1.0);
  bad[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(grad_check(g, loss, {"x"}, {{"x", bad}}), NumericError);
}

TEST_CASE("every op matches central differences over many random draws") {
  for (const auto& name : gradcheck_op_names()) {
    double worst = 0.0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
      GradCheckResult res = gradcheck_op(name, seed);
      worst = std::max(worst, res.max_rel_err);
    }
    INFO("op ", name, " worst rel err ", worst);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("forward and backward are bit-identical across repeated runs") {
  Rng rng(70);
  Graph g;
  NodeId x = g.placeholder("x", {4, 6}, true);
  NodeId w = g.placeholder("w", {6, 3}, true);
  NodeId logits = g.matmul(g.relu(x), w);
  NodeId p = g.softmax(logits, -1);
  Tensor q({4, 3});
  for (int r = 0; r < 4; ++r) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) {
      q.at2(r, i) = 0.1 + rng.uniform();
      s += q.at2(r, i);
    }
    for (int i = 0; i < 3; ++i) q.at2(r, i) /= s;
  }
  NodeId loss = g.sum(g.kl_div(g.constant(q), p));

  Tensor x0({4, 6}), w0({6, 3});
  for (auto& v : x0.data) v = rng.normal();
  for (auto& v : w0.data) v = rng.normal();

  auto run = [&]() {
    g.bind("x", x0);
    g.bind("w", w0);
    g.eval(loss);
    g.backward(loss);
    return std::make_pair(g.grad(x), g.grad(w));
  };
  auto [gx1, gw1] = run();
  Tensor v1 = g.value(loss);
  auto [gx2, gw2] = run();
  CHECK(bitwise_equal(v1, g.value(loss)));
  CHECK(bitwise_equal(gx1, gx2));
  CHECK(bitwise_equal(gw1, gw2));
}

TEST_CASE("tape ids are topologically ordered") {
  Graph g;
  NodeId x = g.placeholder("x", {2}, true);
  NodeId y = g.mul(g.add(x, g.constant(Tensor({2}, 1.0))), x);
  g.sum(y);
  for (NodeId id = 0; id < g.size(); ++id) {
    for (NodeId in : g.node(id).inputs) CHECK(in < id);
  }
}

TEST_CASE("unbound placeholder is reported by name") {
  Graph g;
  NodeId x = g.placeholder("unbound_input", {2});
  NodeId out = g.scale(x, 2.0);
  CHECK_THROWS_WITH_AS(g.eval(out), doctest::Contains("unbound_input"), ConfigError);
}

TEST_CASE("forward map interface evaluates named outputs") {
  Graph g;
  NodeId x = g.placeholder("x", {2});
  NodeId out = g.scale(x, 3.0);
  auto result = g.forward({{"x", Tensor({2}, {1.0, 2.0})}}, {{"tripled", out}});
  CHECK(result.at("tripled").data == std::vector<double>{3.0, 6.0});
}
