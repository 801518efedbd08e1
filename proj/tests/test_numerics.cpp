#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "raregan/gradcheck.hpp"
#include "raregan/graph.hpp"
#include "raregan/param_store.hpp"
#include "raregan/tensor.hpp"

using namespace raregan;

TEST_CASE("tensor construction and indexing") {
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.numel() == 6);
  t(1, 2) = 5.0;
  CHECK(t(5) == 5.0);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);

  Tensor v = Tensor::vec({1.0, 2.0});
  CHECK(v.rows() == 1);
  CHECK(v.cols() == 2);

  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("elementwise ops and matmul forward values") {
  Graph g;
  Var a = g.constant(Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}}));
  Var b = g.constant(Tensor::matrix({{5.0, 6.0}, {7.0, 8.0}}));
  Var s = add(a, b);
  CHECK(s.val()(0, 0) == 6.0);
  CHECK(s.val()(1, 1) == 12.0);

  Var p = mul(a, b);
  CHECK(p.val()(0, 1) == 12.0);

  Var m = matmul(a, b);
  CHECK(m.val()(0, 0) == doctest::Approx(19.0));
  CHECK(m.val()(0, 1) == doctest::Approx(22.0));
  CHECK(m.val()(1, 0) == doctest::Approx(43.0));
  CHECK(m.val()(1, 1) == doctest::Approx(50.0));

  Var c = g.constant(Tensor::matrix({{1.0, 2.0, 3.0}}));
  CHECK_THROWS_AS(matmul(a, c), std::invalid_argument);

  // A * B^T against the plain product with B transposed by hand
  Var mt = matmul_nt(a, b);
  CHECK(mt.val()(0, 0) == doctest::Approx(1 * 5 + 2 * 6));
  CHECK(mt.val()(1, 0) == doctest::Approx(3 * 5 + 4 * 6));
}

TEST_CASE("softmax rows: sums to one, matches direct computation") {
  Graph g;
  Var x = g.constant(Tensor::matrix({{1.0, 2.0, 3.0}, {-5.0, 0.0, 5.0}}));
  Var s = softmax_rows(x);
  for (std::size_t i = 0; i < 2; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < 3; ++j) total += s.val()(i, j);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(s.val()(0, 0) == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
}

TEST_CASE("logsumexp with appended zero equals log(Z + 1)") {
  Graph g;
  Var x = g.constant(Tensor::matrix({{0.0, 0.0}, {100.0, 100.0}}));
  Var l0 = logsumexp_rows(x, true);
  CHECK(l0.val()(0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  // large logits must not overflow
  CHECK(std::isfinite(l0.val()(1)));
  CHECK(l0.val()(1) == doctest::Approx(100.0 + std::log(2.0 + std::exp(-100.0))));
}

TEST_CASE("discriminator reparameterization identity") {
  // D(x) = Z / (Z + 1) with Z the sum of exponentiated class logits must
  // match exp(lse(l) - lse0(l)) computed through the stable ops.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-30.0, 30.0);
  for (int trial = 0; trial < 100; ++trial) {
    double l0 = dist(rng), l1 = dist(rng);
    Graph g;
    Var l = g.constant(Tensor::matrix({{l0, l1}}));
    double lse = logsumexp_rows(l, false).val()(0);
    double lse0 = logsumexp_rows(l, true).val()(0);
    double d_stable = std::exp(lse - lse0);
    double z = std::exp(l0) + std::exp(l1);
    if (std::isfinite(z)) {
      CHECK(d_stable == doctest::Approx(z / (z + 1.0)).epsilon(1e-12));
    }
    CHECK(d_stable > 0.0);
    CHECK(d_stable < 1.0);
  }
}

TEST_CASE("backward: logsumexp gradient is the softmax") {
  ParamStore store;
  store.create("x", Tensor::matrix({{1.0, 2.0, 3.0}}));
  Graph g2;
  Var xp = g2.param(store, "x");
  Var l = logsumexp_rows(xp, false);
  g2.backward(sum_all(l));
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(store.grad("x")(j) ==
          doctest::Approx(std::exp(1.0 + double(j)) / z).epsilon(1e-10));
  }
}

TEST_CASE("backward is deterministic") {
  auto run = [](std::vector<double>& out) {
    ParamStore store;
    std::mt19937_64 rng(42);
    store.create("w", glorot_uniform(4, 3, rng));
    Graph g;
    Var w = g.param(store, "w");
    Var x = g.constant(uniform_init({2, 4}, -1.0, 1.0, rng));
    Var loss = mean_all(softplus(matmul(x, w)));
    g.backward(loss);
    out = store.grad("w").data;
  };
  std::vector<double> g1, g2;
  run(g1);
  run(g2);
  CHECK(g1 == g2);
}

TEST_CASE("non-finite forward values are rejected") {
  Graph g;
  Var x = g.constant(Tensor::scalar(1000.0));
  CHECK_THROWS_AS(raregan::exp(x), std::runtime_error);
  Var y = g.constant(Tensor::scalar(-1.0));
  CHECK_THROWS_AS(raregan::log(y), std::invalid_argument);
}

TEST_CASE("masked max over time steps") {
  Graph g;
  Var h0 = g.constant(Tensor::matrix({{1.0, 9.0}, {4.0, 4.0}}));
  Var h1 = g.constant(Tensor::matrix({{2.0, 8.0}, {5.0, 3.0}}));
  Var h2 = g.constant(Tensor::matrix({{3.0, 7.0}, {6.0, 2.0}}));
  Tensor mask = Tensor::matrix({{1.0, 1.0, 0.0}, {0.0, 1.0, 1.0}});
  Var pooled = masked_max_time({h0, h1, h2}, mask);
  CHECK(pooled.val()(0, 0) == 2.0);  // step 2 masked out for row 0
  CHECK(pooled.val()(0, 1) == 9.0);
  CHECK(pooled.val()(1, 0) == 6.0);
  CHECK(pooled.val()(1, 1) == 3.0);

  Tensor all_masked = Tensor::matrix({{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}});
  CHECK_THROWS_AS(masked_max_time({h0, h1, h2}, all_masked),
                  std::invalid_argument);
}

TEST_CASE("masked max routes gradient to the argmax step only") {
  ParamStore store;
  store.create("a", Tensor::matrix({{1.0, 9.0}}));
  store.create("b", Tensor::matrix({{2.0, 8.0}}));
  Graph g;
  Var a = g.param(store, "a");
  Var b = g.param(store, "b");
  Tensor mask = Tensor::matrix({{1.0, 1.0}});
  Var pooled = masked_max_time({a, b}, mask);
  g.backward(sum_all(pooled));
  CHECK(store.grad("a")(0) == 0.0);
  CHECK(store.grad("a")(1) == 1.0);
  CHECK(store.grad("b")(0) == 1.0);
  CHECK(store.grad("b")(1) == 0.0);
}

TEST_CASE("dropout: inverted scaling and eval identity") {
  std::mt19937_64 rng(11);
  Graph g;
  Tensor big = Tensor::zeros({100, 100});
  for (double& v : big.data) v = 1.0;
  Var x = g.constant(big);
  Var eval_out = dropout(x, 0.3, /*training=*/false, rng);
  CHECK(eval_out.index() == x.index());  // identity, no node added

  Var train_out = dropout(x, 0.3, /*training=*/true, rng);
  double sum = 0.0;
  int zeros = 0;
  for (double v : train_out.val().data) {
    if (v == 0.0) {
      ++zeros;
    } else {
      CHECK(v == doctest::Approx(1.0 / 0.7).epsilon(1e-12));
    }
    sum += v;
  }
  double kept_mean = sum / double(big.numel());
  CHECK(kept_mean == doctest::Approx(1.0).epsilon(0.05));
  CHECK(zeros > 2500);
  CHECK(zeros < 3500);
  CHECK_THROWS_AS(dropout(x, 1.0, true, rng), std::invalid_argument);
}

TEST_CASE("weight norm columns have the requested gains") {
  std::mt19937_64 rng(3);
  ParamStore store;
  store.create("v", glorot_uniform(6, 4, rng));
  store.create("g", Tensor::vec({1.0, 2.0, 0.5, 3.0}));
  Graph g;
  Var w = weight_norm(g.param(store, "v"), g.param(store, "g"));
  for (std::size_t j = 0; j < 4; ++j) {
    double nrm = 0.0;
    for (std::size_t i = 0; i < 6; ++i) nrm += w.val()(i, j) * w.val()(i, j);
    CHECK(std::sqrt(nrm) ==
          doctest::Approx(store.at("g")(j)).epsilon(1e-12));
  }

  // scaling v leaves the normalized weight unchanged
  ParamStore store2;
  Tensor v2 = store.at("v");
  for (double& x : v2.data) x *= 2.0;
  store2.create("v", v2);
  store2.create("g", store.at("g"));
  Graph g2;
  Var w2 = weight_norm(g2.param(store2, "v"), g2.param(store2, "g"));
  for (std::size_t i = 0; i < w.val().numel(); ++i) {
    CHECK(w2.val()(i) == doctest::Approx(w.val()(i)).epsilon(1e-12));
  }
}

TEST_CASE("adam single step matches the closed form") {
  ParamStore store;
  store.create("p", Tensor::scalar(1.0));
  Graph g;
  Var loss = scale(g.param(store, "p"), 0.5);  // d loss / d p = 0.5
  g.backward(loss);
  AdamConfig cfg;
  store.adam_step(cfg);

  double grad = 0.5;
  double m = (1.0 - cfg.beta1) * grad;
  double v = (1.0 - cfg.beta2) * grad * grad;
  double mhat = m / (1.0 - cfg.beta1);
  double vhat = v / (1.0 - cfg.beta2);
  double expected = 1.0 - cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
  CHECK(store.at("p")(0) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(store.step_count() == 1);
}

TEST_CASE("adam multi-step matches a hand-rolled recurrence") {
  std::mt19937_64 rng(9);
  ParamStore store;
  store.create("p", Tensor::vec({0.3, -0.7, 1.1}));
  AdamConfig cfg;

  std::vector<double> value = {0.3, -0.7, 1.1};
  std::vector<double> m(3, 0.0), v(3, 0.0);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int t = 1; t <= 7; ++t) {
    Tensor grad = Tensor::vec({dist(rng), dist(rng), dist(rng)});
    store.accumulate_grad("p", grad);
    store.adam_step(cfg);
    for (int i = 0; i < 3; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad(i);
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad(i) * grad(i);
      double mhat = m[i] / (1.0 - std::pow(cfg.beta1, t));
      double vhat = v[i] / (1.0 - std::pow(cfg.beta2, t));
      value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
  for (int i = 0; i < 3; ++i) {
    CHECK(store.at("p")(i) == doctest::Approx(value[i]).epsilon(1e-15));
  }
}

TEST_CASE("adam with explicit zero gradients leaves parameters bitwise intact") {
  ParamStore store;
  store.create("p", Tensor::vec({0.25, -0.0, 3.5e-12}));
  std::vector<double> before = store.at("p").data;
  store.accumulate_grad("p", Tensor::zeros({3}));
  store.adam_step(AdamConfig{});
  CHECK(store.at("p").data == before);
}

TEST_CASE("adam refuses to step a parameter with no gradient") {
  ParamStore store;
  store.create("a", Tensor::scalar(1.0));
  store.create("b", Tensor::scalar(2.0));
  store.accumulate_grad("a", Tensor::scalar(0.1));
  CHECK_THROWS_AS(store.adam_step(AdamConfig{}), std::runtime_error);
}

TEST_CASE("param bound twice in one graph accumulates both contributions") {
  ParamStore store;
  store.create("w", Tensor::scalar(2.0));
  Graph g;
  Var w1 = g.param(store, "w");
  Var w2 = g.param(store, "w");
  CHECK(w1.index() == w2.index());
  Var loss = add(scale(w1, 3.0), mul(w2, w2));  // 3w + w^2, d/dw = 3 + 2w = 7
  g.backward(loss);
  CHECK(store.grad("w")(0) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("params untouched by the loss still get a zero gradient on backward") {
  ParamStore store;
  store.create("used", Tensor::scalar(1.0));
  store.create("unused", Tensor::scalar(1.0));
  Graph g;
  Var u = g.param(store, "used");
  g.param(store, "unused");
  g.backward(scale(u, 2.0));
  CHECK(store.has_grad("unused"));
  CHECK(store.grad("unused")(0) == 0.0);
  store.adam_step(AdamConfig{});  // must not throw
}

TEST_CASE("param store serialization round-trips") {
  std::mt19937_64 rng(5);
  ParamStore store;
  store.create("w", glorot_uniform(3, 2, rng));
  store.create("b", Tensor::vec({0.1, 0.2}));
  store.accumulate_grad("w", uniform_init({3, 2}, -1, 1, rng));
  store.accumulate_grad("b", Tensor::vec({1.0, -1.0}));
  store.adam_step(AdamConfig{});

  ParamStore loaded = ParamStore::from_json(store.to_json());
  CHECK(loaded.step_count() == store.step_count());
  CHECK(loaded.names() == store.names());
  CHECK(loaded.at("w").data == store.at("w").data);

  // continuing training from the restored moments matches the original
  Tensor g2 = uniform_init({3, 2}, -1, 1, rng);
  store.accumulate_grad("w", g2);
  store.accumulate_grad("b", Tensor::vec({0.5, 0.5}));
  loaded.accumulate_grad("w", g2);
  loaded.accumulate_grad("b", Tensor::vec({0.5, 0.5}));
  store.adam_step(AdamConfig{});
  loaded.adam_step(AdamConfig{});
  CHECK(loaded.at("w").data == store.at("w").data);
  CHECK(loaded.at("b").data == store.at("b").data);
}

namespace {

// Shared fixture for gradient checks: a small two-layer network with an
// embedding lookup in front.
struct CheckNet {
  ParamStore store;
  std::mt19937_64 rng{1234};

  CheckNet() {
    store.create("emb", uniform_init({6, 4}, -0.5, 0.5, rng));
    store.create("w1", glorot_uniform(4, 5, rng));
    store.create("b1", uniform_init({5}, -0.1, 0.1, rng));
    store.create("v", glorot_uniform(5, 3, rng));
    store.create("g", Tensor::vec({1.0, 1.1, 0.9}));
  }

  Var logits(Graph& g) {
    Var x = gather_rows(g.param(store, "emb"), {0, 2, 4, 1});
    Var h = leaky_relu(
        add_rowvec(matmul(x, g.param(store, "w1")), g.param(store, "b1")), 0.2);
    Var w = weight_norm(g.param(store, "v"), g.param(store, "g"));
    return matmul(h, w);  // 4 x 3
  }
};

}  // namespace

TEST_CASE("gradient check: labeled cross-entropy over class logits") {
  CheckNet net;
  auto build = [&](Graph& g) {
    Var l = net.logits(g);
    Var lse = logsumexp_rows(l, false);
    Var picked = pick_cols(l, {0, 2, 1, 0});
    return mean_all(sub(lse, picked));
  };
  auto report = grad_check(build, net.store, net.rng, 20);
  CAPTURE(report.worst_param);
  CAPTURE(report.worst_analytic);
  CAPTURE(report.worst_numeric);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("gradient check: unlabeled and fake terms") {
  CheckNet net;
  auto build = [&](Graph& g) {
    Var l = net.logits(g);
    Var lse0 = logsumexp_rows(l, true);
    Var lse = logsumexp_rows(l, false);
    Var unlabeled = mean_all(sub(lse0, lse));
    Var fake = mean_all(lse0);
    return add(unlabeled, fake);
  };
  auto report = grad_check(build, net.store, net.rng, 20);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("gradient check: entropy of the class posterior") {
  CheckNet net;
  auto build = [&](Graph& g) {
    Var l = net.logits(g);
    Var p = softmax_rows(l);
    Var logp = raregan::log(p);
    return mean_all(row_sum(mul(p, logp)));
  };
  auto report = grad_check(build, net.store, net.rng, 20);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("gradient check: pooled recurrent-style composition") {
  CheckNet net;
  auto build = [&](Graph& g) {
    Var emb = g.param(net.store, "emb");
    Var x0 = gather_rows(emb, {0, 1});
    Var x1 = gather_rows(emb, {2, 3});
    Var x2 = gather_rows(emb, {4, 5});
    Var w1 = g.param(net.store, "w1");
    Var b1 = g.param(net.store, "b1");
    auto step = [&](Var x) {
      return raregan::tanh(add_rowvec(matmul(x, w1), b1));
    };
    Tensor mask = Tensor::matrix({{1.0, 1.0, 0.0}, {1.0, 1.0, 1.0}});
    Var pooled = masked_max_time({step(x0), step(x1), step(x2)}, mask);
    Var gates = mul(sigmoid(pooled), raregan::tanh(pooled));
    return mean_all(gates);
  };
  auto report = grad_check(build, net.store, net.rng, 20);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("gradient check: column-wise normalization and feature matching") {
  CheckNet net;
  auto build = [&](Graph& g) {
    Var l = net.logits(g);
    // normalize rows by a strictly positive column, then compare batch means
    Var denom = add_scalar(raregan::exp(scale(row_sum(raregan::sigmoid(l)), 0.1)), 0.5);
    Var normed = div_colvec(sub_colvec(l, scale(denom, 0.01)), denom);
    Var top = slice_cols(concat_cols(normed, l), 1, 5);
    Var diff = sub(mean_rows(top), mean_rows(raregan::softplus(top)));
    return add(sum_sq(diff), mean_all(raregan::sqrt(add_scalar(raregan::exp(top), 1.0))));
  };
  auto report = grad_check(build, net.store, net.rng, 25);
  CAPTURE(report.worst_param);
  CAPTURE(report.worst_analytic);
  CAPTURE(report.worst_numeric);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("gradient check: matmul_nt pairwise-similarity composition") {
  CheckNet net;
  auto build = [&](Graph& g) {
    Var l = net.logits(g);  // 4 x 3, rows as feature vectors
    Var norms = raregan::sqrt(add_scalar(row_sum(mul(l, l)), 1e-8));
    Var unit = div_colvec(l, norms);
    Var sims = matmul_nt(unit, unit);  // 4 x 4 cosine matrix
    Var sq = mul(sims, sims);
    // subtract the diagonal contribution (always 1) via sum - trace
    return add_scalar(scale(sum_all(sq), 1.0 / 12.0), -4.0 / 12.0);
  };
  auto report = grad_check(build, net.store, net.rng, 25);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_err < 1e-4);
}
