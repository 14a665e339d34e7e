#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mmcap/rng.hpp"
#include "mmcap/tensor.hpp"
#include "test_util.hpp"

using namespace mmcap;
using testutil::random_tensor;

TEST_CASE("affine identity and forced cases") {
  Graph g;
  Value x = g.input(Tensor::vec({1, 2}));
  Value w = g.input(Tensor::identity(2));
  Value b = g.input(Tensor::vec({0, 0}));
  Value y = g.affine(x, w, b);
  CHECK(g.value(y).at(0) == 1.0);
  CHECK(g.value(y).at(1) == 2.0);

  Value x2 = g.input(Tensor::vec({1, 1}));
  Value w2 = g.input(Tensor::mat(1, 2, {1, 1}));
  Value b2 = g.input(Tensor::vec({-2}));
  Value y2 = g.affine(x2, w2, b2);
  CHECK(g.value(y2).at(0) == 0.0);
}

TEST_CASE("affine shape mismatch names both shapes") {
  Graph g;
  Value x = g.input(Tensor::vec({1, 2, 3}));
  Value w = g.input(Tensor::identity(2));
  Value b = g.input(Tensor::vec({0, 0}));
  CHECK_THROWS_WITH_AS(g.affine(x, w, b), doctest::Contains("[3]"), DimensionError);
}

TEST_CASE("affine gradients match central finite differences") {
  RngStream rng(7);
  Param x("x", random_tensor({4}, rng));
  Param w("W", random_tensor({4, 4}, rng));
  Param b("b", random_tensor({4}, rng));
  std::vector<Param*> params{&x, &w, &b};
  auto fn = [&](bool with_grad) {
    Graph g;
    Value y = g.affine(g.param(x), g.param(w), g.param(b));
    // scalar projection so the check covers all rows
    Value probe = g.input(Tensor::vec({0.3, -1.1, 0.7, 2.0}));
    Value loss = g.dot(y, probe);
    if (with_grad) g.backward(loss);
    return g.value(loss).at(0);
  };
  auto report = check_gradient(fn, params, 1e-5);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("softmax basics") {
  Graph g;
  Value p = g.softmax(g.input(Tensor::vec({0, 0, 0})));
  for (int i = 0; i < 3; ++i) CHECK(g.value(p).at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  // shift invariance
  Value a = g.softmax(g.input(Tensor::vec({1.5, -0.25})));
  Value b = g.softmax(g.input(Tensor::vec({1.5 + 42.0, -0.25 + 42.0})));
  CHECK(g.value(a).at(0) == doctest::Approx(g.value(b).at(0)).epsilon(1e-15));

  // stability
  Value s = g.softmax(g.input(Tensor::vec({1000, 0})));
  CHECK(g.value(s).at(0) == doctest::Approx(1.0));
  CHECK(g.value(s).at(1) == doctest::Approx(0.0));
  CHECK(g.value(s).all_finite());
}

TEST_CASE("softmax properties over 1000 random vectors") {
  RngStream rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = rng.uniform_int(1, 12);
    Tensor v = random_tensor({n}, rng, 20.0);
    Graph g;
    Value p = g.softmax(g.input(v));
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(g.value(p).at(i) > 0.0);
      total += g.value(p).at(i);
    }
    CHECK(std::fabs(total - 1.0) <= 1e-12);

    double shift = rng.uniform(-5.0, 5.0);
    Tensor vs = v;
    for (int i = 0; i < n; ++i) vs.at(i) += shift;
    Value ps = g.softmax(g.input(vs));
    for (int i = 0; i < n; ++i)
      CHECK(std::fabs(g.value(p).at(i) - g.value(ps).at(i)) <= 1e-12);
  }
}

TEST_CASE("empty vector cannot be formed") {
  CHECK_THROWS_AS(Tensor({0}, {}), DimensionError);
}

TEST_CASE("elementwise ops") {
  Graph g;
  CHECK(g.value(g.sigmoid(g.input(Tensor::scalar(0)))).at(0) == 0.5);
  CHECK(g.value(g.tanh(g.input(Tensor::scalar(0)))).at(0) == 0.0);
  Value m = g.mul(g.input(Tensor::vec({2, 3})), g.input(Tensor::vec({4, 5})));
  CHECK(g.value(m).at(0) == 8.0);
  CHECK(g.value(m).at(1) == 15.0);
  CHECK_THROWS_AS(g.add(g.input(Tensor::vec({1})), g.input(Tensor::vec({1, 2}))),
                  DimensionError);
}

TEST_CASE("backward on sum of squares") {
  Param x("x", Tensor::vec({1, 2}));
  Graph g;
  Value xv = g.param(x);
  Value loss = g.sum(g.mul(xv, xv));
  g.backward(loss);
  CHECK(x.grad.at(0) == 2.0);
  CHECK(x.grad.at(1) == 4.0);
}

TEST_CASE("softmax cross entropy gradient is p minus onehot") {
  Param z("z", Tensor::zeros({4}));
  Graph g;
  Value loss = g.cross_entropy_logits(g.param(z), 2);
  g.backward(loss);
  for (int i = 0; i < 4; ++i) {
    double expected = 0.25 - (i == 2 ? 1.0 : 0.0);
    CHECK(z.grad.at(i) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(g.value(loss).at(0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("backward requires scalar loss") {
  Param x("x", Tensor::vec({1, 2}));
  Graph g;
  Value xv = g.param(x);
  CHECK_THROWS_AS(g.backward(xv), ContractError);
}

TEST_CASE("backward is bit-deterministic across runs on the same graph") {
  RngStream rng(3);
  Param w("W", random_tensor({5, 5}, rng));
  Param x("x", random_tensor({5}, rng));
  Graph g;
  Value y = g.tanh(g.matvec(g.param(w), g.param(x)));
  Value loss = g.sum(g.mul(y, y));
  w.zero_grad();
  x.zero_grad();
  g.backward(loss);
  Tensor gw = w.grad, gx = x.grad;
  w.zero_grad();
  x.zero_grad();
  g.backward(loss);
  CHECK(std::memcmp(gw.data.data(), w.grad.data.data(), gw.data.size() * 8) == 0);
  CHECK(std::memcmp(gx.data.data(), x.grad.data.data(), gx.data.size() * 8) == 0);
}

TEST_CASE("parameter used twice accumulates both contributions") {
  Param x("x", Tensor::vec({3}));
  Graph g;
  Value a = g.param(x);
  Value b = g.param(x);
  Value loss = g.sum(g.mul(a, b));  // x^2 through two leaves
  g.backward(loss);
  CHECK(x.grad.at(0) == 6.0);
}

TEST_CASE("check_gradient on a quadratic") {
  Param x("x", Tensor::vec({1.5, -2.0, 0.5}));
  std::vector<Param*> params{&x};
  auto fn = [&](bool with_grad) {
    Graph g;
    Value xv = g.param(x);
    Value loss = g.sum(g.mul(xv, xv));
    if (with_grad) g.backward(loss);
    return g.value(loss).at(0);
  };
  auto report = check_gradient(fn, params, 1e-5);
  CHECK(report.max_rel_err < 1e-9);
}

TEST_CASE("check_gradient rejects bad eps and non-deterministic fn") {
  Param x("x", Tensor::vec({1.0}));
  std::vector<Param*> params{&x};
  auto fn = [&](bool) { return 0.0; };
  CHECK_THROWS_AS(check_gradient(fn, params, 0.0), ContractError);
  CHECK_THROWS_AS(check_gradient(fn, params, 0.5), ContractError);

  int calls = 0;
  auto bad = [&](bool with_grad) {
    Graph g;
    Value loss = g.sum(g.param(x));
    if (with_grad) g.backward(loss);
    return g.value(loss).at(0) + calls++ * 1e-3;
  };
  CHECK_THROWS_AS(check_gradient(bad, params, 1e-5), ContractError);
}

TEST_CASE("dual_affine matches matvec chain and passes finite differences") {
  RngStream rng(17);
  Param wx("Wx", random_tensor({3, 4}, rng));
  Param wh("Wh", random_tensor({3, 2}, rng));
  Param b("b", random_tensor({3}, rng));
  Param x("x", random_tensor({4}, rng));
  Param h("h", random_tensor({2}, rng));
  Graph g;
  Value fused = g.dual_affine(g.param(x), g.param(wx), g.param(h), g.param(wh), g.param(b));
  Value chained = g.add(g.add(g.matvec(g.param(wx), g.param(x)), g.matvec(g.param(wh), g.param(h))),
                        g.param(b));
  for (int i = 0; i < 3; ++i)
    CHECK(g.value(fused).at(i) == doctest::Approx(g.value(chained).at(i)).epsilon(1e-15));

  std::vector<Param*> params{&wx, &wh, &b, &x, &h};
  auto fn = [&](bool with_grad) {
    Graph gg;
    Value y = gg.dual_affine(gg.param(x), gg.param(wx), gg.param(h), gg.param(wh), gg.param(b));
    Value loss = gg.sum(gg.mul(y, y));
    if (with_grad) gg.backward(loss);
    return gg.value(loss).at(0);
  };
  CHECK(check_gradient(fn, params, 1e-5).max_rel_err < 1e-6);
}

TEST_CASE("every registered op passes finite-difference checks") {
  RngStream rng(23);
  Param w("W", random_tensor({3, 3}, rng));
  Param x("x", random_tensor({3}, rng));
  Param y("y", random_tensor({3}, rng));
  Param e("E", random_tensor({4, 3}, rng));
  std::vector<Param*> params{&w, &x, &y, &e};
  auto fn = [&](bool with_grad) {
    Graph g;
    Value xv = g.param(x);
    Value yv = g.param(y);
    Value wv = g.param(w);
    Value ev = g.param(e);
    Value t1 = g.tanh(g.affine(xv, wv, yv));
    Value t2 = g.sigmoid(g.mul(t1, g.pick_row(ev, 2)));
    Value t3 = g.concat(g.slice(t2, 0, 2), t2);
    Value p = g.softmax(t3);
    std::vector<Value> scalars{g.dot(t2, yv), g.sum(p), g.scale(g.dot(xv, yv), 0.5)};
    Value st = g.stack(scalars);
    std::vector<Value> vecs{t2, yv, xv};
    Value ws = g.weighted_sum(st, vecs);
    Value ce = g.cross_entropy_logits(ws, 1);
    Value loss = g.add(ce, g.sum(ws));
    if (with_grad) g.backward(loss);
    return g.value(loss).at(0);
  };
  CHECK(check_gradient(fn, params, 1e-5).max_rel_err < 1e-6);
}
