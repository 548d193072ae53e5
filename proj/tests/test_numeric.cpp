#include "doctest.h"
#include "oracles.hpp"

using namespace gsnn;
using oracle::central_diff;
using oracle::rel_err;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor2 t(r, c);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : t.flat()) v = u(rng);
  return t;
}

Vec random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("tensor shape checks") {
  CHECK_THROWS_AS(Tensor2(2, 2, Vec{1, 2, 3}), DimensionError);
  const Tensor2 i = Tensor2::identity(3);
  CHECK(i(1, 1) == 1.0);
  CHECK(i(1, 2) == 0.0);
  CHECK(i.shape_string() == "3x3");
  Tensor2 w(2, 3);
  Vec y(3);
  CHECK_THROWS_AS(matvec_acc(w, Vec(2), y), DimensionError);
}

TEST_CASE("check_finite names the stage") {
  Vec v{1.0, std::nan("")};
  try {
    check_finite(v, "gru.update_gate");
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.stage() == "gru.update_gate");
  }
}

TEST_CASE("sigmoid is stable at the extremes") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(std::isfinite(sigmoid(-800.0)));
}

TEST_CASE("linear layer gradient matches finite differences") {
  Rng rng = make_rng(1, "t");
  Tensor2 w = random_tensor(3, 4, rng);
  Vec b = random_vec(3, rng);
  Vec x = random_vec(4, rng);
  const Vec dy = random_vec(3, rng);
  auto f = [&] {
    const Vec y = linear_forward(x, w, b);
    return std::inner_product(y.begin(), y.end(), dy.begin(), 0.0);
  };
  const auto g = linear_backward(x, w, dy);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(rel_err(g.dx[i], central_diff(f, x[i])) < 1e-6);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(rel_err(g.dw.flat()[i], central_diff(f, w.flat()[i])) < 1e-6);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(rel_err(g.db[i], central_diff(f, b[i])) < 1e-6);
}

TEST_CASE("gated update gradient matches finite differences") {
  Rng rng = make_rng(2, "t");
  const std::size_t h = 4;
  std::vector<Tensor2> ws;
  for (int k = 0; k < 6; ++k) ws.push_back(random_tensor(h, h, rng, 0.6));
  Vec hp = random_vec(h, rng);
  Vec a = random_vec(h, rng);
  const Vec dy = random_vec(h, rng);
  const GruWeights p{ws[0], ws[1], ws[2], ws[3], ws[4], ws[5]};
  auto f = [&] {
    const Vec y = gru_gate_step(hp, a, p);
    return std::inner_product(y.begin(), y.end(), dy.begin(), 0.0);
  };
  GruCache cache;
  Vec out(h);
  gru_gate_step(hp, a, p, out, &cache);
  std::vector<Tensor2> gs(6, Tensor2(h, h));
  Vec dh(h), da(h);
  gru_gate_backward(hp, a, cache, dy, p, {gs[0], gs[1], gs[2], gs[3], gs[4], gs[5]}, dh, da);
  double worst = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    worst = std::max(worst, rel_err(dh[i], central_diff(f, hp[i])));
    worst = std::max(worst, rel_err(da[i], central_diff(f, a[i])));
  }
  for (int k = 0; k < 6; ++k) {
    for (std::size_t i = 0; i < ws[k].size(); ++i) {
      worst = std::max(worst, rel_err(gs[k].flat()[i], central_diff(f, ws[k].flat()[i])));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gated update with zero gates keeps the state") {
  const Tensor2 z(2, 2);
  const GruWeights p{z, z, z, z, z, z};
  // z = 0.5, candidate = tanh(0) = 0, so h' = h / 2
  const Vec y = gru_gate_step(Vec{1.0, -2.0}, Vec{3.0, 4.0}, p);
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(-1.0));
}

TEST_CASE("bce loss values and gradient") {
  CHECK(bce_loss(Vec{0.5}, Vec{1.0}) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(bce_loss(Vec{0.5}, Vec{0.3}), DomainError);
  // Clamped: finite loss, zero gradient.
  CHECK(std::isfinite(bce_loss(Vec{0.0}, Vec{1.0})));
  CHECK(bce_backward(Vec{0.0}, Vec{1.0})[0] == 0.0);

  Vec p{0.2, 0.7, 0.9};
  const Vec t{0.0, 1.0, 1.0};
  const Vec g = bce_backward(p, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(rel_err(g[i], central_diff([&] { return bce_loss(p, t); }, p[i])) < 1e-6);
  }
}

TEST_CASE("mse gradient") {
  Vec p{0.2, 0.7};
  const Vec t{0.09, 1.0};
  CHECK(mse_loss(p, t) == doctest::Approx((0.11 * 0.11 + 0.3 * 0.3) / 2));
  const Vec g = mse_backward(p, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(rel_err(g[i], central_diff([&] { return mse_loss(p, t); }, p[i])) < 1e-6);
  }
}

TEST_CASE("dropout keeps the expectation") {
  Rng rng = make_rng(3, "dropout");
  const Vec x(2000, 1.0);
  double mean = 0.0;
  const int reps = 50;
  for (int r = 0; r < reps; ++r) {
    const auto d = dropout_forward(x, 0.5, Mode::train, rng);
    for (double v : d.y) mean += v;
  }
  mean /= reps * 2000.0;
  CHECK(mean == doctest::Approx(1.0).epsilon(0.02));

  const auto e = dropout_forward(x, 0.5, Mode::eval, rng);
  CHECK(e.y == x);
  CHECK_THROWS_AS(dropout_forward(x, 1.0, Mode::train, rng), ConfigError);

  const auto d = dropout_forward(Vec{1, 2, 3, 4}, 0.5, Mode::train, rng);
  const Vec back = dropout_backward(d.mask, Vec{1, 1, 1, 1});
  CHECK(back == d.mask);
}

TEST_CASE("named seed streams are stable and distinct") {
  CHECK(derive_seed(1, "init") == derive_seed(1, "init"));
  CHECK(derive_seed(1, "init") != derive_seed(1, "dropout"));
  CHECK(derive_seed(1, "train", 0) != derive_seed(1, "train", 1));
  CHECK(derive_seed(1, "init") != derive_seed(2, "init"));
}
