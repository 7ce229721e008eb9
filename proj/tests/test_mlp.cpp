#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tail/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <random>

using namespace tail;

namespace {

Mat random_mat(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

} // namespace

TEST_CASE("architecture validation") {
  CHECK_THROWS(MLPArchitecture{{4}}.validate());
  CHECK_THROWS(MLPArchitecture{{4, 0, 2}}.validate());
  CHECK_NOTHROW(MLPArchitecture{{4, 8, 2}}.validate());
}

TEST_CASE("zero weights forward to the output bias") {
  MLPArchitecture arch{{3, 5, 2}};
  MLPParams p = init_params(arch, 1);
  for (auto& W : p.W)
    for (std::size_t i = 0; i < W.rows() * W.cols(); ++i) W.data()[i] = 0.0;
  for (auto& b : p.b) std::fill(b.begin(), b.end(), 0.0);
  p.b.back() = {1.5, -2.0};
  Vec y = forward(p, {0.3, -0.7, 2.0});
  CHECK(y == Vec{1.5, -2.0});
}

TEST_CASE("hand-computed 2-2-1 forward pass") {
  // hidden pre-activations: [1*1 + 2*(-1), (-1)*1 + 1*(-1)] = [-1, -2]
  // ReLU -> [0, 0] with biases [2, 1] -> [1, -1] -> ReLU [1, 0]
  // output: 3*1 + 4*0 + 0.5 = 3.5
  MLPArchitecture arch{{2, 2, 1}};
  MLPParams p = init_params(arch, 1);
  p.W[0](0, 0) = 1.0;
  p.W[0](0, 1) = 2.0;
  p.W[0](1, 0) = -1.0;
  p.W[0](1, 1) = 1.0;
  p.b[0] = {2.0, 1.0};
  p.W[1](0, 0) = 3.0;
  p.W[1](0, 1) = 4.0;
  p.b[1] = {0.5};
  Vec y = forward(p, {1.0, -1.0});
  REQUIRE(y.size() == 1);
  CHECK(y[0] == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("loss is zero at the target and scales quadratically") {
  MLPArchitecture arch{{2, 4, 2}};
  MLPParams p = init_params(arch, 5);
  Mat X = random_mat(2, 6, 1);
  Mat T(2, 6);
  for (std::size_t j = 0; j < 6; ++j) {
    Vec y = forward(p, {X(0, j), X(1, j)});
    T(0, j) = y[0];
    T(1, j) = y[1];
  }
  auto [l0, g0] = loss_and_grad(p, X, T);
  CHECK(l0 < 1e-28);

  // doubling the residual quadruples the loss
  Mat T1 = T, T2 = T;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      T1(i, j) += 0.1;
      T2(i, j) += 0.2;
    }
  const double l1 = loss_and_grad(p, X, T1).first;
  const double l2 = loss_and_grad(p, X, T2).first;
  CHECK(l2 == doctest::Approx(4.0 * l1).epsilon(1e-10));
}

TEST_CASE("analytic gradients match central differences") {
  struct Case {
    MLPArchitecture arch;
    std::uint64_t seed;
  };
  const Case cases[] = {
      {{{4, 6, 6, 6, 1}}, 3},
      {{{20, 32, 32, 32, 20}}, 4},
      {{{2, 3, 2}}, 5},
      {{{1, 8, 1}}, 6},
  };
  for (const auto& c : cases) {
    MLPParams p = init_params(c.arch, c.seed);
    Mat X = random_mat(c.arch.input_width(), 5, c.seed * 11);
    Mat T = random_mat(c.arch.output_width(), 5, c.seed * 13);
    CHECK(grad_check(p, X, T) < 1e-5);
  }
}

TEST_CASE("a corrupted gradient is flagged by finite differences") {
  MLPArchitecture arch{{3, 4, 2}};
  MLPParams p = init_params(arch, 9);
  Mat X = random_mat(3, 5, 2);
  Mat T = random_mat(2, 5, 3);
  auto [loss, grad] = loss_and_grad(p, X, T);
  // corrupt one weight gradient and compare against a central difference
  const double bad = 2.0 * grad.dW[0](1, 2) + 0.5;
  const double h = 1e-5;
  MLPParams plus = p, minus = p;
  plus.W[0](1, 2) += h;
  minus.W[0](1, 2) -= h;
  const double fd =
      (loss_and_grad(plus, X, T).first - loss_and_grad(minus, X, T).first) / (2 * h);
  const double rel_ok = std::abs(grad.dW[0](1, 2) - fd) / std::max(std::abs(fd), 1.0);
  const double rel_bad = std::abs(bad - fd) / std::max(std::abs(fd), 1.0);
  CHECK(rel_ok < 1e-5);
  CHECK(rel_bad > 0.1);
}

TEST_CASE("training fits y = 3x") {
  MLPArchitecture arch{{1, 8, 1}};
  const std::size_t n = 64;
  Mat X(1, n), T(1, n);
  for (std::size_t j = 0; j < n; ++j) {
    X(0, j) = -1.0 + 2.0 * double(j) / double(n - 1);
    T(0, j) = 3.0 * X(0, j);
  }
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 2000;
  cfg.minibatch = 16;
  TrainResult res = train(arch, X, T, cfg, 7);
  CHECK(res.loss_curve.size() == cfg.epochs);
  CHECK(res.loss_curve.back() < 1e-4);
  Vec y = forward(res.params, {0.5});
  CHECK(std::abs(y[0] - 1.5) < 0.05);
}

TEST_CASE("training is deterministic in the seeds") {
  MLPArchitecture arch{{2, 6, 1}};
  Mat X = random_mat(2, 32, 4);
  Mat T = random_mat(1, 32, 5);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.minibatch = 16;
  TrainResult a = train(arch, X, T, cfg, 3);
  TrainResult b = train(arch, X, T, cfg, 3);
  CHECK(a.loss_curve == b.loss_curve);
  for (std::size_t l = 0; l < a.params.W.size(); ++l) {
    CHECK(a.params.W[l] == b.params.W[l]);
    CHECK(a.params.b[l] == b.params.b[l]);
  }
  // a different init seed changes the outcome
  TrainResult c = train(arch, X, T, cfg, 4);
  CHECK(c.loss_curve != a.loss_curve);
}

TEST_CASE("zero learning rate leaves the parameters at the init") {
  MLPArchitecture arch{{2, 4, 1}};
  Mat X = random_mat(2, 16, 6);
  Mat T = random_mat(1, 16, 7);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 10;
  cfg.minibatch = 8;
  TrainResult res = train(arch, X, T, cfg, 8);
  MLPParams init = init_params(arch, 8);
  for (std::size_t l = 0; l < init.W.size(); ++l) {
    CHECK(res.params.W[l] == init.W[l]);
    CHECK(res.params.b[l] == init.b[l]);
  }
}

TEST_CASE("standardizer fit and roundtrip") {
  Mat X(2, 4);
  X(0, 0) = 1;
  X(0, 1) = 3;
  X(0, 2) = 1;
  X(0, 3) = 3;
  X(1, 0) = -10;
  X(1, 1) = 10;
  X(1, 2) = -10;
  X(1, 3) = 10;
  auto s = Standardizer::fit(X);
  CHECK(s.mean[0] == doctest::Approx(2.0));
  CHECK(s.mean[1] == doctest::Approx(0.0));
  CHECK(s.stdev[0] == doctest::Approx(1.0));
  CHECK(s.stdev[1] == doctest::Approx(10.0));
  Vec x = {2.7, -4.2};
  Vec back = s.invert(s.apply(x));
  CHECK(back[0] == doctest::Approx(x[0]).epsilon(1e-14));
  CHECK(back[1] == doctest::Approx(x[1]).epsilon(1e-14));
}

TEST_CASE("global-scale standardizer preserves relative magnitudes") {
  Mat X(2, 4);
  X(0, 0) = 100;
  X(0, 1) = 102;
  X(0, 2) = 98;
  X(0, 3) = 100;
  X(1, 0) = -0.01;
  X(1, 1) = 0.01;
  X(1, 2) = -0.01;
  X(1, 3) = 0.01;
  auto s = Standardizer::fit_global_scale(X);
  CHECK(s.stdev[0] == s.stdev[1]);  // one shared scale
  Vec z = s.apply({102.0, 0.01});
  // the large dimension stays large relative to the small one
  CHECK(std::abs(z[0]) > std::abs(z[1]));
  Vec back = s.invert(z);
  CHECK(back[0] == doctest::Approx(102.0).epsilon(1e-12));
  CHECK(back[1] == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("model save/load roundtrip is exact") {
  MLPArchitecture arch{{3, 5, 2}};
  MLPParams p = init_params(arch, 12);
  Mat X = random_mat(3, 8, 8);
  Mat Y = random_mat(2, 8, 9);
  auto in_std = Standardizer::fit(X);
  auto out_std = Standardizer::fit(Y);
  const std::string path = "tmp_model.tmlp";
  save_model(p, in_std, out_std, path);
  LoadedModel m = load_model(path);
  CHECK(m.params.arch.widths == arch.widths);
  CHECK(m.params.init_seed == p.init_seed);
  for (std::size_t l = 0; l < p.W.size(); ++l) {
    CHECK(m.params.W[l] == p.W[l]);
    CHECK(m.params.b[l] == p.b[l]);
  }
  CHECK(m.in_std.mean == in_std.mean);
  CHECK(m.in_std.stdev == in_std.stdev);
  CHECK(m.out_std.mean == out_std.mean);
  CHECK(m.out_std.stdev == out_std.stdev);
  std::remove(path.c_str());
}
