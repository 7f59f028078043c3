#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ynet/adam.hpp"
#include "ynet/gradcheck.hpp"
#include "ynet/tensor.hpp"

using namespace ynet;

namespace {
using T = Tensor<double>;
}

TEST_CASE("conv1d hand-evaluated examples") {
  // identity kernel
  T in({1, 4}, {1, 2, 3, 4});
  T k1({1, 1, 1}, std::vector<double>{1});
  T b({1}, std::vector<double>{0});
  T out = conv1d(in, k1, b, 1, 1, 0, 0);
  CHECK(out.shape() == std::vector<int>{1, 4});
  for (int i = 0; i < 4; ++i) CHECK(out.data()[i] == doctest::Approx(i + 1));

  // sliding sum, k=2
  T k2({1, 1, 2}, {1, 1});
  out = conv1d(in, k2, b, 1, 1, 0, 0);
  CHECK(out.shape() == std::vector<int>{1, 3});
  CHECK(out.data()[0] == doctest::Approx(3));
  CHECK(out.data()[1] == doctest::Approx(5));
  CHECK(out.data()[2] == doctest::Approx(7));

  // dilated sum
  T in5({1, 5}, {1, 2, 3, 4, 5});
  out = conv1d(in5, k2, b, 1, 2, 0, 0);
  CHECK(out.shape() == std::vector<int>{1, 3});
  CHECK(out.data()[0] == doctest::Approx(4));
  CHECK(out.data()[1] == doctest::Approx(6));
  CHECK(out.data()[2] == doctest::Approx(8));
}

TEST_CASE("conv1d rejects bad configurations") {
  T in({2, 8});
  T k({1, 3, 2});  // expects 3 input channels
  T b({1});
  CHECK_THROWS_AS(conv1d(in, k, b, 1, 1, 0, 0), ConfigError);
  T k2({1, 2, 9});
  CHECK_THROWS_AS(conv1d(in, k2, b, 1, 1, 0, 0), ConfigError);  // no frames
}

TEST_CASE("conv2d same padding and constant kernels") {
  // zero kernels -> bias everywhere
  T in({1, 3, 3}, {1, 1, 1, 1, 1, 1, 1, 1, 1});
  T kz({2, 1, 3, 3});
  T bz({2}, {3.5, -1.0});
  T out = conv2d(in, kz, bz, 1);
  CHECK(out.shape() == std::vector<int>{2, 3, 3});
  for (int i = 0; i < 9; ++i) {
    CHECK(out.data()[i] == doctest::Approx(3.5));
    CHECK(out.data()[9 + i] == doctest::Approx(-1.0));
  }

  // ones kernel over ones input: centre 9, edges 6, corners 4
  T k1({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  T b1({1}, std::vector<double>{0.0});
  out = conv2d(in, k1, b1, 1);
  CHECK(out.data()[4] == doctest::Approx(9));
  CHECK(out.data()[1] == doctest::Approx(6));
  CHECK(out.data()[0] == doctest::Approx(4));
}

TEST_CASE("maxpool and upsample basics") {
  T in({1, 2, 2}, {1, 2, 3, 4});
  T out = maxpool2d(in);
  CHECK(out.shape() == std::vector<int>{1, 1, 1});
  CHECK(out.data()[0] == doctest::Approx(4));

  T c({1, 4, 4}, std::vector<double>(16, 7.0));
  out = maxpool2d(c);
  for (int i = 0; i < 4; ++i) CHECK(out.data()[i] == doctest::Approx(7.0));

  T one({1, 1, 1}, std::vector<double>{5});
  out = upsample2x(one);
  CHECK(out.shape() == std::vector<int>{1, 2, 2});
  for (int i = 0; i < 4; ++i) CHECK(out.data()[i] == doctest::Approx(5));

  CHECK_THROWS_AS(maxpool2d(T({1, 3, 4})), ConfigError);

  // upsample(maxpool(x)) restores even shapes
  T x({2, 6, 8});
  CHECK(upsample2x(maxpool2d(x)).shape() == x.shape());
}

TEST_CASE("activations") {
  T in({3}, {-1, 0, 2});
  T out = relu(in);
  CHECK(out.data()[0] == 0);
  CHECK(out.data()[1] == 0);
  CHECK(out.data()[2] == 2);

  T in2({2}, {-2, 3});
  out = leaky_relu(in2, 0.01);
  CHECK(out.data()[0] == doctest::Approx(-0.02));
  CHECK(out.data()[1] == doctest::Approx(3));

  T in3({3}, {-5, 0.3, 5});
  out = hardtanh(in3, 0.0, 1.0);
  CHECK(out.data()[0] == doctest::Approx(0));
  CHECK(out.data()[1] == doctest::Approx(0.3));
  CHECK(out.data()[2] == doctest::Approx(1));

  CHECK_THROWS_AS(parse_activation("swish"), ConfigError);
  CHECK_THROWS_AS(hardtanh(in3, 1.0, 0.0), ConfigError);
}

TEST_CASE("concat and slice are mutually inverse") {
  T a({2, 1}, {1, 2});
  T b({1, 1}, std::vector<double>{3});
  T cat = concat<double>({a, b}, 0);
  CHECK(cat.shape() == std::vector<int>{3, 1});
  CHECK(cat.data()[0] == 1);
  CHECK(cat.data()[1] == 2);
  CHECK(cat.data()[2] == 3);

  std::mt19937 rng(42);
  std::normal_distribution<double> g;
  T x({3, 4, 5});
  T y({3, 2, 5});
  for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  for (int64_t i = 0; i < y.size(); ++i) y.data()[i] = g(rng);
  T joined = concat<double>({x, y}, 1);
  CHECK(joined.shape() == std::vector<int>{3, 6, 5});
  T back_x = slice(joined, 1, 0, 4);
  T back_y = slice(joined, 1, 4, 2);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(back_x.data()[i] == x.data()[i]);
  for (int64_t i = 0; i < y.size(); ++i) CHECK(back_y.data()[i] == y.data()[i]);

  CHECK_THROWS_AS(concat<double>({x, T({3, 2, 4})}, 1), ConfigError);

  // shape arithmetic at model scale
  T s1({256, 4, 32}), s2({256, 4, 32});
  CHECK(concat<double>({s1, s2}, 0).shape() == std::vector<int>{512, 4, 32});
}

TEST_CASE("mse value and gradient") {
  T x({2}, {0, 0});
  T y({2}, {1, 3});
  CHECK(mse(x, y).item() == doctest::Approx(5.0));

  T w({2}, {1.5, -2.0}, true);
  CHECK(mse(w, w).item() == doctest::Approx(0.0));
  T loss = mse(w, w);
  backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(0.0));
  CHECK(w.grad()[1] == doctest::Approx(0.0));
  w.zero_grad();

  // d(mse)/dw = 2(w - t)/n
  T t({2}, {0.5, 0.5});
  loss = mse(w, t);
  backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(2.0 * (1.5 - 0.5) / 2));
  CHECK(w.grad()[1] == doctest::Approx(2.0 * (-2.0 - 0.5) / 2));
}

TEST_CASE("backward basics and accumulation") {
  // loss = sum(w * x), grad(w) = x
  T w({3}, {1, 2, 3}, true);
  T x({3}, {4, 5, 6});
  T loss = sum(mul(w, x));
  CHECK_THROWS_AS(backward(mul(w, x)), UsageError);  // non-scalar loss
  backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(w.grad()[static_cast<size_t>(i)] == doctest::Approx(x.data()[i]));

  // repeated backward without zero_grad doubles the gradient
  T loss2 = sum(mul(w, x));
  backward(loss2);
  backward(loss2);
  // w now holds grads from loss (1x) + loss2 (2x) = 3x
  for (int i = 0; i < 3; ++i)
    CHECK(w.grad()[static_cast<size_t>(i)] == doctest::Approx(3 * x.data()[i]));
}

TEST_CASE("batchnorm2d normalizes per channel in train mode") {
  std::mt19937 rng(7);
  std::normal_distribution<double> g(3.0, 2.0);
  T in({2, 3, 4, 4}, true);
  for (int64_t i = 0; i < in.size(); ++i) in.data()[i] = g(rng);
  T gamma({3}, {1, 1, 1}, true);
  T beta({3}, {0, 0, 0}, true);
  BatchNormState<double> stats;
  T out = batchnorm2d(in, gamma, beta, stats, Mode::Train);

  for (int c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    int count = 0;
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 16; ++i) {
        mean += out.data()[(n * 3 + c) * 16 + i];
        ++count;
      }
    mean /= count;
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 16; ++i) {
        const double d = out.data()[(n * 3 + c) * 16 + i] - mean;
        var += d * d;
      }
    var /= count;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }

  // gamma = 0 -> output equals beta
  T gz({3}, {0, 0, 0});
  T bz({3}, {0.25, -1, 2});
  BatchNormState<double> stats2;
  out = batchnorm2d(in, gz, bz, stats2, Mode::Eval);  // warns, identity stats
  T out_t = batchnorm2d(in, gz, bz, stats2, Mode::Train);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 16; ++i)
        CHECK(out_t.data()[(n * 3 + c) * 16 + i] == doctest::Approx(bz.data()[c]));
}

TEST_CASE("dropout is identity in eval mode and scales in train mode") {
  std::mt19937 rng(11);
  T x({100}, std::vector<double>(100, 1.0));
  T eval_out = dropout(x, 0.5, Mode::Eval, rng);
  for (int i = 0; i < 100; ++i) CHECK(eval_out.data()[i] == 1.0);
  T train_out = dropout(x, 0.5, Mode::Train, rng);
  int kept = 0;
  for (int i = 0; i < 100; ++i) {
    const double v = train_out.data()[i];
    CHECK((v == 0.0 || v == doctest::Approx(2.0)));
    kept += v != 0.0;
  }
  CHECK(kept > 20);
  CHECK(kept < 80);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  T w({2}, {1.0, -2.0}, true);
  w.grad();  // allocate zero grads
  std::vector<Tensor<double>> params = {w};
  AdamState<double> state(0.1);
  adam_step(params, state);
  CHECK(state.step == 1);
  CHECK(w.data()[0] == doctest::Approx(1.0));
  CHECK(w.data()[1] == doctest::Approx(-2.0));
}

TEST_CASE("adam: first step moves by about -lr*sign(g)") {
  T w({2}, {0.0, 0.0}, true);
  w.grad() = {0.3, -0.7};
  std::vector<Tensor<double>> params = {w};
  AdamState<double> state(0.1);
  adam_step(params, state);
  CHECK(w.data()[0] == doctest::Approx(-0.1).epsilon(1e-3));
  CHECK(w.data()[1] == doctest::Approx(0.1).epsilon(1e-3));
}

TEST_CASE("adam: missing gradient is a usage error") {
  T w({2}, {0.0, 0.0}, true);
  std::vector<Tensor<double>> params = {w};
  AdamState<double> state(0.1);
  CHECK_THROWS_AS(adam_step(params, state), UsageError);
}

TEST_CASE("adam converges on a scalar quadratic") {
  // minimize (w-3)^2 with lr 0.1
  T w({1}, {0.0}, true);
  std::vector<Tensor<double>> params = {w};
  AdamState<double> state(0.1);
  for (int i = 0; i < 200; ++i) {
    T target({1}, std::vector<double>{3.0});
    T loss = mse(w, target);
    backward(loss);
    adam_step(params, state);
    zero_grads(params);
  }
  CHECK(std::abs(w.data()[0] - 3.0) < 0.05);
  CHECK(state.step == 200);
}

TEST_CASE("finite-difference suite passes for every op") {
  GradCheckReport report = run_gradcheck(1234, 3);
  CHECK(report.rows.size() >= 9);
  for (const auto& row : report.rows) {
    INFO(row.op, " max rel err ", row.max_rel_err);
    CHECK(row.pass);
  }
}

TEST_CASE("sabotaged gradients are detected") {
  GradCheckReport report = run_gradcheck(1234, 1, true);
  CHECK(!report.all_pass());
}
