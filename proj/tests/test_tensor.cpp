#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "vtlab/tensor.hpp"

using namespace vtlab;
using namespace vtlab::ad;
using vtlab::testing::gradcheck;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, bool requires_grad = true,
                     double scale = 1.0, double offset = 0.0) {
  Tensor t = requires_grad ? Tensor::param(s) : Tensor::zeros(s);
  Rng rng(seed);
  for (long i = 0; i < t.size(); ++i)
    t.data()[i] = offset + scale * (rng.uniform01() * 2.0 - 1.0);
  return t;
}

Eigen::VectorXd trapezoid_weights(long T, double dt) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(T, dt);
  w[0] = w[T - 1] = 0.5 * dt;
  return w;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("rfft of a constant signal is DC only, unnormalized") {
    const long T = 32;
    Tensor x = Tensor::zeros({1, 1, T});
    for (long t = 0; t < T; ++t) x.at(0, 0, t) = 2.5;
    Spectrum s = rfft(x);
    CHECK(s.coeffs.data()[0] == doctest::Approx(2.5 * T).epsilon(1e-14));
    CHECK(std::abs(s.coeffs.data()[1]) < 1e-12);
    for (long k = 1; k < s.modes(); ++k) {
      CHECK(std::abs(s.coeffs.data()[2 * k]) < 1e-10);
      CHECK(std::abs(s.coeffs.data()[2 * k + 1]) < 1e-10);
    }
  }

  TEST_CASE("irfft inverts rfft to 1e-12 for even and odd lengths") {
    for (long T : {16L, 21L, 100L, 1001L}) {
      Tensor x = random_tensor({2, 3, T}, 7 + static_cast<std::uint64_t>(T), false);
      Tensor back = irfft(rfft(x), T);
      double err = 0.0;
      for (long i = 0; i < x.size(); ++i)
        err = std::max(err, std::abs(back.data()[i] - x.data()[i]));
      CHECK(err < 1e-12);
    }
  }

  TEST_CASE("rfft is linear to 1e-12") {
    const long T = 48;
    Tensor x = random_tensor({1, 2, T}, 11, false);
    Tensor y = random_tensor({1, 2, T}, 12, false);
    Tensor lin = add(scale(x, 1.7), scale(y, -0.3));
    Spectrum s1 = rfft(lin);
    Spectrum sx = rfft(x), sy = rfft(y);
    double err = 0.0;
    for (long i = 0; i < s1.coeffs.size(); ++i)
      err = std::max(err, std::abs(s1.coeffs.data()[i] -
                                   (1.7 * sx.coeffs.data()[i] - 0.3 * sy.coeffs.data()[i])));
    CHECK(err < 1e-12);
  }

  TEST_CASE("spectral power gradient matches finite differences") {
    // f(x) = sum |rfft(x)|^2 on a random length-64 input
    Tensor x = random_tensor({1, 1, 64}, 21);
    auto loss = [&]() { return sum_abs2(rfft(x).coeffs); };
    auto r = gradcheck(loss, {x});
    CHECK(r.max_rel_error < 1e-6);
  }

  TEST_CASE("identity pointwise map is the identity") {
    Tensor x = random_tensor({2, 3, 10}, 3, false);
    Tensor W = Tensor::zeros({1, 3, 3});
    for (int c = 0; c < 3; ++c) W.at(0, c, c) = 1.0;
    Tensor out = pointwise_linear(x, W, {});
    for (long i = 0; i < x.size(); ++i) CHECK(out.data()[i] == x.data()[i]);
  }

  TEST_CASE("spectral conv with identity mixing is the identity end to end") {
    const long T = 30;  // even: full spectrum has T/2+1 modes
    Tensor x = random_tensor({1, 2, T}, 5, false);
    const long K = T / 2 + 1;
    Tensor R = Tensor::zeros({K, 2, 2}, false, true);
    for (long k = 0; k < K; ++k)
      for (int c = 0; c < 2; ++c)
        R.data()[((k * 2 + c) * 2 + c) * 2] = 1.0;  // real part of diagonal
    Tensor out = irfft(complex_mode_mul(rfft(x), R), T);
    double err = 0.0;
    for (long i = 0; i < x.size(); ++i)
      err = std::max(err, std::abs(out.data()[i] - x.data()[i]));
    CHECK(err < 1e-12);
  }

  TEST_CASE("single retained DC mode doubles a constant input") {
    const long T = 20;
    Tensor x = Tensor::zeros({1, 2, T});
    for (long c = 0; c < 2; ++c)
      for (long t = 0; t < T; ++t) x.at(0, c, t) = 0.7 + 0.1 * static_cast<double>(c);
    Tensor R = Tensor::zeros({1, 2, 2}, false, true);  // k_max = 1
    R.data()[((0 * 2 + 0) * 2 + 0) * 2] = 2.0;
    R.data()[((0 * 2 + 1) * 2 + 1) * 2] = 2.0;
    Tensor out = irfft(complex_mode_mul(rfft(x), R), T);
    for (long c = 0; c < 2; ++c)
      for (long t = 0; t < T; ++t)
        CHECK(out(0, c, t) == doctest::Approx(2.0 * x(0, c, t)).epsilon(1e-13));
  }

  TEST_CASE("backward basics") {
    SUBCASE("gradient of sum is all ones") {
      Tensor x = random_tensor({2, 2, 5}, 9);
      backward(sum_all(x));
      for (long i = 0; i < x.size(); ++i) CHECK(x.grad_data()[i] == 1.0);
    }
    SUBCASE("gradient of ||Wx - y||^2 matches the closed form") {
      const long cin = 3, cout = 2, T = 4;
      Tensor W = random_tensor({1, cout, cin}, 31);
      Tensor x = random_tensor({1, cin, T}, 32, false);
      Tensor y = random_tensor({1, cout, T}, 33, false);
      Tensor diff = sub(pointwise_linear(x, W, {}), y);
      backward(sum_abs2(diff));

      Eigen::MatrixXd Wm(cout, cin), Xm(cin, T), Ym(cout, T);
      for (long o = 0; o < cout; ++o)
        for (long i = 0; i < cin; ++i) Wm(o, i) = W(0, o, i);
      for (long i = 0; i < cin; ++i)
        for (long t = 0; t < T; ++t) Xm(i, t) = x(0, i, t);
      for (long o = 0; o < cout; ++o)
        for (long t = 0; t < T; ++t) Ym(o, t) = y(0, o, t);
      Eigen::MatrixXd expect = 2.0 * (Wm * Xm - Ym) * Xm.transpose();
      for (long o = 0; o < cout; ++o)
        for (long i = 0; i < cin; ++i)
          CHECK(W.grad_data()[o * cin + i] ==
                doctest::Approx(expect(o, i)).epsilon(1e-12));
    }
    SUBCASE("backward rejects non-scalar roots") {
      Tensor x = random_tensor({1, 1, 4}, 2);
      CHECK_THROWS_AS(backward(scale(x, 2.0)), ValidationError);
    }
    SUBCASE("backward releases the graph") {
      Tensor x = random_tensor({1, 1, 4}, 2);
      Tensor loss = sum_all(mul(x, x));
      backward(loss);
      CHECK(loss.node()->parents.empty());
      CHECK(!loss.node()->backward_fn);
    }
  }

  TEST_CASE("per-op gradcheck") {
    const Shape s{2, 3, 12};
    auto w = trapezoid_weights(12, 0.1);

    SUBCASE("add/sub/mul/scale") {
      Tensor a = random_tensor(s, 41), b = random_tensor(s, 42);
      auto loss = [&]() {
        return weighted_sq_mean(add(mul(a, b), sub(scale(a, 0.3), b)), w);
      };
      CHECK(gradcheck(loss, {a, b}).max_rel_error < 1e-6);
    }
    SUBCASE("activations") {
      Tensor x = random_tensor(s, 43);
      for (auto kind : {Activation::gelu, Activation::tanh}) {
        auto loss = [&]() { return weighted_sq_mean(activation(x, kind), w); };
        CHECK(gradcheck(loss, {x}).max_rel_error < 1e-6);
      }
      // relu checked away from the kink
      Tensor xp = random_tensor(s, 44, true, 0.4, 1.0);
      auto loss = [&]() { return weighted_sq_mean(activation(xp, Activation::relu), w); };
      CHECK(gradcheck(loss, {xp}).max_rel_error < 1e-6);
    }
    SUBCASE("pointwise_linear with bias") {
      Tensor x = random_tensor(s, 45);
      Tensor W = random_tensor({1, 4, 3}, 46);
      Tensor b = random_tensor({1, 4, 1}, 47);
      auto loss = [&]() { return weighted_sq_mean(pointwise_linear(x, W, b), w); };
      CHECK(gradcheck(loss, {x, W, b}).max_rel_error < 1e-6);
    }
    SUBCASE("rfft and irfft") {
      Tensor x = random_tensor({1, 2, 17}, 48);  // odd length
      auto loss = [&]() { return sum_abs2(rfft(x).coeffs); };
      CHECK(gradcheck(loss, {x}).max_rel_error < 1e-6);
      Tensor x2 = random_tensor({1, 2, 16}, 49);  // even length
      auto loss2 = [&]() { return sum_abs2(irfft(rfft(x2), 16)); };
      CHECK(gradcheck(loss2, {x2}).max_rel_error < 1e-6);
    }
    SUBCASE("complex_mode_mul, both arguments") {
      const long T = 16;
      Tensor x = random_tensor({2, 3, T}, 50);
      Tensor R = Tensor::param({5, 2, 3}, true);
      Rng rng(51);
      for (long i = 0; i < R.size(); ++i) R.data()[i] = rng.uniform(-0.5, 0.5);
      auto loss = [&]() {
        return sum_abs2(irfft(complex_mode_mul(rfft(x), R), T));
      };
      CHECK(gradcheck(loss, {x, R}).max_rel_error < 1e-6);
    }
    SUBCASE("stencil derivatives") {
      Tensor x = random_tensor({1, 2, 14}, 52);
      for (int order : {1, 2}) {
        auto loss = [&]() {
          return weighted_sq_mean(stencil_derivative(x, 0.05, order),
                                  trapezoid_weights(14, 0.05));
        };
        CHECK(gradcheck(loss, {x}).max_rel_error < 1e-6);
      }
    }
    SUBCASE("slice and concat") {
      Tensor x = random_tensor({2, 5, 8}, 53);
      auto loss = [&]() {
        auto a = slice_channels(x, 0, 2);
        auto b = slice_channels(x, 2, 3);
        return weighted_sq_mean(concat_channels({b, a}), trapezoid_weights(8, 1.0));
      };
      CHECK(gradcheck(loss, {x}).max_rel_error < 1e-6);
    }
    SUBCASE("affine_channels, scale_rows, add_rows") {
      Tensor x = random_tensor(s, 54);
      Eigen::VectorXd sc(3), sh(3);
      sc << 2.0, -0.5, 1.3;
      sh << 0.1, 0.0, -2.0;
      Eigen::MatrixXd mult(2, 3), offs(2, 3);
      mult << 1.0, 2.0, 3.0, -1.0, 0.5, 0.25;
      offs << 0.2, -0.2, 0.0, 1.0, 2.0, -3.0;
      auto loss = [&]() {
        return weighted_sq_mean(add_rows(scale_rows(affine_channels(x, sc, sh), mult), offs), w);
      };
      CHECK(gradcheck(loss, {x}).max_rel_error < 1e-6);
    }
    SUBCASE("relu_pow away from the kink") {
      Tensor x = random_tensor(s, 55, true, 0.3, 1.0);  // values in [0.7, 1.3]
      for (double p : {1.5, 2.0, 1.0}) {
        auto loss = [&]() { return weighted_sq_mean(relu_pow(x, p), w); };
        CHECK(gradcheck(loss, {x}).max_rel_error < 1e-6);
      }
    }
    SUBCASE("relu_pow subgradient is zero on the closed negative half-line") {
      Tensor x = Tensor::param({1, 1, 3});
      x.data()[0] = -1.0;
      x.data()[1] = 0.0;
      x.data()[2] = 2.0;
      backward(sum_all(relu_pow(x, 1.5)));
      CHECK(x.grad_data()[0] == 0.0);
      CHECK(x.grad_data()[1] == 0.0);
      CHECK(x.grad_data()[2] == doctest::Approx(1.5 * std::sqrt(2.0)));
    }
    SUBCASE("linear_map_per_sample") {
      Tensor x = random_tensor({2, 3, 6}, 56);
      std::vector<Eigen::MatrixXd> A(2);
      A[0] = Eigen::MatrixXd::Random(4, 3);
      A[1] = Eigen::MatrixXd::Random(4, 3);
      auto loss = [&]() {
        return weighted_sq_mean(linear_map_per_sample(x, A), trapezoid_weights(6, 0.5));
      };
      CHECK(gradcheck(loss, {x}).max_rel_error < 1e-6);
    }
    SUBCASE("reductions") {
      Tensor x = random_tensor(s, 57);
      auto loss = [&]() { return mean_all(mul(x, x)); };
      CHECK(gradcheck(loss, {x}).max_rel_error < 1e-6);
    }
  }

  TEST_CASE("forward and backward are bit-deterministic") {
    auto run = [&]() {
      Tensor x = random_tensor({2, 4, 33}, 99);
      Tensor W = random_tensor({1, 4, 4}, 100);
      Tensor R = Tensor::param({6, 4, 4}, true);
      Rng rng(101);
      for (long i = 0; i < R.size(); ++i) R.data()[i] = rng.uniform(-0.2, 0.2);
      Tensor out = irfft(complex_mode_mul(rfft(activation(pointwise_linear(x, W, {}), Activation::gelu)), R), 33);
      Tensor loss = weighted_sq_mean(out, trapezoid_weights(33, 1e-3));
      backward(loss);
      std::vector<double> result;
      result.push_back(loss.item());
      for (long i = 0; i < W.size(); ++i) result.push_back(W.grad_data()[i]);
      for (long i = 0; i < R.size(); ++i) result.push_back(R.grad_data()[i]);
      return result;
    };
    auto a = run();
    auto b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }

  TEST_CASE("no-grad mode builds no graph") {
    Tensor x = random_tensor({1, 1, 8}, 1);
    NoGradGuard ng;
    Tensor y = scale(x, 2.0);
    CHECK(!y.requires_grad());
    CHECK(y.node()->parents.empty());
  }
}
