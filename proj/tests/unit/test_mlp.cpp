#include <doctest.h>

#include "kdla/adam.hpp"
#include "kdla/errors.hpp"
#include "kdla/mlp.hpp"
#include "support.hpp"

using namespace kdla;

namespace {

double weighted_output(const MlpParams& p, const Matrix& x, const Matrix& w) {
  const Matrix y = mlp_apply(p, x);
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.flat()[i] * w.flat()[i];
  return s;
}

}  // namespace

TEST_CASE("activation names round trip") {
  for (Activation a : {Activation::elu, Activation::tanh, Activation::sigmoid, Activation::linear})
    CHECK(parse_activation(to_string(a)) == a);
  CHECK(parse_activation("lin") == Activation::linear);
  CHECK_THROWS_AS(parse_activation("relu"), ConfigError);
}

TEST_CASE("single layer forward matches hand computation") {
  MlpParams p = mlp_init({2, 2}, {Activation::elu}, 1);
  p.weights[0] = Matrix{{1, -1}, {0.5, 2}};
  p.biases[0] = {0.0, -1.0};
  const Matrix y = mlp_apply(p, Matrix{{1}, {2}});
  CHECK(y(0, 0) == doctest::Approx(std::expm1(-1.0)));
  CHECK(y(1, 0) == doctest::Approx(3.5));

  p.activations[0] = Activation::sigmoid;
  CHECK(mlp_apply(p, Matrix{{1}, {2}})(0, 0) == doctest::Approx(1 / (1 + std::exp(1.0))));
  p.activations[0] = Activation::tanh;
  CHECK(mlp_apply(p, Matrix{{1}, {2}})(1, 0) == doctest::Approx(std::tanh(3.5)));
}

TEST_CASE("glorot init bounds, zero biases and determinism") {
  const MlpParams p = mlp_init({3, 50, 4}, {Activation::tanh, Activation::linear}, 42);
  CHECK(p.parameter_count() == 3 * 50 + 50 + 50 * 4 + 4);
  const double bound = std::sqrt(6.0 / 53.0);
  CHECK(max_abs(p.weights[0]) <= bound);
  for (double b : p.biases[0]) CHECK(b == 0.0);
  CHECK(p == mlp_init({3, 50, 4}, {Activation::tanh, Activation::linear}, 42));
  CHECK_FALSE(p == mlp_init({3, 50, 4}, {Activation::tanh, Activation::linear}, 43));
  CHECK_THROWS_AS(mlp_init({3, 50, 4}, {Activation::tanh}, 1), ConfigError);
}

TEST_CASE("backward pass matches central differences for every activation") {
  for (Activation act : {Activation::elu, Activation::tanh, Activation::sigmoid, Activation::linear}) {
    MlpParams p = mlp_init({3, 7, 6, 2}, {act, act, Activation::linear}, 5);
    for (auto& b : p.biases)
      for (double& v : b) v = 0.1;
    Matrix x = test::random_matrix(3, 9, 6, -2, 2);
    const Matrix w = test::random_matrix(2, 9, 7);
    const MlpForward f = mlp_forward(p, x);
    const MlpBackward b = mlp_backward(p, f.cache, w);

    CHECK(test::rel_err(b.dx, test::central_diff(x, [&] { return weighted_output(p, x, w); })) < 1e-7);
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      CHECK(test::rel_err(b.grads.weights[l],
                          test::central_diff(p.weights[l], [&] { return weighted_output(p, x, w); })) < 1e-7);
      Matrix bias(p.biases[l].size(), 1, p.biases[l]);
      const Matrix fd = test::central_diff(bias, [&] {
        std::copy(bias.flat().begin(), bias.flat().end(), p.biases[l].begin());
        return weighted_output(p, x, w);
      });
      std::copy(bias.flat().begin(), bias.flat().end(), p.biases[l].begin());
      CHECK(test::rel_err(Matrix(p.biases[l].size(), 1, b.grads.biases[l]), fd) < 1e-7);
    }
  }
}

TEST_CASE("forward and backward validate shapes") {
  const MlpParams p = mlp_init({2, 4, 1}, {Activation::elu, Activation::linear}, 1);
  CHECK_THROWS_AS(mlp_apply(p, Matrix(3, 5)), DimensionError);
  const MlpForward f = mlp_forward(p, Matrix(2, 5));
  CHECK_THROWS_AS(mlp_backward(p, f.cache, Matrix(1, 4)), DimensionError);
  MlpParams broken = p;
  broken.biases[1].push_back(0.0);
  CHECK_THROWS_AS(broken.validate(), DimensionError);
  CHECK(MlpParams{}.output_dim() == 0);
}

TEST_CASE("accumulate adds tensor by tensor") {
  MlpParams a = mlp_init({2, 3}, {Activation::linear}, 1), b = a;
  accumulate(a, b);
  CHECK(a.weights[0](1, 1) == doctest::Approx(2 * b.weights[0](1, 1)));
  CHECK_THROWS_AS(accumulate(a, mlp_init({2, 4}, {Activation::linear}, 1)), DimensionError);
}

TEST_CASE("adam first step moves every parameter by lr against the gradient sign") {
  MlpParams p = mlp_init({2, 3}, {Activation::linear}, 3);
  const MlpParams before = p;
  MlpParams g = p.zeros_like();
  g.weights[0](0, 0) = 5.0;
  g.weights[0](1, 2) = -0.01;
  AdamState s = AdamState::for_params(p);
  adam_step(p, g, s, 1e-3);
  CHECK(s.step == 1);
  CHECK(p.weights[0](0, 0) == doctest::Approx(before.weights[0](0, 0) - 1e-3).epsilon(1e-6));
  CHECK(p.weights[0](1, 2) == doctest::Approx(before.weights[0](1, 2) + 1e-3).epsilon(1e-4));
  CHECK(p.weights[0](0, 1) == before.weights[0](0, 1));
}

TEST_CASE("adam matches a scalar reference over several steps") {
  MlpParams p = mlp_init({1, 1}, {Activation::linear}, 3);
  p.weights[0](0, 0) = 1.0;
  AdamState s = AdamState::for_params(p);
  double x = 1.0, m = 0, v = 0;
  for (int t = 1; t <= 5; ++t) {
    MlpParams g = p.zeros_like();
    g.weights[0](0, 0) = 2 * x;  // d/dx x^2
    adam_step(p, g, s, 0.1);
    const double gr = 2 * x;
    m = 0.9 * m + 0.1 * gr;
    v = 0.999 * v + 0.001 * gr * gr;
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    CHECK(p.weights[0](0, 0) == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("adam rejects non-finite gradients without touching parameters") {
  MlpParams p = mlp_init({2, 2}, {Activation::linear}, 3);
  const MlpParams before = p;
  MlpParams g = p.zeros_like();
  g.biases[0][1] = std::nan("");
  AdamState s = AdamState::for_params(p);
  CHECK_THROWS_AS(adam_step(p, g, s, 1e-3), NumericalError);
  CHECK(p == before);
  CHECK(s.step == 0);
  CHECK_THROWS_AS(adam_step(p, p.zeros_like(), s, 0.0), ConfigError);
}

TEST_CASE("learning rate drops halfway") {
  CHECK(lr_drop_schedule(0, 10, 1e-3, 1e-4) == 1e-3);
  CHECK(lr_drop_schedule(4, 10, 1e-3, 1e-4) == 1e-3);
  CHECK(lr_drop_schedule(5, 10, 1e-3, 1e-4) == 1e-4);
  CHECK(lr_drop_schedule(0, 1, 1e-3, 1e-4) == 1e-3);
}
