#include <doctest.h>

#include "kdla/errors.hpp"
#include "kdla/node.hpp"
#include "support.hpp"

using namespace kdla;

namespace {

NodeModel linear_field(const Matrix& w, double dt, std::size_t substeps = 1) {
  NodeModel m;
  m.net = mlp_init({w.rows(), w.rows()}, {Activation::linear}, 1);
  m.net.weights[0] = w;
  m.dt = dt;
  m.substeps = substeps;
  return m;
}

// RK4 on x' = W x is the degree-4 Taylor polynomial of exp(hW).
Matrix rk4_matrix(const Matrix& w, double h) {
  Matrix term = Matrix::identity(w.rows()), sum = term;
  for (int k = 1; k <= 4; ++k) {
    term = matmul(w, term);
    term *= h / k;
    sum += term;
  }
  return sum;
}

SnapshotDataset rotation_data(std::size_t m) {
  SnapshotDataset d;
  d.n = 2;
  d.dt = 0.1;
  d.x_t = test::random_matrix(2, m, 3);
  const double c = std::cos(0.1), s = std::sin(0.1);
  d.x_tdt = matmul(Matrix{{c, -s}, {s, c}}, d.x_t);
  return d;
}

}  // namespace

TEST_CASE("node_predict on a linear field is the RK4 Taylor polynomial") {
  const Matrix w{{-0.3, 1.0}, {-1.0, -0.2}};
  const Matrix x = test::random_matrix(2, 4, 1);
  CHECK(test::max_diff(node_predict(linear_field(w, 0.2), x), matmul(rk4_matrix(w, 0.2), x)) < 1e-14);
  const Matrix two = matmul(rk4_matrix(w, 0.1), rk4_matrix(w, 0.1));
  CHECK(test::max_diff(node_predict(linear_field(w, 0.2, 2), x), matmul(two, x)) < 1e-14);
  const auto v = node_predict(linear_field(w, 0.2), std::vector<double>{1.0, 0.0});
  CHECK(v[0] == doctest::Approx(rk4_matrix(w, 0.2)(0, 0)));
}

TEST_CASE("node model validation") {
  NodeModel m = linear_field(Matrix::identity(2), 0.1);
  CHECK_NOTHROW(m.validate());
  CHECK_THROWS_AS(node_predict(m, Matrix(3, 1)), DimensionError);
  m.substeps = 0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m.substeps = 1;
  m.dt = 0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  NodeModel bad;
  bad.net = mlp_init({2, 3}, {Activation::linear}, 1);
  bad.dt = 0.1;
  CHECK_THROWS_AS(bad.validate(), DimensionError);
}

TEST_CASE("node_loss gradient matches central differences through RK4") {
  NodeModel m;
  m.net = mlp_init({2, 6, 2}, {Activation::sigmoid, Activation::linear}, 4);
  m.dt = 0.3;
  m.substeps = 2;
  const SnapshotDataset d = rotation_data(7);
  const NodeLoss l = node_loss(m, d);
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const Matrix fd = test::central_diff(m.net.weights[layer], [&] { return node_loss(m, d, false).value; });
    CHECK(test::rel_err(l.grads.weights[layer], fd) < 1e-6);
  }
  Matrix b(2, 1, m.net.biases[1]);
  const Matrix fd = test::central_diff(b, [&] {
    std::copy(b.flat().begin(), b.flat().end(), m.net.biases[1].begin());
    return node_loss(m, d, false).value;
  });
  CHECK(test::rel_err(Matrix(2, 1, l.grads.biases[1]), fd) < 1e-6);
}

TEST_CASE("node_loss of the exact field is near zero") {
  // x' = [[0,-1],[1,0]] x generates the rotation; RK4 error is O(dt^5)
  const NodeModel m = linear_field(Matrix{{0, -1}, {1, 0}}, 0.1);
  CHECK(node_loss(m, rotation_data(10), false).value < 1e-12);
}

TEST_CASE("train_node reduces the loss and keeps the best epoch") {
  NodeTrainConfig cfg;
  cfg.hidden = {16};
  cfg.activations = {Activation::sigmoid, Activation::linear};
  cfg.epochs = 40;
  cfg.lr_start = 1e-2;
  cfg.lr_end = 1e-3;
  cfg.batch_size = 16;
  const SnapshotDataset d = rotation_data(64);
  const NodeModel m = train_node(d, cfg);
  CHECK(m.meta.loss_curve.size() == 40);
  CHECK(m.meta.loss_curve[m.meta.best_epoch] < 0.5 * m.meta.loss_curve.front());
  const NodeModel again = train_node(d, cfg);
  CHECK(again.net == m.net);
}

TEST_CASE("node_evolve truncates a diverging member and keeps the others") {
  NodeModel m = linear_field(Matrix{{500.0, 0.0}, {0.0, -0.1}}, 1.0);
  Matrix x0{{1.0, 0.0}, {0.0, 1.0}};
  const auto out = node_evolve(m, x0, 40);
  REQUIRE(out.size() == 2);
  CHECK(out[0].truncated());
  CHECK(out[0].states.cols() < 41);
  CHECK(out[0].states.all_finite());
  CHECK_FALSE(out[1].truncated());
  CHECK(out[1].states.cols() == 41);
  CHECK(out[1].states(1, 1) == doctest::Approx(rk4_matrix(Matrix{{-0.1}}, 1.0)(0, 0)));
}
