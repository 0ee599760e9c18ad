#include <doctest.h>

#include "kdla/errors.hpp"
#include "kdla/koopman.hpp"
#include "support.hpp"

using namespace kdla;

namespace {

// Linear data x' = A x with no trainable dictionary.
SnapshotDataset linear_data(const Matrix& a, std::size_t m, std::uint64_t seed) {
  SnapshotDataset d;
  d.n = a.rows();
  d.dt = 0.1;
  d.x_t = test::random_matrix(a.rows(), m, seed);
  d.x_tdt = matmul(a, d.x_t);
  return d;
}

KoopmanModel model_from(const Matrix& k, std::size_t n, const DictionaryArch& arch) {
  KoopmanModel m;
  m.dictionary = make_dictionary(n, arch, 3);
  m.k = k;
  m.dt = 0.1;
  return m;
}

double weighted(const Matrix& a, const Matrix& w) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.flat()[i] * w.flat()[i];
  return s;
}

}  // namespace

TEST_CASE("dictionary layout: state, constant, trainable block") {
  DictionaryArch arch{{5}, 3, {Activation::tanh, Activation::linear}, true};
  const DictionaryNet d = make_dictionary(2, arch, 1);
  CHECK(d.lifted_dim() == 6);
  CHECK(d.trainable_offset() == 3);
  const Matrix x{{0.5, -1}, {2, 0}};
  const Matrix psi = lift(d, x);
  CHECK(psi.rows() == 6);
  CHECK(psi.row_block(0, 2) == x);
  CHECK(psi(2, 0) == 1.0);
  CHECK(psi(2, 1) == 1.0);
  CHECK(test::max_diff(psi.row_block(3, 3), mlp_apply(d.net, x)) == 0.0);
  CHECK(readback(psi, d) == x);
  CHECK_THROWS_AS(lift(d, Matrix(3, 1)), DimensionError);
  CHECK_THROWS_AS(readback(Matrix(5, 1), d), DimensionError);

  const DictionaryNet plain = make_dictionary(2, {}, 1);
  CHECK(plain.lifted_dim() == 2);
  CHECK(lift(plain, x) == x);
}

TEST_CASE("edmd_fit recovers a linear map exactly") {
  const Matrix a = test::random_matrix(4, 4, 10, -0.5, 0.5);
  const SnapshotDataset d = linear_data(a, 20, 11);
  CHECK(test::max_diff(edmd_fit({d.x_t, d.x_tdt, 0.1}, 0.0), a) < 1e-12);
}

TEST_CASE("edmd_fit with Tikhonov matches the ridge closed form") {
  const Matrix x = test::random_matrix(3, 15, 1), y = test::random_matrix(3, 15, 2);
  const double g = 0.7;
  Matrix gram = matmul_nt(x, x);
  for (std::size_t i = 0; i < 3; ++i) gram(i, i) += g;
  const Matrix closed = matmul(matmul_nt(y, x), solve_spd(gram, Matrix::identity(3)));
  CHECK(test::max_diff(edmd_fit({x, y, 0.1}, g), closed) < 1e-12);
  CHECK_THROWS_AS(edmd_fit({x, y, 0.1}, -1.0), ConfigError);
  CHECK_THROWS_AS(edmd_fit({x, Matrix(3, 14), 0.1}, 0.0), DimensionError);
  CHECK_THROWS_AS(edmd_fit({Matrix(3, 0), Matrix(3, 0), 0.1}, 0.0), ConfigError);
}

TEST_CASE("edmd_fit least squares is a strict minimiser") {
  const Matrix x = test::random_matrix(4, 30, 3), y = test::random_matrix(4, 30, 4);
  const Matrix k = edmd_fit({x, y, 0.1}, 0.0);
  const double best = frobenius_norm(y - matmul(k, x));
  for (std::uint64_t s = 0; s < 5; ++s) {
    Matrix e = test::random_matrix(4, 4, 50 + s);
    e *= 1e-3;
    CHECK(frobenius_norm(y - matmul(k + e, x)) > best);
  }
}

TEST_CASE("kdla_loss is zero when the observables close linearly") {
  const Matrix a = test::random_matrix(3, 3, 5, -0.5, 0.5);
  const SnapshotDataset d = linear_data(a, 12, 6);
  const KdlaLossResult r = kdla_loss({d.x_t, d.x_tdt, 0.1});
  CHECK(r.value < 1e-12);
  CHECK(test::max_diff(r.k, a) < 1e-12);
}

TEST_CASE("kdla_loss requires more snapshots than observables") {
  const Matrix x = test::random_matrix(4, 4, 1);
  CHECK_THROWS_AS(kdla_loss({x, x, 0.1}), ConfigError);
  CHECK_THROWS_AS(kdla_loss({test::random_matrix(4, 3, 1), test::random_matrix(4, 3, 2), 0.1}), ConfigError);
  CHECK_NOTHROW(kdla_loss({test::random_matrix(4, 5, 1), test::random_matrix(4, 5, 2), 0.1}));
}

TEST_CASE("kdla_loss gradients match central differences") {
  Matrix x = test::random_matrix(5, 20, 7), y = test::random_matrix(5, 20, 8);
  const KdlaLossResult r = kdla_loss({x, y, 0.1});
  auto value = [&] { return kdla_loss({x, y, 0.1}, kDefaultRcond, false).value; };
  CHECK(test::rel_err(r.d_psi_t, test::central_diff(x, value)) < 1e-6);
  CHECK(test::rel_err(r.d_psi_tdt, test::central_diff(y, value)) < 1e-6);
}

TEST_CASE("two-set loss gradients match central differences") {
  Matrix xp = test::random_matrix(4, 9, 1), yp = test::random_matrix(4, 9, 2);
  Matrix xq = test::random_matrix(4, 15, 3), yq = test::random_matrix(4, 15, 4);
  const KdlaLossResult r = kdla_loss_two_set({xp, yp, 0.1}, {xq, yq, 0.1});
  auto value = [&] { return kdla_loss_two_set({xp, yp, 0.1}, {xq, yq, 0.1}, kDefaultRcond, false).value; };
  CHECK(test::rel_err(r.d_psi_t, test::central_diff(xp, value)) < 1e-6);
  CHECK(test::rel_err(r.d_psi_tdt, test::central_diff(yp, value)) < 1e-6);
  CHECK(test::rel_err(r.d_k_psi_t, test::central_diff(xq, value)) < 1e-6);
  CHECK(test::rel_err(r.d_k_psi_tdt, test::central_diff(yq, value)) < 1e-6);
}

TEST_CASE("kdla_objective gradient with respect to network weights") {
  const SnapshotDataset d = linear_data(Matrix{{0.9, 0.2}, {-0.2, 0.9}}, 40, 9);
  SnapshotDataset nl = d;
  for (double& v : nl.x_tdt.flat()) v = std::sin(v);
  DictionaryNet dict = make_dictionary(2, {{6, 6}, 4, {Activation::elu, Activation::tanh, Activation::linear}, true}, 4);
  const DictionaryGradient g = kdla_objective(dict, nl.x_t, nl.x_tdt);
  for (std::size_t l = 0; l < dict.net.num_layers(); ++l) {
    const Matrix fd =
        test::central_diff(dict.net.weights[l], [&] { return kdla_objective(dict, nl.x_t, nl.x_tdt).loss; });
    CHECK(test::rel_err(g.grads.weights[l], fd) < 1e-5);
  }
}

TEST_CASE("train_kdla lowers the loss and refits K") {
  SnapshotDataset d = linear_data(Matrix{{0.95, 0.1}, {-0.1, 0.95}}, 60, 12);
  for (std::size_t j = 0; j < d.size(); ++j) d.x_tdt(0, j) += 0.1 * d.x_t(1, j) * d.x_t(1, j);
  KdlaConfig cfg;
  cfg.arch = {{8, 8}, 3, {Activation::elu, Activation::elu, Activation::linear}, false};
  cfg.epochs = 60;
  cfg.lr_start = 1e-2;
  cfg.lr_end = 1e-3;
  std::size_t calls = 0;
  cfg.on_epoch = [&](std::size_t, double) { ++calls; };
  const KoopmanModel m = train_kdla(d, cfg);
  CHECK(calls == 60);
  CHECK(m.meta.loss_curve.size() == 60);
  CHECK(m.meta.loss_curve[m.meta.best_epoch] < m.meta.loss_curve.front());
  CHECK(m.k.rows() == 5);
  const ObservablePair lifted{lift(m.dictionary, d.x_t), lift(m.dictionary, d.x_tdt), d.dt};
  CHECK(test::max_diff(m.k, edmd_fit(lifted, 0.0)) < 1e-10);
}

TEST_CASE("train_kdla minibatch two-set path runs and is deterministic") {
  SnapshotDataset d = linear_data(Matrix{{0.9, 0.0}, {0.0, 0.8}}, 80, 13);
  KdlaConfig cfg;
  cfg.arch = {{6}, 2, {Activation::tanh, Activation::linear}, true};
  cfg.epochs = 5;
  cfg.batch_size = 20;
  cfg.k_set_size = 30;
  const KoopmanModel a = train_kdla(d, cfg), b = train_kdla(d, cfg);
  CHECK(a.k == b.k);
  CHECK(a.meta.batch_size == 20);
}

TEST_CASE("train_kdla rejects M <= D with a clear message") {
  const SnapshotDataset d = linear_data(Matrix::identity(2), 6, 1);
  KdlaConfig cfg;
  cfg.arch = {{4}, 5, {Activation::elu, Activation::linear}, false};
  cfg.epochs = 1;
  CHECK_THROWS_WITH_AS(train_kdla(d, cfg), doctest::Contains("M > D"), ConfigError);
}

TEST_CASE("alternating baseline reports one loss per cycle") {
  const SnapshotDataset d = linear_data(Matrix{{0.9, 0.1}, {-0.1, 0.9}}, 50, 2);
  AlternatingConfig cfg;
  cfg.arch = {{5}, 2, {Activation::tanh, Activation::linear}, true};
  cfg.cycles = 4;
  cfg.batch_size = 16;
  const KoopmanModel m = train_kdl_alternating(d, cfg);
  CHECK(m.meta.loss_curve.size() == 4);
  CHECK(m.meta.method == "kdl-alternating");
  CHECK(m.k.rows() == 5);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train_kdl_alternating(d, cfg), ConfigError);
}

TEST_CASE("observable-only rollout of a state-only dictionary is repeated K application") {
  const Matrix k{{0.9, 0.1}, {-0.1, 0.9}};
  const KoopmanModel m = model_from(k, 2, {});
  const Trajectory t = evolve_observable_only(m, std::vector<double>{1.0, 0.0}, 3);
  CHECK(t.states.cols() == 4);
  std::vector<double> x{1.0, 0.0};
  for (std::size_t s = 1; s <= 3; ++s) {
    x = matvec(k, x);
    CHECK(t.states(0, s) == doctest::Approx(x[0]));
    CHECK(t.states(1, s) == doctest::Approx(x[1]));
  }
  CHECK_THROWS_AS(evolve_observable_only(m, std::vector<double>{1.0}, 3), DimensionError);
}

TEST_CASE("state-observable rollout: first step equals oo, m >= steps equals oo") {
  DictionaryArch arch{{4}, 3, {Activation::tanh, Activation::linear}, true};
  const KoopmanModel m = model_from(test::random_matrix(6, 6, 4, -0.4, 0.4), 2, arch);
  const Matrix x0 = test::random_matrix(2, 3, 5);
  const auto oo = evolve_observable_only(m, x0, 12);
  const auto so1 = evolve_state_observable(m, x0, 12, 1);
  const auto so_big = evolve_state_observable(m, x0, 12, 12);
  const auto so_huge = evolve_state_observable(m, x0, 12, 100);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(test::max_diff(oo[e].states.col_block(0, 2), so1[e].states.col_block(0, 2)) < 1e-15);
    CHECK(oo[e].states == so_big[e].states);
    CHECK(oo[e].states == so_huge[e].states);
  }
  // with m = 1 the observables are re-lifted, so later steps generally differ from oo
  CHECK(test::max_diff(oo[0].states, so1[0].states) > 1e-6);
  CHECK_THROWS_AS(evolve_state_observable(m, x0, 12, 0), ConfigError);
}

TEST_CASE("spectrum orders eigenvalues by modulus") {
  const KoopmanSpectrum s = spectrum(Matrix{{0, -2, 0}, {2, 0, 0}, {0, 0, 0.5}}, true);
  REQUIRE(s.eigenvalues.size() == 3);
  CHECK(std::abs(s.eigenvalues[0]) == doctest::Approx(2));
  CHECK(s.eigenvalues[0].imag() == doctest::Approx(2));
  CHECK(s.eigenvalues[1].imag() == doctest::Approx(-2));
  CHECK(s.eigenvalues[2].real() == doctest::Approx(0.5));
  CHECK(s.eigenvectors.size() == 9);
  CHECK_THROWS_AS(spectrum(Matrix(2, 3)), DimensionError);
  CHECK_THROWS_AS(spectrum(Matrix{{std::nan("")}}), NumericalError);
}
