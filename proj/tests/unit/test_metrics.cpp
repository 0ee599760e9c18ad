#include <doctest.h>

#include <numbers>

#include "kdla/errors.hpp"
#include "kdla/metrics.hpp"
#include "support.hpp"

using namespace kdla;

namespace {

Trajectory make_traj(const Matrix& states, double dt) {
  Trajectory t;
  t.states = states;
  t.dt = dt;
  return t;
}

Trajectory sinusoid(std::size_t n, double dt, double freq, double amp = 1.0) {
  Matrix s(1, n);
  for (std::size_t j = 0; j < n; ++j) s(0, j) = 3.0 + amp * std::sin(2 * std::numbers::pi * freq * dt * j);
  return make_traj(s, dt);
}

}  // namespace

TEST_CASE("tracking error of identical ensembles is zero") {
  const Trajectory t = make_traj(test::random_matrix(3, 11, 1), 0.1);
  const EnsembleReport r = tracking_error({t, t}, {t, t});
  CHECK(r.ensemble_size == 2);
  CHECK(r.times.size() == 11);
  for (double e : r.mean_error) CHECK(e == 0.0);
  CHECK(r.normalizer > 0);
}

TEST_CASE("tracking error normalisation and lookup by time") {
  Matrix a{{3, 3, 3}, {4, 4, 4}}, b{{3, 3, 0}, {4, 4, 0}};
  const EnsembleReport r = tracking_error({make_traj(a, 0.5)}, {make_traj(b, 0.5)});
  CHECK(r.normalizer == doctest::Approx(5.0));
  CHECK(r.mean_error_raw[2] == doctest::Approx(5.0));
  CHECK(r.mean_error[2] == doctest::Approx(1.0));
  CHECK(r.at_time(1.0) == doctest::Approx(1.0));
  CHECK(r.at_time(0.2) == 0.0);
}

TEST_CASE("tracking error stops at the shortest truncated prediction") {
  const Trajectory t = make_traj(test::random_matrix(2, 10, 1), 0.1);
  Trajectory p = t;
  p.states = t.states.col_block(0, 6);
  p.diagnostic = "diverged";
  CHECK(tracking_error({t}, {p}).times.size() == 6);
}

TEST_CASE("tracking error input validation") {
  const Trajectory t = make_traj(Matrix(2, 5), 0.1);
  CHECK_THROWS_AS(tracking_error({t}, {t, t}), DimensionError);
  CHECK_THROWS_AS(tracking_error({t}, {make_traj(Matrix(3, 5), 0.1)}), DimensionError);
  CHECK_THROWS_AS(tracking_error({t}, {make_traj(Matrix(2, 5), 0.2)}), ConfigError);
  CHECK_THROWS_AS(tracking_error({t}, {make_traj(Matrix(2, 6), 0.1)}), DimensionError);
  CHECK_THROWS_AS(EnsembleReport{}.at_time(1.0), ConfigError);
}

TEST_CASE("energy is the squared norm per sample") {
  const auto e = energy(make_traj(Matrix{{3, 0}, {4, 1}}, 1.0));
  CHECK(e == std::vector<double>{25, 1});
}

TEST_CASE("power spectrum peaks at the sinusoid's bin and obeys Parseval") {
  const std::size_t n = 200;
  const double dt = 0.1;
  const Trajectory t = sinusoid(n, dt, 16.0 / (n * dt), 2.0);
  const SpectrumReport s = power_spectrum(t);
  CHECK(s.power.size() == n / 2 + 1);
  CHECK(s.dominant_bin() == 16);
  CHECK(s.frequencies[16] == doctest::Approx(16.0 / (n * dt)));
  double total = 0;
  for (double p : s.power) total += p;
  CHECK(total == doctest::Approx(n * 2.0));  // N * variance, variance of 2 sin = 2
  CHECK(s.power[0] < 1e-20);
}

TEST_CASE("power spectrum component average versus single probe") {
  Matrix m(2, 64);
  for (std::size_t j = 0; j < 64; ++j) {
    m(0, j) = std::cos(2 * std::numbers::pi * 5 * j / 64.0);
    m(1, j) = 3 * std::cos(2 * std::numbers::pi * 9 * j / 64.0);
  }
  const Trajectory t = make_traj(m, 1.0);
  CHECK(power_spectrum(t).dominant_bin() == 9);
  CHECK(power_spectrum(t, SpectrumMode::single_probe, 0).dominant_bin() == 5);
  CHECK_THROWS_AS(power_spectrum(t, SpectrumMode::single_probe, 2), DimensionError);
  CHECK_THROWS_AS(power_spectrum(std::vector<double>{1, 2, 3}, 0.1), ConfigError);
  CHECK_THROWS_AS(power_spectrum(std::vector<double>{1, 2, 3, 4}, 0.0), ConfigError);
}

TEST_CASE("basin labels and agreement") {
  CHECK(basin_label(1.0) == 1);
  CHECK(basin_label(-0.9) == -1);
  CHECK(basin_label(0.1) == 0);
  CHECK(basin_label(std::nan("")) == 0);

  const Matrix ics{{-1.5, 1.5, 0.0}, {0.0, 0.0, 0.0}};
  // constant rollout: x stays at its initial condition, except the last member diverges
  auto hold = [](const Matrix& x0, std::size_t steps) {
    std::vector<Trajectory> out;
    for (std::size_t j = 0; j < x0.cols(); ++j) {
      Trajectory t;
      t.dt = 0.1;
      t.states = Matrix(2, steps + 1);
      for (std::size_t s = 0; s <= steps; ++s) t.states(0, s) = x0(0, j);
      out.push_back(t);
    }
    out.back().states = out.back().states.col_block(0, 3);
    out.back().diagnostic = "blew up";
    return out;
  };
  const BasinReport a = basin_map(hold, ics, 0.1, 2.0);
  CHECK(a.labels == std::vector<int>{-1, 1, 0});
  CHECK(a.diverged == std::vector<bool>{false, false, true});
  CHECK(std::isnan(a.final_x1[2]));
  CHECK(basin_agreement(a, a) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(basin_map(hold, Matrix(3, 2), 0.1), DimensionError);
  CHECK_THROWS_AS(basin_map(hold, ics, 0.0), ConfigError);
}

TEST_CASE("eigen report of a known matrix") {
  const EigenReport r = spectrum_report(Matrix{{1.1, 0}, {0, 0.5}});
  CHECK(r.spectral_radius == doctest::Approx(1.1));
  CHECK(r.outside_count == 1);
  CHECK(r.unit_circle_distance[0] == doctest::Approx(0.1));
  CHECK(spectrum_report(Matrix{{1.04}}).outside_count == 0);
}
