#include "kdla/metrics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "kdla/errors.hpp"

namespace kdla {

double EnsembleReport::at_time(double t) const {
  if (times.empty()) throw ConfigError("tracking report is empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < times.size(); ++i)
    if (std::abs(times[i] - times[0] - t) < std::abs(times[best] - times[0] - t)) best = i;
  return mean_error[best];
}

EnsembleReport tracking_error(const std::vector<Trajectory>& truth, const std::vector<Trajectory>& pred) {
  require_shape(!truth.empty(), "tracking_error: empty ensemble");
  require_shape(truth.size() == pred.size(), "tracking_error: ensembles differ in size (" +
                                                 std::to_string(truth.size()) + " vs " +
                                                 std::to_string(pred.size()) + ")");
  const std::size_t n = truth.front().dim();
  const double dt = truth.front().dt;
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (std::size_t e = 0; e < truth.size(); ++e) {
    require_shape(truth[e].dim() == n && pred[e].dim() == n, "tracking_error: state dimensions differ");
    require_shape(pred[e].states.cols() <= truth[e].states.cols(),
                  "tracking_error: prediction longer than truth for member " + std::to_string(e));
    if (std::abs(truth[e].dt - dt) > 1e-12 * dt || std::abs(pred[e].dt - dt) > 1e-12 * dt)
      throw ConfigError("tracking_error: trajectories differ in dt");
    len = std::min(len, pred[e].states.cols());
  }
  require_shape(len > 0, "tracking_error: a prediction has no samples");

  EnsembleReport r;
  r.ensemble_size = truth.size();
  r.times.resize(len);
  r.mean_error_raw.assign(len, 0.0);
  std::vector<std::vector<double>> member(truth.size(), std::vector<double>(len));
  std::vector<double> norm_sum(truth.size(), 0.0);
#pragma omp parallel for
  for (std::size_t e = 0; e < truth.size(); ++e) {
    for (std::size_t j = 0; j < len; ++j) {
      double d = 0.0, s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double x = truth[e].states(i, j);
        const double diff = x - pred[e].states(i, j);
        d += diff * diff;
        s += x * x;
      }
      member[e][j] = std::sqrt(d);
      norm_sum[e] += std::sqrt(s);
    }
  }
  double total_norm = 0.0;
  for (std::size_t e = 0; e < truth.size(); ++e) {
    total_norm += norm_sum[e];
    for (std::size_t j = 0; j < len; ++j) r.mean_error_raw[j] += member[e][j];
  }
  const double count = static_cast<double>(truth.size());
  for (double& v : r.mean_error_raw) v /= count;
  const double mean_norm = total_norm / (count * static_cast<double>(len));
  r.normalizer = mean_norm > 0 ? mean_norm : 1.0;
  r.mean_error.resize(len);
  for (std::size_t j = 0; j < len; ++j) {
    r.times[j] = truth.front().t0 + static_cast<double>(j) * dt;
    r.mean_error[j] = r.mean_error_raw[j] / r.normalizer;
  }
  return r;
}

std::vector<double> energy(const Trajectory& traj) {
  std::vector<double> e(traj.states.cols(), 0.0);
  for (std::size_t i = 0; i < traj.states.rows(); ++i) {
    const auto row = traj.states.row(i);
    for (std::size_t j = 0; j < e.size(); ++j) e[j] += row[j] * row[j];
  }
  return e;
}

std::size_t SpectrumReport::dominant_bin() const {
  if (power.size() < 2) throw ConfigError("spectrum has no non-DC bins");
  return static_cast<std::size_t>(std::max_element(power.begin() + 1, power.end()) - power.begin());
}

namespace {

// Adds the one-sided power of `x` (mean removed) to `acc`.
void accumulate_power(std::vector<double> x, std::vector<double>& acc) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  for (double& v : x) v -= mean;
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan;
#pragma omp critical(kdla_fftw_plan)
  plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), x.data(), reinterpret_cast<fftw_complex*>(out.data()),
                              FFTW_ESTIMATE);
  fftw_execute(plan);
#pragma omp critical(kdla_fftw_plan)
  fftw_destroy_plan(plan);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const bool single = k == 0 || (n % 2 == 0 && k == n / 2);
    acc[k] += std::norm(out[k]) / static_cast<double>(n) * (single ? 1.0 : 2.0);
  }
}

SpectrumReport empty_report(std::size_t n, double dt) {
  if (n < 4) throw ConfigError("power_spectrum: need at least 4 samples, got " + std::to_string(n));
  if (!(dt > 0)) throw ConfigError("power_spectrum: dt must be positive");
  SpectrumReport r;
  const std::size_t bins = n / 2 + 1;
  r.power.assign(bins, 0.0);
  r.wavenumbers.resize(bins);
  r.frequencies.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    r.wavenumbers[k] = static_cast<double>(k);
    r.frequencies[k] = static_cast<double>(k) / (static_cast<double>(n) * dt);
  }
  return r;
}

}  // namespace

SpectrumReport power_spectrum(const Trajectory& traj, SpectrumMode mode, std::size_t probe) {
  SpectrumReport r = empty_report(traj.states.cols(), traj.dt);
  r.source = traj.source;
  const auto& s = traj.states;
  if (mode == SpectrumMode::single_probe) {
    require_shape(probe < s.rows(), "power_spectrum: probe index out of range");
    accumulate_power({s.row(probe).begin(), s.row(probe).end()}, r.power);
    return r;
  }
  for (std::size_t i = 0; i < s.rows(); ++i) accumulate_power({s.row(i).begin(), s.row(i).end()}, r.power);
  for (double& p : r.power) p /= static_cast<double>(s.rows());
  return r;
}

SpectrumReport power_spectrum(std::span<const double> signal, double dt) {
  SpectrumReport r = empty_report(signal.size(), dt);
  accumulate_power({signal.begin(), signal.end()}, r.power);
  return r;
}

int basin_label(double x1) {
  if (!std::isfinite(x1)) return 0;
  if (x1 > 0.5) return 1;
  if (x1 < -0.5) return -1;
  return 0;
}

BasinReport basin_map(const EnsembleRollout& rollout, const Matrix& ics, double dt, double horizon) {
  require_shape(ics.rows() == 2, "basin_map: initial conditions must be 2 x K (Duffing state)");
  if (!(dt > 0) || !(horizon > 0)) throw ConfigError("basin_map: dt and horizon must be positive");
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  const auto trajs = rollout(ics, steps);
  require_shape(trajs.size() == ics.cols(), "basin_map: rollout returned the wrong number of trajectories");
  BasinReport r;
  r.initial_conditions = ics;
  r.horizon = horizon;
  r.final_x1.resize(ics.cols());
  r.labels.resize(ics.cols());
  r.diverged.resize(ics.cols());
  for (std::size_t j = 0; j < ics.cols(); ++j) {
    const auto& t = trajs[j];
    const bool ok = t.states.cols() == steps + 1 && !t.truncated() && std::isfinite(t.states(0, steps));
    r.diverged[j] = !ok;
    r.final_x1[j] = ok ? t.states(0, steps) : std::numeric_limits<double>::quiet_NaN();
    r.labels[j] = basin_label(r.final_x1[j]);
  }
  return r;
}

double basin_agreement(const BasinReport& a, const BasinReport& b) {
  require_shape(a.labels.size() == b.labels.size() && !a.labels.empty(), "basin_agreement: maps differ in size");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.labels.size(); ++i)
    if (a.labels[i] == b.labels[i] && !a.diverged[i] && !b.diverged[i]) ++same;
  return static_cast<double>(same) / static_cast<double>(a.labels.size());
}

EigenReport spectrum_report(const Matrix& k, double tol) {
  EigenReport r;
  r.tol = tol;
  r.eigenvalues = spectrum(k).eigenvalues;
  for (const auto& l : r.eigenvalues) {
    const double m = std::abs(l);
    r.modulus.push_back(m);
    r.unit_circle_distance.push_back(std::abs(m - 1.0));
    r.spectral_radius = std::max(r.spectral_radius, m);
    if (m > 1.0 + tol) ++r.outside_count;
  }
  return r;
}

EigenReport spectrum_report(const KoopmanModel& model, double tol) { return spectrum_report(model.k, tol); }

}  // namespace kdla
