#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "kdla/dataset.hpp"
#include "kdla/koopman.hpp"

namespace kdla {

struct EnsembleReport {
  std::vector<double> times;
  std::vector<double> mean_error;             // <||x - x~||> / normalizer
  std::vector<double> mean_error_raw;         // <||x - x~||>
  std::size_t ensemble_size = 0;
  double normalizer = 1.0;                    // time-and-ensemble mean of ||x||; 1 if that is zero
  std::string normalization = "mean-true-state-norm";

  /// Error at the sample nearest to time t (relative to the first sample).
  double at_time(double t) const;
};

/// Per-time ensemble mean of ||x - x~||_2. Predictions may be shorter than the truth
/// (truncated rollouts); the report then stops at the shortest member.
EnsembleReport tracking_error(const std::vector<Trajectory>& truth, const std::vector<Trajectory>& pred);

/// ||x(t)||^2 per sample.
std::vector<double> energy(const Trajectory& traj);

struct SpectrumReport {
  std::vector<double> wavenumbers;  // DFT bin index k = 0 .. N/2
  std::vector<double> frequencies;  // k / (N dt)
  std::vector<double> power;
  std::string source;

  /// Index of the largest bin, ignoring k = 0.
  std::size_t dominant_bin() const;
};

enum class SpectrumMode { component_average, single_probe };

/// One-sided |DFT|^2 of the mean-removed signal, rectangular window. power_k = |X_k|^2 / N
/// with non-DC, non-Nyquist bins doubled, so sum(power) = N * variance. Vector signals are
/// averaged over components (or use row `probe` only). Needs at least 4 samples.
SpectrumReport power_spectrum(const Trajectory& traj, SpectrumMode mode = SpectrumMode::component_average,
                              std::size_t probe = 0);
SpectrumReport power_spectrum(std::span<const double> signal, double dt);

struct BasinReport {
  Matrix initial_conditions;     // 2 x K
  std::vector<double> final_x1;  // x1 at the horizon (NaN for diverged rollouts)
  std::vector<int> labels;       // nearest of {-1, 0, 1}; 0 also for diverged rollouts
  std::vector<bool> diverged;
  double horizon = 10.0;
};

/// Rolls out every column of `ics` for `steps` intervals and labels x1 at the end.
/// `rollout` maps a 2 x K block of initial conditions to one trajectory per column.
using EnsembleRollout = std::function<std::vector<Trajectory>(const Matrix& ics, std::size_t steps)>;
BasinReport basin_map(const EnsembleRollout& rollout, const Matrix& ics, double dt, double horizon = 10.0);
int basin_label(double x1);
/// Fraction of ICs where both maps agree.
double basin_agreement(const BasinReport& a, const BasinReport& b);

struct EigenReport {
  std::vector<std::complex<double>> eigenvalues;
  std::vector<double> modulus;
  std::vector<double> unit_circle_distance;  // | |lambda| - 1 |
  double spectral_radius = 0.0;
  std::size_t outside_count = 0;             // |lambda| > 1 + tol
  double tol = 0.0;
};

EigenReport spectrum_report(const KoopmanModel& model, double tol = 0.05);
EigenReport spectrum_report(const Matrix& k, double tol = 0.05);

}  // namespace kdla
