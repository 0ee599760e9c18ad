#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kdla/dataset.hpp"
#include "kdla/system_spec.hpp"

namespace kdla {

/// dx/dt for the ODE systems. Throws ConfigError for PDE specs, DimensionError on length.
std::vector<double> rhs_eval(const SystemSpec& spec, std::span<const double> x);

/// Classical RK4 with step `dt`; the state is stored every `store_stride` steps, `samples`
/// times after x0, so the trajectory has spacing dt * store_stride. A non-finite state ends
/// the run early with a diagnostic.
Trajectory rk4_integrate(const SystemSpec& spec, std::span<const double> x0, double dt, std::size_t samples,
                         std::size_t store_stride = 1);

/// One trajectory per column of x0, integrated in parallel.
std::vector<Trajectory> rk4_ensemble(const SystemSpec& spec, const Matrix& x0, double dt, std::size_t samples,
                                     std::size_t store_stride = 1);

/// R(T; R0) = 1 / sqrt(1 + b e^{-2T}), b = (1 - R0^2) / R0^2. DomainError for R0 <= 0.
double stuart_landau_exact(double r0, double t);

/// Grid x_j = -1 + 2 j / points.
std::vector<double> burgers_grid(std::size_t points);
/// 3 A1 sech^2(3 sin(pi (x - 2 s1))) + 5 A2 sech^2(3 sin(pi (x - 2 s2))) on burgers_grid(points).
std::vector<double> burgers_ic(double a1, double a2, double s1, double s2, std::size_t points);

/// Grid x_j = -L/2 + L j / points.
std::vector<double> kse_grid(double length, std::size_t points);
/// Real field with Fourier modes 1..kKseIcModes, real and imaginary parts standard normal, zero mean.
inline constexpr std::size_t kKseIcModes = 8;
std::vector<double> kse_ic(double length, std::size_t points, std::uint64_t seed);

/// Fourier pseudospectral ETDRK4 (contour-integral coefficients, 2/3 dealiasing).
/// u0 is given at the solver resolution (grid_points); the stored states are at that
/// resolution for KSE and subsampled to output_points for Burgers. `substeps` steps of
/// size dt / substeps per stored sample.
Trajectory etdrk4_integrate(const SystemSpec& spec, std::span<const double> u0, double dt, std::size_t samples,
                            std::size_t substeps = 1);

/// How to build a dataset for one system.
struct Recipe {
  std::string name;               // reproduce-case name, e.g. "kse-tw"
  SystemSpec system;
  std::size_t trajectories = 1;
  double dt = 0.1;                // sampling interval of the stored data
  std::size_t substeps = 1;       // integrator steps per sample
  double t_end = 10.0;            // span of each trajectory, transient included
  double transient = 0.0;         // leading time removed from every trajectory
  std::vector<double> ic_lo;      // ODE initial-condition box
  std::vector<double> ic_hi;
  std::optional<std::vector<double>> x0;  // fixed initial condition (single trajectory)
  std::uint64_t seed = 0;
  std::size_t planned_lifted_dim = 0;     // warn when the pair count does not exceed it
  bool shift_pairs = false;               // periodic PDEs: rotate each pair by a seeded grid shift
  bool paper_scale = false;
};

/// Recipe names: duffing, rossler, cylinder, burgers, kse-tw, kse-beating, kse-chaos, stuart-landau.
std::vector<std::string> recipe_names();
/// Default recipe. Throws ConfigError for an unknown name.
Recipe make_recipe(const std::string& name, bool paper_scale = false, std::uint64_t seed = 0);

/// Initial condition i of a recipe, drawn from CounterRng(seed, i).
std::vector<double> recipe_initial_condition(const Recipe& recipe, std::size_t index);

/// Ground-truth trajectory of `recipe.system` from x0 over `samples` intervals of recipe.dt.
Trajectory integrate(const Recipe& recipe, std::span<const double> x0, std::size_t samples);

struct GeneratedData {
  std::vector<Trajectory> trajectories;  // transient already removed
  SnapshotDataset dataset;
};

/// Integrates every trajectory (in parallel), cuts the transient and pools the pairs.
GeneratedData generate_dataset(const Recipe& recipe);

}  // namespace kdla
