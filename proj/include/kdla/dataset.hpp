#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kdla/matrix.hpp"
#include "kdla/system_spec.hpp"

namespace kdla {

/// Time-indexed states, one column per sample: column i is the state at t0 + i dt.
struct Trajectory {
  std::string source;                 // system name or model method
  std::optional<SystemSpec> system;
  double dt = 0.0;
  double t0 = 0.0;
  Matrix states;                      // n x (Nt + 1)
  std::uint64_t seed = 0;
  std::string diagnostic;             // non-empty when the rollout was truncated

  std::size_t dim() const noexcept { return states.rows(); }
  std::size_t steps() const noexcept { return states.cols() == 0 ? 0 : states.cols() - 1; }
  bool truncated() const noexcept { return !diagnostic.empty(); }
  std::vector<double> times() const;
};

struct Provenance {
  std::string system;
  std::vector<std::pair<std::string, double>> parameters;
  std::string recipe;
  std::uint64_t seed = 0;
  std::size_t trajectories = 0;
  double transient = 0.0;
  std::vector<std::string> warnings;
};

/// M paired snapshots (x(t), x(t + dt)); columns are time-aligned.
struct SnapshotDataset {
  std::size_t n = 0;
  double dt = 0.0;
  Matrix x_t;    // n x M
  Matrix x_tdt;  // n x M
  Provenance provenance;

  std::size_t size() const noexcept { return x_t.cols(); }
  /// Throws DimensionError / ConfigError when the invariants do not hold.
  void validate() const;
  /// Columns picked by index (same index set for both matrices).
  SnapshotDataset subset(const std::vector<std::size_t>& idx) const;
};

/// Consecutive pairs of every trajectory, pooled in trajectory order.
SnapshotDataset pairs_from(const std::vector<Trajectory>& trajectories, Provenance provenance);

}  // namespace kdla
