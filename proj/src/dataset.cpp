#include "kdla/dataset.hpp"

#include <bit>
#include <cmath>

#include "kdla/errors.hpp"

namespace kdla {

std::string system_name(const SystemSpec& spec) {
  struct {
    std::string operator()(const Duffing&) const { return "duffing"; }
    std::string operator()(const Rossler&) const { return "rossler"; }
    std::string operator()(const CylinderRom&) const { return "cylinder"; }
    std::string operator()(const StuartLandau&) const { return "stuart-landau"; }
    std::string operator()(const Burgers&) const { return "burgers"; }
    std::string operator()(const Kse&) const { return "kse"; }
  } v;
  return std::visit(v, spec);
}

std::vector<std::pair<std::string, double>> system_parameters(const SystemSpec& spec) {
  struct {
    using P = std::vector<std::pair<std::string, double>>;
    P operator()(const Duffing& s) const { return {{"lambda", s.lambda}, {"beta", s.beta}, {"alpha", s.alpha}}; }
    P operator()(const Rossler& s) const { return {{"a", s.a}, {"b", s.b}, {"c", s.c}}; }
    P operator()(const CylinderRom& s) const {
      return {{"mu", s.mu}, {"omega", s.omega}, {"A", s.a}, {"lambda", s.lambda}};
    }
    P operator()(const StuartLandau&) const { return {}; }
    P operator()(const Burgers& s) const {
      return {{"nu", s.nu},
              {"grid_points", static_cast<double>(s.grid_points)},
              {"output_points", static_cast<double>(s.output_points)},
              {"nonlinear", s.nonlinear ? 1.0 : 0.0}};
    }
    P operator()(const Kse& s) const { return {{"L", s.length}, {"grid_points", static_cast<double>(s.grid_points)}}; }
  } v;
  return std::visit(v, spec);
}

std::size_t state_dim(const SystemSpec& spec) {
  struct {
    std::size_t operator()(const Duffing&) const { return 2; }
    std::size_t operator()(const Rossler&) const { return 3; }
    std::size_t operator()(const CylinderRom&) const { return 3; }
    std::size_t operator()(const StuartLandau&) const { return 1; }
    std::size_t operator()(const Burgers& s) const { return s.output_points; }
    std::size_t operator()(const Kse& s) const { return s.grid_points; }
  } v;
  return std::visit(v, spec);
}

bool is_pde(const SystemSpec& spec) {
  return std::holds_alternative<Burgers>(spec) || std::holds_alternative<Kse>(spec);
}

void validate(const SystemSpec& spec) {
  if (const auto* b = std::get_if<Burgers>(&spec)) {
    if (!(b->nu > 0)) throw ConfigError("burgers: viscosity must be positive");
    if (!std::has_single_bit(b->grid_points) || b->grid_points < 8)
      throw ConfigError("burgers: grid_points must be a power of two >= 8");
    if (b->output_points == 0 || b->grid_points % b->output_points != 0)
      throw ConfigError("burgers: output_points must divide grid_points");
  }
  if (const auto* k = std::get_if<Kse>(&spec)) {
    if (!(k->length > 0)) throw ConfigError("kse: domain length must be positive");
    if (!std::has_single_bit(k->grid_points) || k->grid_points < 8)
      throw ConfigError("kse: grid_points must be a power of two >= 8");
  }
}

std::vector<double> Trajectory::times() const {
  std::vector<double> t(states.cols());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = t0 + static_cast<double>(i) * dt;
  return t;
}

void SnapshotDataset::validate() const {
  require_shape(x_t.same_shape(x_tdt), "dataset: x_t " + shape_str(x_t) + " vs x_tdt " + shape_str(x_tdt));
  require_shape(x_t.rows() == n, "dataset: state dimension " + std::to_string(x_t.rows()) + " != n " + std::to_string(n));
  if (x_t.cols() == 0) throw ConfigError("dataset: no snapshot pairs");
  if (!(dt > 0)) throw ConfigError("dataset: dt must be positive");
  if (!x_t.all_finite() || !x_tdt.all_finite()) throw NumericalError("dataset: non-finite snapshot values");
}

SnapshotDataset SnapshotDataset::subset(const std::vector<std::size_t>& idx) const {
  for (std::size_t i : idx) require_shape(i < size(), "dataset subset: index out of range");
  SnapshotDataset out{n, dt, x_t.gather_cols(idx), x_tdt.gather_cols(idx), provenance};
  return out;
}

SnapshotDataset pairs_from(const std::vector<Trajectory>& trajectories, Provenance provenance) {
  if (trajectories.empty()) throw ConfigError("dataset: zero trajectories");
  const std::size_t n = trajectories.front().dim();
  const double dt = trajectories.front().dt;
  std::size_t total = 0;
  for (const auto& tr : trajectories) {
    require_shape(tr.dim() == n, "dataset: trajectories differ in state dimension");
    if (std::abs(tr.dt - dt) > 1e-12 * dt) throw ConfigError("dataset: trajectories differ in dt");
    total += tr.steps();
  }
  if (total == 0) throw ConfigError("dataset: trajectories contain no consecutive pairs");
  Matrix xt(n, total), xtdt(n, total);
  std::size_t c = 0;
  for (const auto& tr : trajectories) {
    for (std::size_t j = 0; j + 1 < tr.states.cols(); ++j, ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        xt(i, c) = tr.states(i, j);
        xtdt(i, c) = tr.states(i, j + 1);
      }
    }
  }
  provenance.trajectories = trajectories.size();
  SnapshotDataset ds{n, dt, std::move(xt), std::move(xtdt), std::move(provenance)};
  ds.validate();
  return ds;
}

}  // namespace kdla
