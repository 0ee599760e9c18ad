#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace kdla {

/// x1' = x2, x2' = -lambda x2 - x1 (beta + alpha x1^2)
struct Duffing {
  double lambda = 0.5;
  double beta = -1.0;
  double alpha = 1.0;
};

/// x1' = -x2 - x3, x2' = x1 + a x2, x3' = b + x3 (x2 - c)
struct Rossler {
  double a = 0.1;
  double b = 0.1;
  double c = 9.0;
};

/// Mean-field model of the cylinder wake:
/// x1' = mu x1 - omega x2 + A x1 x3, x2' = omega x1 + mu x2 + A x2 x3, x3' = -lambda (x3 - x1^2 - x2^2)
struct CylinderRom {
  double mu = 0.1;
  double omega = 1.0;
  double a = -0.1;
  double lambda = 10.0;
};

/// Rescaled normal form R' = R - R^3.
struct StuartLandau {};

/// u_t = nu u_xx - u u_x on the 2-periodic domain [-1, 1).
/// `nonlinear = false` drops the advection term (heat equation test mode).
struct Burgers {
  double nu = 0.01;
  std::size_t grid_points = 256;  // solver resolution; stored states are subsampled to `output_points`
  std::size_t output_points = 64;
  bool nonlinear = true;
};

/// u_t = -u_xx - u_xxxx - (1/2) u u_x on [-L/2, L/2), periodic.
struct Kse {
  double length = 22.0;
  std::size_t grid_points = 64;
};

using SystemSpec = std::variant<Duffing, Rossler, CylinderRom, StuartLandau, Burgers, Kse>;

/// Canonical lowercase name: duffing, rossler, cylinder, stuart-landau, burgers, kse.
std::string system_name(const SystemSpec& spec);
/// Named parameters, in declaration order.
std::vector<std::pair<std::string, double>> system_parameters(const SystemSpec& spec);
/// Dimension of the stored state vector.
std::size_t state_dim(const SystemSpec& spec);
bool is_pde(const SystemSpec& spec);
/// Validates the invariants (grid a power of two, nu > 0, L > 0). Throws ConfigError.
void validate(const SystemSpec& spec);

}  // namespace kdla
