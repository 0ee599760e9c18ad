#include "kdla/systems.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>

#include "kdla/errors.hpp"
#include "kdla/rng.hpp"

namespace kdla {
namespace {

using cplx = std::complex<double>;

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};

void rhs_into(const SystemSpec& spec, const double* x, double* dx) {
  std::visit(overloaded{
                 [&](const Duffing& s) {
                   dx[0] = x[1];
                   dx[1] = -s.lambda * x[1] - x[0] * (s.beta + s.alpha * x[0] * x[0]);
                 },
                 [&](const Rossler& s) {
                   dx[0] = -x[1] - x[2];
                   dx[1] = x[0] + s.a * x[1];
                   dx[2] = s.b + x[2] * (x[0] - s.c);
                 },
                 [&](const CylinderRom& s) {
                   dx[0] = s.mu * x[0] - s.omega * x[1] + s.a * x[0] * x[2];
                   dx[1] = s.omega * x[0] + s.mu * x[1] + s.a * x[1] * x[2];
                   dx[2] = -s.lambda * (x[2] - x[0] * x[0] - x[1] * x[1]);
                 },
                 [&](const StuartLandau&) { dx[0] = x[0] - x[0] * x[0] * x[0]; },
                 [&](const auto&) { throw ConfigError("rhs_eval: " + system_name(spec) + " is a PDE"); },
             },
             spec);
}

bool finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

Trajectory make_trajectory(const SystemSpec& spec, double dt, std::size_t n, std::size_t samples) {
  Trajectory t;
  t.source = system_name(spec);
  t.system = spec;
  t.dt = dt;
  t.states = Matrix(n, samples + 1);
  return t;
}

// FFTW planning is not thread-safe; execution on distinct plans is.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n), real_(n), spec_(n / 2 + 1) {
#pragma omp critical(kdla_fftw_plan)
    {
      fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_.data(), reinterpret_cast<fftw_complex*>(spec_.data()),
                                  FFTW_ESTIMATE);
      inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(spec_.data()), real_.data(),
                                  FFTW_ESTIMATE);
    }
  }
  ~RealFft() {
#pragma omp critical(kdla_fftw_plan)
    {
      fftw_destroy_plan(fwd_);
      fftw_destroy_plan(inv_);
    }
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void forward(const std::vector<double>& u, std::vector<cplx>& out) {
    real_ = u;
    fftw_execute(fwd_);
    out = spec_;
  }
  // Unnormalized: returns n * u.
  void inverse(const std::vector<cplx>& v, std::vector<double>& out) {
    spec_ = v;
    fftw_execute(inv_);
    out = real_;
  }

 private:
  std::size_t n_;
  std::vector<double> real_;
  std::vector<cplx> spec_;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

}  // namespace

std::vector<double> rhs_eval(const SystemSpec& spec, std::span<const double> x) {
  require_shape(x.size() == state_dim(spec), "rhs_eval: state length " + std::to_string(x.size()) + " for " +
                                                 system_name(spec) + " (expects " +
                                                 std::to_string(state_dim(spec)) + ")");
  std::vector<double> dx(x.size());
  rhs_into(spec, x.data(), dx.data());
  return dx;
}

Trajectory rk4_integrate(const SystemSpec& spec, std::span<const double> x0, double dt, std::size_t samples,
                         std::size_t store_stride) {
  if (is_pde(spec)) throw ConfigError("rk4_integrate: " + system_name(spec) + " is a PDE; use etdrk4_integrate");
  validate(spec);
  if (!(dt > 0)) throw ConfigError("rk4_integrate: dt must be positive");
  if (store_stride < 1) throw ConfigError("rk4_integrate: store_stride must be >= 1");
  const std::size_t n = state_dim(spec);
  require_shape(x0.size() == n, "rk4_integrate: initial condition has length " + std::to_string(x0.size()));

  Trajectory traj = make_trajectory(spec, dt * static_cast<double>(store_stride), n, samples);
  std::vector<double> x(x0.begin(), x0.end()), k1(n), k2(n), k3(n), k4(n), tmp(n);
  traj.states.set_col(0, x);
  for (std::size_t s = 1; s <= samples; ++s) {
    for (std::size_t r = 0; r < store_stride; ++r) {
      rhs_into(spec, x.data(), k1.data());
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
      rhs_into(spec, tmp.data(), k2.data());
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
      rhs_into(spec, tmp.data(), k3.data());
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
      rhs_into(spec, tmp.data(), k4.data());
      for (std::size_t i = 0; i < n; ++i) x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if (!finite(x)) {
      traj.states = traj.states.col_block(0, s);
      traj.diagnostic = "rk4_integrate: non-finite state at sample " + std::to_string(s);
      return traj;
    }
    traj.states.set_col(s, x);
  }
  return traj;
}

std::vector<Trajectory> rk4_ensemble(const SystemSpec& spec, const Matrix& x0, double dt, std::size_t samples,
                                     std::size_t store_stride) {
  std::vector<Trajectory> out(x0.cols());
  std::vector<std::string> errors(x0.cols());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t j = 0; j < x0.cols(); ++j) {
    try {
      out[j] = rk4_integrate(spec, x0.col(j), dt, samples, store_stride);
    } catch (const std::exception& e) {
      errors[j] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw ConfigError(e);
  return out;
}

double stuart_landau_exact(double r0, double t) {
  if (!(r0 > 0)) throw DomainError("stuart_landau_exact: R0 must be positive");
  const double b = (1.0 - r0 * r0) / (r0 * r0);
  return 1.0 / std::sqrt(1.0 + b * std::exp(-2.0 * t));
}

std::vector<double> burgers_grid(std::size_t points) {
  std::vector<double> x(points);
  for (std::size_t j = 0; j < points; ++j) x[j] = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(points);
  return x;
}

std::vector<double> burgers_ic(double a1, double a2, double s1, double s2, std::size_t points) {
  auto sech2 = [](double z) {
    const double c = std::cosh(z);
    return 1.0 / (c * c);
  };
  const double pi = std::numbers::pi;
  std::vector<double> u = burgers_grid(points);
  for (double& x : u) {
    x = 3.0 * a1 * sech2(3.0 * std::sin(pi * (x - 2.0 * s1))) + 5.0 * a2 * sech2(3.0 * std::sin(pi * (x - 2.0 * s2)));
  }
  return u;
}

std::vector<double> kse_grid(double length, std::size_t points) {
  std::vector<double> x(points);
  for (std::size_t j = 0; j < points; ++j)
    x[j] = -0.5 * length + length * static_cast<double>(j) / static_cast<double>(points);
  return x;
}

std::vector<double> kse_ic(double length, std::size_t points, std::uint64_t seed) {
  validate(Kse{length, points});
  if (points <= 2 * kKseIcModes) throw ConfigError("kse_ic: grid too coarse for the initial-condition modes");
  CounterRng rng(seed, 0x6b7365);
  std::vector<cplx> c(kKseIcModes + 1);
  for (std::size_t k = 1; k <= kKseIcModes; ++k) {
    const double re = rng.normal();
    const double im = rng.normal();
    c[k] = {re, im};
  }
  std::vector<double> u(points, 0.0);
  for (std::size_t j = 0; j < points; ++j) {
    double v = 0.0;
    for (std::size_t k = 1; k <= kKseIcModes; ++k) {
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(k * j) / static_cast<double>(points);
      v += 2.0 * (c[k].real() * std::cos(phase) - c[k].imag() * std::sin(phase));
    }
    u[j] = v;
  }
  return u;
}

Trajectory etdrk4_integrate(const SystemSpec& spec, std::span<const double> u0, double dt, std::size_t samples,
                            std::size_t substeps) {
  if (!is_pde(spec)) throw ConfigError("etdrk4_integrate: " + system_name(spec) + " is an ODE");
  validate(spec);
  if (!(dt > 0)) throw ConfigError("etdrk4_integrate: dt must be positive");
  if (substeps < 1) throw ConfigError("etdrk4_integrate: substeps must be >= 1");

  std::size_t n = 0, stride = 1;
  double domain = 0.0;
  // N(v) = g(q) * FFT(u^2), L(q) the linear symbol
  std::function<double(double)> linear;
  double advect = 0.0;  // coefficient c in -c (u^2)_x
  if (const auto* b = std::get_if<Burgers>(&spec)) {
    n = b->grid_points;
    stride = b->grid_points / b->output_points;
    domain = 2.0;
    const double nu = b->nu;
    linear = [nu](double q) { return -nu * q * q; };
    advect = b->nonlinear ? 0.5 : 0.0;
  } else {
    const auto& k = std::get<Kse>(spec);
    n = k.grid_points;
    domain = k.length;
    linear = [](double q) { return q * q - q * q * q * q; };
    advect = 0.25;
  }
  require_shape(u0.size() == n, "etdrk4_integrate: initial field has " + std::to_string(u0.size()) +
                                    " points, solver grid has " + std::to_string(n));

  const std::size_t modes = n / 2 + 1;
  const double h = dt / static_cast<double>(substeps);
  const std::size_t cutoff = n / 3;  // 2/3 rule: keep |k| <= n/3
  std::vector<cplx> e(modes), e2(modes), qf(modes), f1(modes), f2(modes), f3(modes), g(modes);
  constexpr int kContour = 32;
  for (std::size_t k = 0; k < modes; ++k) {
    const double q = 2.0 * std::numbers::pi * static_cast<double>(k) / domain;
    const double lh = linear(q) * h;
    e[k] = std::exp(lh);
    e2[k] = std::exp(lh / 2.0);
    cplx sq = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (int j = 0; j < kContour; ++j) {
      const cplx z = lh + std::exp(cplx(0.0, 2.0 * std::numbers::pi * (j + 0.5) / kContour));
      const cplx ez = std::exp(z), z3 = z * z * z;
      sq += (std::exp(z / 2.0) - 1.0) / z;
      s1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
      s2 += (2.0 + z + ez * (-2.0 + z)) / z3;
      s3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
    }
    qf[k] = h * (sq / double(kContour)).real();
    f1[k] = h * (s1 / double(kContour)).real();
    f2[k] = h * (s2 / double(kContour)).real();
    f3[k] = h * (s3 / double(kContour)).real();
    // Nyquist derivative is zero; inverse FFT is unnormalized, fold 1/n in here.
    const bool keep = k <= cutoff && !(n % 2 == 0 && k == n / 2);
    g[k] = keep ? cplx(0.0, -advect * q) / static_cast<double>(n) : cplx(0.0);
  }

  RealFft fft(n);
  std::vector<double> phys(n);
  std::vector<cplx> sq(modes);
  auto nonlinear = [&](const std::vector<cplx>& v, std::vector<cplx>& out) {
    fft.inverse(v, phys);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (double& x : phys) x = (x * inv_n) * (x * inv_n) * static_cast<double>(n);
    // phys now holds n * u^2 so that FFT(phys) * g = -c i q FFT(u^2)
    fft.forward(phys, sq);
    out.resize(modes);
    for (std::size_t k = 0; k < modes; ++k) out[k] = g[k] * sq[k];
  };

  const std::size_t out_points = n / stride;
  Trajectory traj = make_trajectory(spec, dt, out_points, samples);
  auto store = [&](std::size_t col, const std::vector<double>& u) {
    for (std::size_t j = 0; j < out_points; ++j) traj.states(j, col) = u[j * stride];
  };
  store(0, std::vector<double>(u0.begin(), u0.end()));

  std::vector<cplx> v, nv, a(modes), na, b(modes), nb, c(modes), nc;
  fft.forward(std::vector<double>(u0.begin(), u0.end()), v);
  std::vector<double> u(n);
  for (std::size_t s = 1; s <= samples; ++s) {
    for (std::size_t r = 0; r < substeps; ++r) {
      nonlinear(v, nv);
      for (std::size_t k = 0; k < modes; ++k) a[k] = e2[k] * v[k] + qf[k] * nv[k];
      nonlinear(a, na);
      for (std::size_t k = 0; k < modes; ++k) b[k] = e2[k] * v[k] + qf[k] * na[k];
      nonlinear(b, nb);
      for (std::size_t k = 0; k < modes; ++k) c[k] = e2[k] * a[k] + qf[k] * (2.0 * nb[k] - nv[k]);
      nonlinear(c, nc);
      for (std::size_t k = 0; k < modes; ++k)
        v[k] = e[k] * v[k] + nv[k] * f1[k] + 2.0 * (na[k] + nb[k]) * f2[k] + nc[k] * f3[k];
    }
    fft.inverse(v, u);
    for (double& x : u) x /= static_cast<double>(n);
    if (!finite(u)) {
      traj.states = traj.states.col_block(0, s);
      traj.diagnostic = "etdrk4_integrate: non-finite field at sample " + std::to_string(s) +
                        " (time step too large for the resolution)";
      return traj;
    }
    store(s, u);
  }
  return traj;
}

std::vector<std::string> recipe_names() {
  return {"duffing", "rossler", "cylinder", "burgers", "kse-tw", "kse-beating", "kse-chaos", "stuart-landau"};
}

Recipe make_recipe(const std::string& name, bool paper_scale, std::uint64_t seed) {
  Recipe r;
  r.name = name;
  r.seed = seed;
  r.paper_scale = paper_scale;
  if (name == "duffing") {
    r.system = Duffing{};
    r.trajectories = 100;
    r.dt = 0.1;
    r.substeps = 10;
    r.t_end = 10.0;
    r.ic_lo = {-2.0, -2.0};
    r.ic_hi = {2.0, 2.0};
    r.planned_lifted_dim = 102;
  } else if (name == "rossler") {
    r.system = Rossler{};
    r.dt = 0.1;
    r.substeps = 10;
    r.t_end = 1000.0;
    r.transient = 100.0;
    r.ic_lo = {-1.0, -1.0, 0.0};
    r.ic_hi = {1.0, 1.0, 1.0};
    r.planned_lifted_dim = 103;
  } else if (name == "cylinder") {
    r.system = CylinderRom{};
    r.trajectories = 100;
    r.dt = 0.25;
    r.substeps = 10;
    r.t_end = 50.0;
    r.ic_lo = {-1.1, -1.1, 0.0};
    r.ic_hi = {1.1, 1.1, 2.42};
    r.planned_lifted_dim = 103;
  } else if (name == "burgers") {
    r.system = Burgers{};
    r.trajectories = 20;
    r.dt = 0.1;
    r.substeps = 100;
    r.t_end = 20.0;
    r.planned_lifted_dim = 164;
  } else if (name == "kse-tw") {
    r.system = Kse{12.0, 64};
    r.dt = 0.25;
    r.substeps = 10;
    r.t_end = paper_scale ? 1e4 : 2200.0;
    r.transient = 200.0;
    r.planned_lifted_dim = 164;
    r.shift_pairs = true;
  } else if (name == "kse-beating") {
    r.system = Kse{29.3, 64};
    r.dt = 0.05;
    r.substeps = 2;
    r.t_end = 2000.0;
    r.transient = 200.0;
    r.planned_lifted_dim = 114;
    r.shift_pairs = true;
  } else if (name == "kse-chaos") {
    r.system = Kse{22.0, 64};
    r.dt = 0.05;
    r.substeps = 2;
    r.t_end = 1000.0;
    r.transient = 200.0;
    r.planned_lifted_dim = 214;
    r.shift_pairs = true;
  } else if (name == "stuart-landau") {
    r.system = StuartLandau{};
    r.dt = 0.04;
    r.substeps = 10;
    r.t_end = 20.0;
    r.x0 = std::vector<double>{1e-3};
    r.planned_lifted_dim = 26;
  } else {
    std::string valid;
    for (const auto& n : recipe_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown system '" + name + "' (valid: " + valid + ")");
  }
  return r;
}

std::vector<double> recipe_initial_condition(const Recipe& recipe, std::size_t index) {
  if (recipe.x0) return *recipe.x0;
  CounterRng rng(recipe.seed, index);
  if (const auto* b = std::get_if<Burgers>(&recipe.system)) {
    const double a1 = rng.uniform(), a2 = rng.uniform(), s1 = rng.uniform(), s2 = rng.uniform();
    return burgers_ic(a1, a2, s1, s2, b->grid_points);
  }
  if (const auto* k = std::get_if<Kse>(&recipe.system)) return kse_ic(k->length, k->grid_points, rng.next_u64());
  const std::size_t n = state_dim(recipe.system);
  if (recipe.ic_lo.size() != n || recipe.ic_hi.size() != n)
    throw ConfigError("recipe '" + recipe.name + "': initial-condition box has the wrong dimension");
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = rng.uniform(recipe.ic_lo[i], recipe.ic_hi[i]);
  return x;
}

Trajectory integrate(const Recipe& recipe, std::span<const double> x0, std::size_t samples) {
  if (recipe.substeps < 1) throw ConfigError("recipe '" + recipe.name + "': substeps must be >= 1");
  if (is_pde(recipe.system)) return etdrk4_integrate(recipe.system, x0, recipe.dt, samples, recipe.substeps);
  return rk4_integrate(recipe.system, x0, recipe.dt / static_cast<double>(recipe.substeps), samples,
                       recipe.substeps);
}

namespace {
constexpr std::uint64_t kShiftStream = 1ull << 40;  // clear of the initial-condition indices
}

GeneratedData generate_dataset(const Recipe& recipe) {
  validate(recipe.system);
  if (recipe.trajectories == 0) throw ConfigError("recipe '" + recipe.name + "': zero trajectories");
  if (!(recipe.dt > 0) || !(recipe.t_end > 0)) throw ConfigError("recipe '" + recipe.name + "': dt and t_end must be positive");
  if (recipe.transient < 0 || recipe.transient >= recipe.t_end)
    throw ConfigError("recipe '" + recipe.name + "': transient must lie in [0, t_end)");
  const auto samples = static_cast<std::size_t>(std::llround(recipe.t_end / recipe.dt));
  const auto cut = static_cast<std::size_t>(std::llround(recipe.transient / recipe.dt));

  GeneratedData out;
  out.trajectories.resize(recipe.trajectories);
  std::vector<std::string> errors(recipe.trajectories);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < recipe.trajectories; ++i) {
    try {
      Trajectory t = integrate(recipe, recipe_initial_condition(recipe, i), samples);
      t.seed = recipe.seed;
      if (cut > 0) {
        const std::size_t keep = t.states.cols() > cut ? t.states.cols() - cut : 0;
        t.states = t.states.col_block(std::min(cut, t.states.cols()), keep);
        t.t0 = static_cast<double>(cut) * recipe.dt;
      }
      out.trajectories[i] = std::move(t);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw ConfigError("recipe '" + recipe.name + "': " + e);

  Provenance p;
  p.system = system_name(recipe.system);
  p.parameters = system_parameters(recipe.system);
  p.recipe = recipe.name;
  p.seed = recipe.seed;
  p.trajectories = recipe.trajectories;
  p.transient = recipe.transient;
  for (std::size_t i = 0; i < out.trajectories.size(); ++i) {
    if (out.trajectories[i].truncated())
      p.warnings.push_back("trajectory " + std::to_string(i) + ": " + out.trajectories[i].diagnostic);
  }
  out.dataset = pairs_from(out.trajectories, std::move(p));
  if (recipe.shift_pairs) {
    // The equation is translation-equivariant; one trajectory only visits a few spatial
    // phases, so each pair is moved to a phase of its own.
    const std::size_t n = out.dataset.n;
    Matrix& xt = out.dataset.x_t;
    Matrix& xtdt = out.dataset.x_tdt;
    std::vector<double> a(n), b(n);
    for (std::size_t j = 0; j < out.dataset.size(); ++j) {
      const std::size_t shift = CounterRng(recipe.seed, kShiftStream + j).next_u64() % n;
      for (std::size_t i = 0; i < n; ++i) {
        a[(i + shift) % n] = xt(i, j);
        b[(i + shift) % n] = xtdt(i, j);
      }
      for (std::size_t i = 0; i < n; ++i) {
        xt(i, j) = a[i];
        xtdt(i, j) = b[i];
      }
    }
  }
  if (recipe.planned_lifted_dim > 0 && out.dataset.size() <= recipe.planned_lifted_dim) {
    out.dataset.provenance.warnings.push_back("only " + std::to_string(out.dataset.size()) +
                                              " pairs for a planned lifted dimension of " +
                                              std::to_string(recipe.planned_lifted_dim));
  }
  return out;
}

}  // namespace kdla
