// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--out DIR] [criterion ...]
//
// With no criterion numbers every check runs. Cases that need trained models go through
// the same reproduce() pipeline as the CLI and read its summary.json / CSV output.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kdla/errors.hpp"
#include "kdla/io.hpp"
#include "kdla/koopman.hpp"
#include "kdla/linalg.hpp"
#include "kdla/metrics.hpp"
#include "kdla/pipeline.hpp"
#include "kdla/rng.hpp"
#include "kdla/systems.hpp"

#ifndef KDLA_CLI_PATH
#define KDLA_CLI_PATH "kdla"
#endif

using namespace kdla;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_out = "acceptance-output";

std::string fmt(double v, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  CounterRng rng(seed, 5);
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.uniform(-1.0, 1.0);
  return m;
}

double rel(const Matrix& a, const Matrix& b) { return frobenius_norm(a - b) / std::max(frobenius_norm(b), 1e-300); }

// CSV as columns
std::vector<std::vector<double>> read_columns(const fs::path& path, std::vector<std::string>& header) {
  const auto rows = read_csv(path, &header);
  std::vector<std::vector<double>> cols(header.size());
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size() && i < cols.size(); ++i) cols[i].push_back(r[i]);
  return cols;
}

// Runs a reproduce case once per process; later criteria reuse the output.
const json& case_summary(const std::string& name) {
  static std::map<std::string, json> cache;
  if (auto it = cache.find(name); it != cache.end()) return it->second;
  ReproduceOptions opt;
  opt.out_dir = g_out / name;
  opt.log = &std::cerr;
  reproduce(name, opt);
  return cache[name] = json::parse(read_text(opt.out_dir / "summary.json"));
}

// ---------------------------------------------------------------------------------------

Outcome pinv_correctness() {
  const auto start = std::chrono::steady_clock::now();
  CounterRng shapes(2024, 0);
  double worst = 0.0;
  std::size_t deficient = 0;
  for (std::size_t trial = 0; trial < 200; ++trial) {
    const std::size_t p = 1 + shapes.next_u64() % 50;
    const std::size_t q = 1 + shapes.next_u64() % 200;
    Matrix a;
    if (trial % 3 == 0 && std::min(p, q) > 1) {
      const std::size_t k = 1 + shapes.next_u64() % (std::min(p, q) - 1);
      a = matmul(random_matrix(p, k, 3 * trial), random_matrix(k, q, 3 * trial + 1));
      ++deficient;
    } else {
      a = random_matrix(p, q, 3 * trial + 2);
    }
    if (trial % 2 == 1) a = a.transposed();
    const Matrix x = pinv(a);
    const Matrix ax = matmul(a, x), xa = matmul(x, a);
    const double scale = std::max(frobenius_norm(a), 1.0);
    const double r1 = max_abs(matmul(ax, a) - a) / scale;
    const double r2 = max_abs(matmul(xa, x) - x) / std::max(frobenius_norm(x), 1.0);
    const double r3 = max_abs(ax - ax.transposed());
    const double r4 = max_abs(xa - xa.transposed());
    worst = std::max({worst, r1, r2, r3, r4});
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst < 1e-10 && secs < 30.0, "max Penrose residual " + fmt(worst) + " over 200 matrices (" +
                                            std::to_string(deficient) + " rank-deficient), " + fmt(secs, "%.2f") + " s"};
}

Outcome pinv_gradients() {
  // pinv_vjp against central differences of <W, pinv(A)>
  double worst_vjp = 0.0;
  for (auto [p, q, k] : {std::tuple{6, 9, 6}, {9, 5, 5}, {8, 40, 8}}) {
    Matrix a = random_matrix(p, q, 100 + p);
    if (k < std::min(p, q)) a = matmul(random_matrix(p, k, 7), random_matrix(k, q, 8));
    const Matrix w = random_matrix(q, p, 200 + q);
    const Matrix g = pinv_vjp(a, pinv(a), w);
    Matrix fd(a.rows(), a.cols());
    const double h = 1e-6;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double keep = a.flat()[i];
      auto f = [&] {
        const Matrix x = pinv(a);
        double s = 0;
        for (std::size_t j = 0; j < x.size(); ++j) s += x.flat()[j] * w.flat()[j];
        return s;
      };
      a.flat()[i] = keep + h;
      const double up = f();
      a.flat()[i] = keep - h;
      const double down = f();
      a.flat()[i] = keep;
      fd.flat()[i] = (up - down) / (2 * h);
    }
    worst_vjp = std::max(worst_vjp, rel(g, fd));
  }

  // full loss gradient through a small dictionary, D = 2 + 1 + 5 = 8, M = 40
  SnapshotDataset d;
  d.n = 2;
  d.dt = 0.1;
  d.x_t = random_matrix(2, 40, 31);
  d.x_tdt = Matrix(2, 40);
  for (std::size_t j = 0; j < 40; ++j) {
    const double x1 = d.x_t(0, j), x2 = d.x_t(1, j);
    d.x_tdt(0, j) = x1 + 0.1 * x2;
    d.x_tdt(1, j) = x2 - 0.1 * (0.5 * x2 - x1 + x1 * x1 * x1);
  }
  DictionaryNet dict = make_dictionary(2, {{6}, 5, {Activation::tanh, Activation::linear}, true}, 17);
  const DictionaryGradient g = kdla_objective(dict, d.x_t, d.x_tdt);
  double num = 0.0, den = 0.0;
  auto loss = [&] { return kdla_objective(dict, d.x_t, d.x_tdt).loss; };
  const double h = 1e-6;
  for (std::size_t l = 0; l < dict.net.num_layers(); ++l) {
    auto probe = [&](double& v, double analytic) {
      const double keep = v;
      v = keep + h;
      const double up = loss();
      v = keep - h;
      const double down = loss();
      v = keep;
      const double fd = (up - down) / (2 * h);
      num += (analytic - fd) * (analytic - fd);
      den += fd * fd;
    };
    for (std::size_t i = 0; i < dict.net.weights[l].size(); ++i)
      probe(dict.net.weights[l].flat()[i], g.grads.weights[l].flat()[i]);
    for (std::size_t i = 0; i < dict.net.biases[l].size(); ++i) probe(dict.net.biases[l][i], g.grads.biases[l][i]);
  }
  const double worst_loss = std::sqrt(num / std::max(den, 1e-300));
  return {worst_vjp < 1e-6 && worst_loss < 1e-4,
          "pinv_vjp rel err " + fmt(worst_vjp) + ", kdla_loss gradient rel err " + fmt(worst_loss) +
              " (D=" + std::to_string(dict.lifted_dim()) + ", M=40)"};
}

Outcome edmd_oracle() {
  // Lambda = V blockdiag(rotations, reals) V^-1 with known eigenvalues.
  constexpr std::size_t D = 6, M = 5 * D;
  const std::vector<std::complex<double>> eig{{0.9, 0.3}, {0.9, -0.3}, {0.5, 0.6}, {0.5, -0.6}, {0.95, 0}, {-0.4, 0}};
  Matrix b(D, D);
  b(0, 0) = 0.9, b(0, 1) = 0.3, b(1, 0) = -0.3, b(1, 1) = 0.9;
  b(2, 2) = 0.5, b(2, 3) = 0.6, b(3, 2) = -0.6, b(3, 3) = 0.5;
  b(4, 4) = 0.95, b(5, 5) = -0.4;
  Matrix v = random_matrix(D, D, 41);
  for (std::size_t i = 0; i < D; ++i) v(i, i) += 3.0;
  const Matrix lambda = matmul(matmul(v, b), pinv(v));

  ObservablePair pair;
  pair.psi_t = random_matrix(D, M, 42);
  pair.psi_tdt = matmul(lambda, pair.psi_t);
  pair.dt = 0.1;
  const double dk = frobenius_norm(edmd_fit(pair, 0.0) - lambda);

  // trained model: state-only dictionary on the same data, K refit by the trainer
  SnapshotDataset data;
  data.n = D;
  data.dt = 0.1;
  data.x_t = pair.psi_t;
  data.x_tdt = pair.psi_tdt;
  KdlaConfig cfg;
  cfg.epochs = 3;
  const KoopmanModel model = train_kdla(data, make_dictionary(D, {}, 0), cfg);
  const KoopmanSpectrum s = spectrum(model);
  double de = 0.0;
  std::vector<bool> used(D, false);
  for (const auto& mu : s.eigenvalues) {
    std::size_t best = D;
    for (std::size_t i = 0; i < D; ++i)
      if (!used[i] && (best == D || std::abs(mu - eig[i]) < std::abs(mu - eig[best]))) best = i;
    used[best] = true;
    de = std::max(de, std::abs(mu - eig[best]));
  }
  const double dk_trained = frobenius_norm(model.k - lambda);
  return {dk < 1e-8 && dk_trained < 1e-8 && de < 1e-8 && s.eigenvalues.size() == D,
          "||dK||_F " + fmt(dk) + " (edmd_fit), " + fmt(dk_trained) + " (trained), eigenvalue error " + fmt(de)};
}

Outcome stuart_landau() {
  const auto start = std::chrono::steady_clock::now();
  const Recipe r = make_recipe("stuart-landau");
  const Trajectory t = integrate(r, *r.x0, 500);
  double rk4 = 0.0;
  for (std::size_t j = 0; j < t.states.cols(); ++j)
    rk4 = std::max(rk4, std::abs(t.states(0, j) - stuart_landau_exact(r.x0->front(), static_cast<double>(j) * r.dt)));

  const json& s = case_summary("stuart-landau");
  const double kdla_err = s["kdla_max_state_error"].get<double>();
  std::vector<std::string> header;
  const auto cols = read_columns(g_out / "stuart-landau" / "stuart_landau.csv", header);
  const auto col = [&](const std::string& h) { return cols[std::find(header.begin(), header.end(), h) - header.begin()]; };
  const auto cross = [&](const std::vector<double>& x) -> double {
    const double c = 1.0 / std::numbers::sqrt2;
    for (std::size_t j = 1; j < x.size(); ++j)
      if (x[j - 1] < c && x[j] >= c) return cols[0][j - 1] + (c - x[j - 1]) / (x[j] - x[j - 1]) * r.dt;
    return NAN;
  };
  const double t_exact = cross(col("exact")), t_kdla = cross(col("kdla_oo"));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {rk4 < 1e-6 && kdla_err < 5e-2 && std::isfinite(t_kdla) && secs < 600.0,
          "RK4 max error " + fmt(rk4) + ", KDLA max state error " + fmt(kdla_err) + ", R=1/sqrt2 crossing t=" +
              fmt(t_kdla, "%.3f") + " (exact " + fmt(t_exact, "%.3f") + "), " + fmt(secs, "%.0f") + " s"};
}

Outcome duffing() {
  const json& s = case_summary("duffing");
  const double basin = s["basin_agreement"]["kdl_so"].get<double>();
  const double kdla2 = s["tracking_error"]["kdla_oo"]["t=2"].get<double>();
  const double kdl2 = s["tracking_error"]["kdl_oo"]["t=2"].get<double>();
  const auto& ex = s["msweep_example_error"];
  const double e1 = ex["kdl_so_m1"].get<double>(), e5 = ex["kdl_so_m5"].get<double>(),
               e15 = ex["kdl_so_m15"].get<double>();
  const auto& ens = s["tracking_error"];
  const bool a = basin >= 0.95, b = kdla2 <= kdl2, c = e1 <= e5 && e5 <= e15;
  std::string detail = std::string("(a) ") + (a ? "ok" : "FAIL") + " basin agreement " + fmt(basin, "%.4f") +
                       "; (b) " + (b ? "ok" : "FAIL") + " t=2 error KDLA_oo " + fmt(kdla2, "%.4f") + " vs KDL_oo " +
                       fmt(kdl2, "%.4f") + "; (c) " + (c ? "ok" : "FAIL") + " t=5 error m=1/5/15 " + fmt(e1, "%.4f") +
                       "/" + fmt(e5, "%.4f") + "/" + fmt(e15, "%.4f") + " (ensemble mean " +
                       fmt(ens["kdl_so_m1"]["t=5"].get<double>(), "%.4f") + "/" +
                       fmt(ens["kdl_so_m5"]["t=5"].get<double>(), "%.4f") + "/" +
                       fmt(ens["kdl_so_m15"]["t=5"].get<double>(), "%.4f") + ")";
  return {a && b && c, detail};
}

Outcome spectral_radius() {
  bool ok = true;
  std::string detail;
  for (const char* name : {"rossler", "kse-tw", "kse-chaos"}) {
    const json& s = case_summary(name);
    for (const auto& [label, r] : s["spectral_radius"].items()) {
      const double rho = r.get<double>();
      const std::size_t out = s["eigenvalues_outside_1.05"][label].get<std::size_t>();
      ok = ok && rho <= 1.05;
      detail += std::string(detail.empty() ? "" : ", ") + name + "/" + label + " " + fmt(rho, "%.4f");
      if (out > 0) detail += " (" + std::to_string(out) + " outside)";
    }
  }
  return {ok, "max |lambda|: " + detail};
}

Outcome rossler_spectrum() {
  const json& s = case_summary("rossler");
  const auto bin = s["dominant_bin"]["truth"].get<std::size_t>();
  std::string detail = "truth dominant bin " + std::to_string(bin);
  for (const auto& [label, v] : s["dominant_bin"].items())
    if (label != "truth") detail += ", " + label + " " + std::to_string(v.get<std::size_t>());
  return {bin >= 15 && bin <= 17, detail};
}

Trajectory settled(const std::string& name, double span) {
  const Recipe r = make_recipe(name);
  const std::size_t warm = static_cast<std::size_t>(std::lround(r.transient / r.dt));
  const std::size_t n = static_cast<std::size_t>(std::lround(span / r.dt));
  const Trajectory full = integrate(r, recipe_initial_condition(r, 0), warm + n);
  Trajectory t = full;
  t.states = full.states.col_block(warm, n + 1);
  return t;
}

double state_norm(const Matrix& s, std::size_t j) {
  double a = 0;
  for (std::size_t i = 0; i < s.rows(); ++i) a += s(i, j) * s(i, j);
  return std::sqrt(a);
}

std::size_t top_peak(const SpectrumReport& s, double f_lo, double f_hi) {
  std::size_t best = 0;
  for (std::size_t k = 1; k + 1 < s.power.size(); ++k)
    if (s.frequencies[k] >= f_lo && s.frequencies[k] <= f_hi && s.power[k] > s.power[k - 1] &&
        s.power[k] >= s.power[k + 1] && (best == 0 || s.power[k] > s.power[best]))
      best = k;
  return best;
}

Outcome kse_regimes() {
  const auto start = std::chrono::steady_clock::now();

  // L = 12: the norm of a traveling wave is constant
  const Trajectory tw = settled("kse-tw", 300.0);
  const std::size_t lag = static_cast<std::size_t>(std::lround(100.0 / tw.dt));
  double drift = 0.0;
  for (std::size_t j = 0; j + lag < tw.states.cols(); ++j)
    drift = std::max(drift, std::abs(state_norm(tw.states, j + lag) - state_norm(tw.states, j)) / state_norm(tw.states, j));
  const bool tw_ok = drift < 1e-3;

  // L = 29.3: slow travel seen at a fixed probe, fast beating seen in the translation-invariant norm.
  // A pure traveling wave keeps ||u|| constant, so a norm oscillation is a second, independent frequency.
  const Recipe rb = make_recipe("kse-beating");
  const Trajectory bt = settled("kse-beating", rb.t_end - rb.transient);
  const SpectrumReport probe = power_spectrum(bt, SpectrumMode::single_probe, bt.dim() / 2);
  std::vector<double> nrm(bt.states.cols());
  for (std::size_t j = 0; j < nrm.size(); ++j) nrm[j] = state_norm(bt.states, j);
  double mean = 0, var = 0;
  for (double v : nrm) mean += v / static_cast<double>(nrm.size());
  for (double v : nrm) var += (v - mean) * (v - mean) / static_cast<double>(nrm.size());
  const std::size_t kt = top_peak(probe, 0.0, 1e9);
  const double f_travel = probe.frequencies[kt];
  const SpectrumReport ns = power_spectrum(nrm, bt.dt);
  const std::size_t kb = top_peak(ns, 10.0 * f_travel, 1e9);
  const double f_beat = kb == 0 ? NAN : ns.frequencies[kb];
  const double ratio = f_beat / f_travel;
  const bool beat_ok = kt > 0 && kb > 0 && std::sqrt(var) / mean > 1e-2 && ratio > 20.0 && ratio < 2000.0;

  // L = 22: bounded and no recurrence of the Fourier-mode magnitudes (shift-invariant) at any lag
  const Trajectory ch = settled("kse-chaos", 500.0);
  const std::size_t n = ch.dim(), T = ch.states.cols();
  Matrix amp(n / 2, T);
  for (std::size_t j = 0; j < T; ++j)
    for (std::size_t k = 1; k <= n / 2; ++k) {
      std::complex<double> c = 0;
      for (std::size_t i = 0; i < n; ++i)
        c += ch.states(i, j) * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(n));
      amp(k - 1, j) = std::abs(c) / static_cast<double>(n);
    }
  double ref = 0;
  for (std::size_t j = 0; j < T; ++j) ref += std::pow(state_norm(amp, j), 2);
  ref = std::sqrt(ref / static_cast<double>(T));
  double closest = INFINITY;
  for (std::size_t l = static_cast<std::size_t>(10.0 / ch.dt); l <= static_cast<std::size_t>(250.0 / ch.dt); ++l) {
    double s = 0;
    for (std::size_t j = 0; j + l < T; ++j)
      for (std::size_t k = 0; k < n / 2; ++k) s += std::pow(amp(k, j + l) - amp(k, j), 2);
    closest = std::min(closest, std::sqrt(s / static_cast<double>(T - l)) / ref);
  }
  const double umax = max_abs(ch.states);
  const bool chaos_ok = ch.states.all_finite() && umax < 10.0 && closest > 0.1;

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {tw_ok && beat_ok && chaos_ok && secs < 900.0,
          "L=12 norm drift " + fmt(drift) + "/100tu; L=29.3 travel f=" + fmt(f_travel, "%.5f") + ", beat f=" +
              fmt(f_beat, "%.4f") + " (ratio " + fmt(ratio, "%.0f") + ", norm rel std " + fmt(std::sqrt(var) / mean) +
              "); L=22 max|u| " + fmt(umax, "%.2f") + ", closest recurrence " + fmt(closest, "%.3f") + "; " +
              fmt(secs, "%.0f") + " s"};
}

Outcome kse_tw_energy() {
  const json& s = case_summary("kse-tw");
  const double change = s["energy_change"]["kdla_oo"].get<double>();
  return {-change <= 0.05, "KDLA_oo energy change over 250 time units " + fmt(100.0 * change, "%.2f") + "%"};
}

Outcome kse_chaos() {
  case_summary("kse-chaos");
  std::vector<std::string> header;
  const auto cols = read_columns(g_out / "kse-chaos" / "tracking.csv", header);
  const auto col = [&](const std::string& h) { return cols[std::find(header.begin(), header.end(), h) - header.begin()]; };
  const auto& t = cols[0];
  const auto& node = col("node");
  const auto& kd = col("kdla_oo");
  double node_max = 0.0;
  for (std::size_t j = 0; j < t.size() && t[j] < 10.0; ++j) node_max = std::max(node_max, node[j]);
  auto crossing = [&](const std::vector<double>& e) -> double {
    for (std::size_t j = 0; j < t.size() && j < e.size(); ++j)
      if (!(e[j] < 0.5)) return t[j];
    return INFINITY;
  };
  auto at = [&](const std::vector<double>& e, double when) -> double {
    for (std::size_t j = 0; j < t.size() && j < e.size(); ++j)
      if (t[j] >= when - 1e-9) return e[j];
    return NAN;
  };
  return {node_max < 0.5, "NODE max error for t<10 " + fmt(node_max, "%.3f") + ", reaches 0.5 at t=" +
                              fmt(crossing(node), "%.2f") + "; KDLA_oo error at t=5/10 " + fmt(at(kd, 5.0), "%.3f") +
                              "/" + fmt(at(kd, 10.0), "%.3f") + ", reaches 0.5 at t=" + fmt(crossing(kd), "%.2f")};
}

Outcome determinism() {
  std::vector<fs::path> dirs{g_out / "determinism-a", g_out / "determinism-b"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    const std::string cmd = std::string("\"") + KDLA_CLI_PATH + "\" --seed 0 --out \"" + d.string() +
                            "\" reproduce stuart-landau > \"" + d.string() + ".log\" 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "CLI run failed, see " + d.string() + ".log"};
  }
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(dirs[0])) {
    if (e.path().extension() != ".csv") continue;
    const fs::path other = dirs[1] / e.path().filename();
    if (!fs::exists(other)) return {false, "missing " + other.string()};
    if (read_text(e.path()) != read_text(other)) return {false, e.path().filename().string() + " differs"};
    ++compared;
  }
  return {compared > 0, std::to_string(compared) + " CSV files byte-identical across two runs"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      g_out = argv[++i];
    } else if (a == "-h" || a == "--help") {
      std::cout << "usage: acceptance [--out DIR] [criterion ...]\n";
      return 0;
    } else {
      only.insert(std::atoi(a.c_str()));
    }
  }
  fs::create_directories(g_out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"pseudoinverse Penrose conditions", pinv_correctness},
      {"gradients through the pseudoinverse", pinv_gradients},
      {"EDMD oracle on linear observables", edmd_oracle},
      {"Stuart-Landau end to end", stuart_landau},
      {"Duffing desk-scale properties", duffing},
      {"spectral radius of attractor models", spectral_radius},
      {"Rossler truth spectrum", rossler_spectrum},
      {"KSE regimes from the truth solver", kse_regimes},
      {"KSE L=12 KDLA energy", kse_tw_energy},
      {"KSE L=22 short-time tracking", kse_chaos},
      {"determinism of reproduce", determinism},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
