// kdla command-line front end.
#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "kdla/errors.hpp"
#include "kdla/io.hpp"
#include "kdla/metrics.hpp"
#include "kdla/pipeline.hpp"

namespace {

using namespace kdla;
using nlohmann::json;

struct Common {
  int threads = 0;
  std::string config_file;
  std::vector<std::string> sets;
  bool paper_scale = false;
  std::uint64_t seed = 0;
  std::string out;
};

fs::path output_root() {
  const char* env = std::getenv("KDLA_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("kdla-output");
}

fs::path out_dir(const Common& c, const std::string& fallback) {
  const fs::path dir = c.out.empty() ? output_root() / fallback : fs::path(c.out);
  fs::create_directories(dir);
  return dir;
}

// --config file first, then --set pairs in order; later values win.
std::map<std::string, std::string> overrides(const Common& c) {
  std::map<std::string, std::string> values;
  if (!c.config_file.empty()) values = load_config(c.config_file);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    auto trim = [](std::string v) {
      v.erase(0, v.find_first_not_of(" \t"));
      v.erase(v.find_last_not_of(" \t") + 1);
      return v;
    };
    values[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  return values;
}

std::string take(std::map<std::string, std::string>& values, const std::string& key, const std::string& fallback) {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  std::string v = it->second;
  values.erase(it);
  return v;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError(what + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

TrainedModel load_any_model(const fs::path& path) {
  const std::string v = model_version(path);
  if (v == kKoopmanModelVersion) return load_koopman_model(path);
  return load_node_model(path);
}

std::size_t model_state_dim(const TrainedModel& m) {
  if (const auto* k = std::get_if<KoopmanModel>(&m)) return k->dictionary.state_dim;
  return std::get<NodeModel>(m).state_dim();
}

double model_dt(const TrainedModel& m) {
  return std::visit([](const auto& x) { return x.dt; }, m);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string system;
  bool all_trajectories = false;
};

void cmd_generate(const Common& c, const GenerateArgs& a) {
  auto values = overrides(c);
  const std::string system = take(values, "system", a.system);
  if (system.empty()) throw ConfigError("generate: --system is required (one of the recipe names)");
  if (!values.empty()) throw ConfigError("generate: unsupported key '" + values.begin()->first + "'");
  const Recipe recipe = make_recipe(system, c.paper_scale, c.seed);
  const fs::path dir = out_dir(c, system);
  const GeneratedData g = generate_dataset(recipe);
  save_dataset(dir / "data", g.dataset);
  const std::size_t count = a.all_trajectories ? g.trajectories.size() : 1;
  for (std::size_t i = 0; i < count; ++i)
    save_trajectory(dir / ("trajectory_" + std::to_string(i) + ".csv"), g.trajectories[i], g.dataset.provenance);
  std::ostringstream cfg;
  cfg << "system = " << system << "\nseed = " << c.seed << "\npaper_scale = " << (c.paper_scale ? "true" : "false")
      << "\n";
  write_text(dir / "config.toml", cfg.str());
  for (const auto& w : g.dataset.provenance.warnings) std::cerr << "warning: " << w << "\n";
  std::cerr << "wrote " << g.dataset.size() << " snapshot pairs (n = " << g.dataset.n << ") to " << dir.string()
            << "\n";
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string system;
  std::string method = "kdla";
  std::string data;
};

void cmd_train(const Common& c, const TrainArgs& a) {
  auto values = overrides(c);
  const std::string system = take(values, "system", a.system);
  const std::string method = take(values, "method", a.method);
  if (system.empty()) throw ConfigError("train: --system is required");
  RunConfig cfg = default_run_config(system, method, c.paper_scale);
  cfg.seed = c.seed;
  apply_overrides(cfg, values);

  SnapshotDataset data;
  if (a.data.empty()) {
    data = generate_dataset(make_recipe(system, c.paper_scale, cfg.seed)).dataset;
  } else {
    data = load_dataset(a.data);
    if (!data.provenance.system.empty() && data.provenance.recipe != system && data.provenance.system != system)
      std::cerr << "warning: dataset was generated for '" << data.provenance.recipe << "'\n";
  }
  validate(cfg, data.n);
  const fs::path dir = out_dir(c, system + "-" + method);
  write_text(dir / "config.toml", render_config(cfg));
  const std::size_t every = std::max<std::size_t>(1, cfg.epochs / 20);
  const TrainedModel model = train_model(cfg, data, [&](std::size_t e, double loss) {
    if ((e + 1) % every == 0) std::cerr << "epoch " << e + 1 << "/" << cfg.epochs << " loss " << loss << "\n";
  });
  std::visit([&](const auto& m) { save_model(dir / "model.json", m); }, model);
  const auto& curve = loss_curve(model);
  std::vector<double> epochs(curve.size());
  for (std::size_t i = 0; i < epochs.size(); ++i) epochs[i] = static_cast<double>(i);
  write_csv(dir / "loss.csv", {"epoch", "loss"}, {epochs, curve});
  if (const auto* k = std::get_if<KoopmanModel>(&model)) {
    const EigenReport r = spectrum_report(*k);
    std::vector<double> re, im;
    for (const auto& l : r.eigenvalues) {
      re.push_back(l.real());
      im.push_back(l.imag());
    }
    write_csv(dir / "eigenvalues.csv", {"re", "im", "modulus"}, {re, im, r.modulus});
    if (r.outside_count > 0)
      std::cerr << "warning: " << r.outside_count << " eigenvalues outside |lambda| <= " << 1 + r.tol
                << " (spectral radius " << r.spectral_radius << ")\n";
  }
  std::cerr << "model written to " << (dir / "model.json").string() << "\n";
}

// ---- evolve ---------------------------------------------------------------

struct EvolveArgs {
  std::string model;
  std::string x0;
  std::string x0_file;
  std::size_t row = 0;
  std::size_t steps = 100;
  std::string mode = "oo";
  std::string m = "1";
};

void cmd_evolve(const Common& c, const EvolveArgs& a) {
  if (a.mode != "oo" && a.mode != "so") throw ConfigError("evolve: --mode must be oo or so");
  if (a.x0.empty() == a.x0_file.empty()) throw ConfigError("evolve: give exactly one of --x0 and --x0-file");
  const TrainedModel model = load_any_model(a.model);
  std::vector<double> x0;
  if (!a.x0.empty()) {
    x0 = parse_list(a.x0, "--x0");
  } else {
    const Trajectory src = read_trajectory_csv(a.x0_file);
    if (a.row >= src.states.cols())
      throw ConfigError("evolve: --row " + std::to_string(a.row) + " beyond the " +
                        std::to_string(src.states.cols()) + " samples of " + a.x0_file);
    for (std::size_t i = 0; i < src.dim(); ++i) x0.push_back(src.states(i, a.row));
  }
  const std::size_t n = model_state_dim(model);
  if (x0.size() != n)
    throw DimensionError("evolve: initial condition has " + std::to_string(x0.size()) + " entries, model state is " +
                         std::to_string(n));
  Matrix x(n, 1);
  for (std::size_t i = 0; i < n; ++i) x(i, 0) = x0[i];
  const fs::path dir = out_dir(c, "evolve");
  const bool node = std::holds_alternative<NodeModel>(model);
  std::vector<std::size_t> ms{1};
  if (a.mode == "so" && !node) {
    ms.clear();
    for (double v : parse_list(a.m, "--m")) {
      if (!(v >= 1) || v != std::floor(v)) throw ConfigError("evolve: m must be a positive integer");
      ms.push_back(static_cast<std::size_t>(v));
    }
  }
  for (std::size_t m : ms) {
    const Trajectory t = rollout(model, x, a.steps, a.mode, m).front();
    const std::string name = node ? "evolve_node.csv"
                             : a.mode == "oo" ? "evolve_oo.csv"
                                              : "evolve_so_m" + std::to_string(m) + ".csv";
    write_trajectory_csv(dir / name, t);
    if (t.truncated()) std::cerr << "warning: " << name << ": " << t.diagnostic << "\n";
    std::cerr << "wrote " << (dir / name).string() << "\n";
  }
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string truth;
  std::vector<std::string> preds;
  std::string metrics = "tracking";
  std::string model;
  std::string mode = "so";
  std::size_t m = 1;
  std::size_t grid = 20;
};

void cmd_evaluate(const Common& c, const EvaluateArgs& a) {
  std::set<std::string> wanted;
  {
    std::stringstream ss(a.metrics);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item != "tracking" && item != "energy" && item != "spectrum" && item != "basin")
        throw ConfigError("evaluate: unknown metric '" + item + "' (tracking, energy, spectrum, basin)");
      wanted.insert(item);
    }
  }
  const fs::path dir = out_dir(c, "evaluate");
  json summary;

  if (wanted.count("basin")) {
    if (a.model.empty()) throw ConfigError("evaluate: the basin metric needs --model");
    const TrainedModel model = load_any_model(a.model);
    if (model_state_dim(model) != 2)
      throw ConfigError("evaluate: the basin metric applies to Duffing models only (state dimension 2, got " +
                        std::to_string(model_state_dim(model)) + ")");
    Matrix ics(2, a.grid * a.grid);
    for (std::size_t i = 0; i < a.grid; ++i)
      for (std::size_t j = 0; j < a.grid; ++j) {
        ics(0, i * a.grid + j) = -2.0 + 4.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(a.grid);
        ics(1, i * a.grid + j) = -2.0 + 4.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(a.grid);
      }
    const Recipe r = make_recipe("duffing");
    const double dt = model_dt(model);
    const auto truth = basin_map(
        [&](const Matrix& x0, std::size_t n) {
          return rk4_ensemble(r.system, x0, r.dt / static_cast<double>(r.substeps), n, r.substeps);
        },
        ics, r.dt);
    const auto pred = basin_map([&](const Matrix& x0, std::size_t n) { return rollout(model, x0, n, a.mode, a.m); },
                                ics, dt);
    std::vector<double> x1, x2, lt, lp;
    for (std::size_t j = 0; j < ics.cols(); ++j) {
      x1.push_back(ics(0, j));
      x2.push_back(ics(1, j));
      lt.push_back(truth.labels[j]);
      lp.push_back(pred.labels[j]);
    }
    write_csv(dir / "basin.csv", {"x1_0", "x2_0", "truth_label", "model_label"}, {x1, x2, lt, lp});
    summary["basin_agreement"] = basin_agreement(truth, pred);
  }

  const bool need_truth = wanted.count("tracking") || wanted.count("energy") || wanted.count("spectrum");
  if (need_truth) {
    if (a.truth.empty()) throw ConfigError("evaluate: --truth is required for tracking, energy and spectrum");
    const Trajectory truth = read_trajectory_csv(a.truth);
    std::vector<Trajectory> preds;
    for (const auto& p : a.preds) {
      preds.push_back(read_trajectory_csv(p));
      const auto& t = preds.back();
      if (std::abs(t.dt - truth.dt) > 1e-9 * truth.dt)
        throw ConfigError("evaluate: " + p + " has dt " + format_double(t.dt) + " but the truth has dt " +
                          format_double(truth.dt));
      if (t.dim() != truth.dim())
        throw DimensionError("evaluate: " + p + " has " + std::to_string(t.dim()) + " components, truth has " +
                             std::to_string(truth.dim()));
    }
    auto label = [&](std::size_t i) { return fs::path(a.preds[i]).stem().string(); };
    if (wanted.count("tracking")) {
      if (preds.empty()) throw ConfigError("evaluate: tracking needs at least one --pred");
      std::vector<std::string> header{"t"};
      std::vector<std::vector<double>> cols;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto r = tracking_error({truth}, {preds[i]});
        if (cols.empty()) cols.push_back(r.times);
        header.push_back(label(i));
        auto e = r.mean_error;
        e.resize(cols.front().size(), std::nan(""));
        cols.push_back(e);
        summary["tracking"][label(i)]["final"] = r.mean_error.back();
        summary["tracking"][label(i)]["normalizer"] = r.normalizer;
      }
      write_csv(dir / "tracking.csv", header, cols);
    }
    if (wanted.count("energy")) {
      std::vector<std::string> header{"t", "truth"};
      std::vector<std::vector<double>> cols{truth.times(), energy(truth)};
      for (std::size_t i = 0; i < preds.size(); ++i) {
        header.push_back(label(i));
        auto e = energy(preds[i]);
        e.resize(truth.states.cols(), std::nan(""));
        cols.push_back(e);
      }
      write_csv(dir / "energy.csv", header, cols);
    }
    if (wanted.count("spectrum")) {
      const auto s = power_spectrum(truth);
      std::vector<std::string> header{"k", "frequency", "truth"};
      std::vector<std::vector<double>> cols{s.wavenumbers, s.frequencies, s.power};
      summary["dominant_bin"]["truth"] = s.dominant_bin();
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].states.cols() != truth.states.cols())
          throw ConfigError("evaluate: spectrum needs equal lengths; " + a.preds[i] + " differs from the truth");
        const auto p = power_spectrum(preds[i]);
        header.push_back(label(i));
        cols.push_back(p.power);
        summary["dominant_bin"][label(i)] = p.dominant_bin();
      }
      write_csv(dir / "spectrum.csv", header, cols);
    }
  }
  write_json(dir / "evaluation.json", summary);
  std::cout << summary.dump(1) << "\n";
}

// ---- spectrum -------------------------------------------------------------

struct SpectrumArgs {
  std::string input;
  long probe = -1;
};

void cmd_spectrum(const Common& c, const SpectrumArgs& a) {
  const Trajectory t = read_trajectory_csv(a.input);
  if (a.probe >= static_cast<long>(t.dim()))
    throw ConfigError("spectrum: probe " + std::to_string(a.probe) + " beyond the " + std::to_string(t.dim()) +
                      " components");
  const auto s = a.probe < 0 ? power_spectrum(t)
                             : power_spectrum(t, SpectrumMode::single_probe, static_cast<std::size_t>(a.probe));
  const fs::path dir = out_dir(c, "spectrum");
  write_csv(dir / "spectrum.csv", {"k", "frequency", "power"}, {s.wavenumbers, s.frequencies, s.power});
  json j;
  j["source"] = a.input;
  j["mode"] = a.probe < 0 ? "component-average" : "single-probe";
  j["samples"] = t.states.cols();
  j["dt"] = t.dt;
  j["dominant_bin"] = s.dominant_bin();
  j["dominant_frequency"] = s.frequencies[s.dominant_bin()];
  write_json(dir / "spectrum.json", j);
  std::cout << j.dump(1) << "\n";
}

// ---- reproduce ------------------------------------------------------------

void cmd_reproduce(const Common& c, const std::string& name) {
  ReproduceOptions opt;
  opt.out_dir = c.out.empty() ? output_root() / name : fs::path(c.out);
  opt.paper_scale = c.paper_scale;
  opt.seed = c.seed;
  opt.overrides = overrides(c);
  opt.log = &std::cerr;
  reproduce(name, opt);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman dictionary learning: data generation, training, rollout and evaluation"};
  app.require_subcommand(1);
  Common c;
  app.add_option("--threads", c.threads, "Worker threads for ensemble-parallel stages (0 = OpenMP default)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--config", c.config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", c.sets, "Override one config key (key=value), repeatable");
  app.add_flag("--paper-scale", c.paper_scale, "Use the full published training budgets");
  app.add_option("--seed", c.seed, "Random seed");
  app.add_option("--out", c.out, "Output directory (default: $KDLA_OUTPUT_ROOT/<name>)");

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Integrate a system recipe and write the snapshot dataset");
  gen->add_option("--system", ga.system, "Recipe name")->check(CLI::IsMember(recipe_names()));
  gen->add_flag("--all-trajectories", ga.all_trajectories, "Write every trajectory, not just the first");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model; writes model.json, loss.csv and config.toml");
  train->add_option("--system", ta.system, "Recipe name")->check(CLI::IsMember(recipe_names()));
  train->add_option("--method", ta.method, "kdla | kdl-alternating | node")->check(CLI::IsMember(method_names()));
  train->add_option("--data", ta.data, "Dataset prefix written by generate (default: generate in memory)");

  EvolveArgs ea;
  auto* evolve = app.add_subcommand("evolve", "Roll a trained model forward from one initial condition");
  evolve->add_option("--model", ea.model, "Model JSON")->required()->check(CLI::ExistingFile);
  evolve->add_option("--x0", ea.x0, "Comma-separated initial state");
  evolve->add_option("--x0-file", ea.x0_file, "Trajectory CSV supplying the initial state")->check(CLI::ExistingFile);
  evolve->add_option("--row", ea.row, "Sample of --x0-file to start from");
  evolve->add_option("--steps", ea.steps, "Number of dt intervals");
  evolve->add_option("--mode", ea.mode, "oo (observable only) or so (state/observable)");
  evolve->add_option("--m", ea.m, "Steps in observable space between re-lifts, comma list for a sweep");

  EvaluateArgs va;
  auto* eval = app.add_subcommand("evaluate", "Compare predicted trajectories with the truth");
  eval->add_option("--truth", va.truth, "Truth trajectory CSV")->check(CLI::ExistingFile);
  eval->add_option("--pred", va.preds, "Predicted trajectory CSV, repeatable")->check(CLI::ExistingFile);
  eval->add_option("--metrics", va.metrics, "Comma list of tracking, energy, spectrum, basin");
  eval->add_option("--model", va.model, "Model JSON for the basin metric")->check(CLI::ExistingFile);
  eval->add_option("--mode", va.mode, "Rollout mode for the basin metric");
  eval->add_option("--m", va.m, "m for so rollouts in the basin metric");
  eval->add_option("--grid", va.grid, "Basin grid points per axis")->check(CLI::PositiveNumber);

  SpectrumArgs sa;
  auto* spec = app.add_subcommand("spectrum", "Power spectrum of a trajectory CSV");
  spec->add_option("--input", sa.input, "Trajectory CSV")->required()->check(CLI::ExistingFile);
  spec->add_option("--probe", sa.probe, "Use one component instead of the component average");

  std::string case_name;
  auto* rep = app.add_subcommand("reproduce", "Run one case end to end");
  rep->add_option("case", case_name, "Case name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (c.threads > 0) omp_set_num_threads(c.threads);

  try {
    if (*gen) cmd_generate(c, ga);
    else if (*train) cmd_train(c, ta);
    else if (*evolve) cmd_evolve(c, ea);
    else if (*eval) cmd_evaluate(c, va);
    else if (*spec) cmd_spectrum(c, sa);
    else if (*rep) cmd_reproduce(c, case_name);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
