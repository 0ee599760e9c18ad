#include <cmath>
#include <ostream>

#include <json.hpp>

#include "kdla/errors.hpp"
#include "kdla/io.hpp"
#include "kdla/metrics.hpp"
#include "kdla/pipeline.hpp"
#include "kdla/rng.hpp"

namespace kdla {
namespace {

using nlohmann::json;

constexpr std::uint64_t kTestStream = 1'000'000;

// Re-throws with the stage name prepended, keeping the error category.
template <class F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const TrainingError& e) {
    throw TrainingError("stage '" + name + "': " + e.what(), e.last_good_epoch(), e.last_good());
  } catch (const NumericalError& e) {
    throw NumericalError("stage '" + name + "': " + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError("stage '" + name + "': " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError("stage '" + name + "': " + e.what());
  } catch (const DomainError& e) {
    throw DomainError("stage '" + name + "': " + e.what());
  }
}

struct Ctx {
  const ReproduceOptions& opt;
  Recipe recipe;
  json summary = json::object();

  void log(const std::string& msg) const {
    if (opt.log) *opt.log << msg << std::endl;
  }
  fs::path path(const std::string& name) const { return opt.out_dir / name; }
};

struct Labeled {
  std::string label;  // e.g. kdla_oo
  std::vector<Trajectory> trajs;
};

struct TestSet {
  Matrix x0;                       // n x members
  std::vector<Trajectory> truth;   // at model resolution
};

TrainedModel train_method(Ctx& ctx, const SnapshotDataset& data, const std::string& method, const std::string& label,
                          const std::map<std::string, std::string>& extra = {}) {
  RunConfig cfg = default_run_config(ctx.recipe.name, method, ctx.opt.paper_scale);
  cfg.seed = ctx.opt.seed;
  apply_overrides(cfg, extra);
  apply_overrides(cfg, ctx.opt.overrides);
  validate(cfg, data.n);
  write_text(ctx.path("config_" + label + ".toml"), render_config(cfg));
  ctx.log("[" + label + "] training " + method + " for " + std::to_string(cfg.epochs) + " epochs on " +
          std::to_string(data.size()) + " pairs");
  const std::size_t every = std::max<std::size_t>(1, cfg.epochs / 10);
  TrainedModel model = stage("train " + label, [&] {
    return train_model(cfg, data, [&](std::size_t e, double loss) {
      if ((e + 1) % every == 0 || e + 1 == cfg.epochs)
        ctx.log("[" + label + "] epoch " + std::to_string(e + 1) + "/" + std::to_string(cfg.epochs) + " loss " +
                format_double(loss));
    });
  });
  std::visit([&](const auto& m) { save_model(ctx.path("model_" + label + ".json"), m); }, model);
  const auto& curve = loss_curve(model);
  std::vector<double> epochs(curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i) epochs[i] = static_cast<double>(i);
  write_csv(ctx.path("loss_" + label + ".csv"), {"epoch", "loss"}, {epochs, curve});
  ctx.summary["final_loss"][label] = curve.empty() ? 0.0 : curve.back();
  if (const auto* k = std::get_if<KoopmanModel>(&model)) {
    const EigenReport r = spectrum_report(*k);
    std::vector<double> re, im;
    for (const auto& l : r.eigenvalues) {
      re.push_back(l.real());
      im.push_back(l.imag());
    }
    write_csv(ctx.path("eigenvalues_" + label + ".csv"), {"re", "im", "modulus", "unit_circle_distance"},
              {re, im, r.modulus, r.unit_circle_distance});
    ctx.summary["spectral_radius"][label] = r.spectral_radius;
    ctx.summary["eigenvalues_outside_1.05"][label] = r.outside_count;
  }
  return model;
}

// Test trajectories from fresh initial conditions (streams not used for training).
TestSet make_tests(const Ctx& ctx, std::size_t members, std::size_t steps, bool on_attractor) {
  const Recipe& r = ctx.recipe;
  const auto warmup = on_attractor ? static_cast<std::size_t>(std::llround(r.transient / r.dt)) : 0;
  TestSet t;
  t.truth.resize(members);
  std::vector<std::string> errors(members);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < members; ++i) {
    try {
      const auto ic = recipe_initial_condition(r, kTestStream + i);
      Trajectory full = integrate(r, ic, warmup + steps);
      if (full.truncated()) throw NumericalError(full.diagnostic);
      full.states = full.states.col_block(warmup, steps + 1);
      full.t0 = 0.0;
      t.truth[i] = std::move(full);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw NumericalError("test trajectory: " + e);
  t.x0 = Matrix(t.truth.front().dim(), members);
  for (std::size_t i = 0; i < members; ++i)
    for (std::size_t k = 0; k < t.x0.rows(); ++k) t.x0(k, i) = t.truth[i].states(k, 0);
  return t;
}

void write_tracking(Ctx& ctx, const TestSet& test, const std::vector<Labeled>& preds, const std::string& file,
                    const std::vector<double>& report_times) {
  std::vector<std::string> header{"t"};
  std::vector<std::vector<double>> cols;
  std::size_t len = test.truth.front().states.cols();
  std::vector<EnsembleReport> reports;
  for (const auto& p : preds) {
    reports.push_back(tracking_error(test.truth, p.trajs));
    len = std::min(len, reports.back().times.size());
  }
  cols.emplace_back(reports.front().times.begin(), reports.front().times.begin() + static_cast<std::ptrdiff_t>(len));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    header.push_back(preds[i].label);
    cols.emplace_back(reports[i].mean_error.begin(), reports[i].mean_error.begin() + static_cast<std::ptrdiff_t>(len));
    for (double t : report_times)
      ctx.summary["tracking_error"][preds[i].label]["t=" + format_double(t)] = reports[i].at_time(t);
  }
  ctx.summary["tracking_normalizer"] = reports.front().normalizer;
  ctx.summary["tracking_members"] = test.truth.size();
  write_csv(ctx.path(file), header, cols);
}

void write_examples(Ctx& ctx, const TestSet& test, const std::vector<Labeled>& preds) {
  write_trajectory_csv(ctx.path("traj_truth.csv"), test.truth.front());
  for (const auto& p : preds) write_trajectory_csv(ctx.path("traj_" + p.label + ".csv"), p.trajs.front());
}

void write_energy(Ctx& ctx, const TestSet& test, const std::vector<Labeled>& preds) {
  const auto& truth = test.truth.front();
  std::vector<std::string> header{"t", "truth"};
  std::vector<std::vector<double>> cols{truth.times(), energy(truth)};
  std::size_t len = truth.states.cols();
  for (const auto& p : preds) len = std::min(len, p.trajs.front().states.cols());
  for (const auto& p : preds) {
    header.push_back(p.label);
    cols.push_back(energy(p.trajs.front()));
    const auto& e = cols.back();
    ctx.summary["energy_change"][p.label] = (e[len - 1] - e[0]) / e[0];
  }
  for (auto& c : cols) c.resize(len);
  write_csv(ctx.path("energy.csv"), header, cols);
}

void write_spectrum(Ctx& ctx, const TestSet& test, const std::vector<Labeled>& preds) {
  const SpectrumReport truth = power_spectrum(test.truth.front());
  std::vector<std::string> header{"k", "frequency", "truth"};
  std::vector<std::vector<double>> cols{truth.wavenumbers, truth.frequencies, truth.power};
  ctx.summary["dominant_bin"]["truth"] = truth.dominant_bin();
  for (const auto& p : preds) {
    if (p.trajs.front().states.cols() != test.truth.front().states.cols()) continue;  // truncated rollout
    const SpectrumReport s = power_spectrum(p.trajs.front());
    header.push_back(p.label);
    cols.push_back(s.power);
    ctx.summary["dominant_bin"][p.label] = s.dominant_bin();
  }
  write_csv(ctx.path("spectrum.csv"), header, cols);
}

void write_probes(Ctx& ctx, const TestSet& test, const std::vector<Labeled>& preds, const std::vector<double>& grid,
                  const std::vector<double>& positions) {
  std::vector<std::string> header{"t"};
  std::vector<std::vector<double>> cols{test.truth.front().times()};
  std::size_t len = cols.front().size();
  auto add = [&](const std::string& label, const Trajectory& tr) {
    len = std::min(len, tr.states.cols());
    for (double x : positions) {
      std::size_t j = 0;
      for (std::size_t i = 1; i < grid.size(); ++i)
        if (std::abs(grid[i] - x) < std::abs(grid[j] - x)) j = i;
      header.push_back(label + "_x=" + format_double(x));
      const auto row = tr.states.row(j);
      cols.emplace_back(row.begin(), row.end());
    }
  };
  add("truth", test.truth.front());
  for (const auto& p : preds) add(p.label, p.trajs.front());
  for (auto& c : cols) c.resize(len);
  write_csv(ctx.path("probes.csv"), header, cols);
}

void write_basin(Ctx& ctx, const std::string& label, const BasinReport& b) {
  std::vector<double> x1, x2, lab, div;
  for (std::size_t j = 0; j < b.labels.size(); ++j) {
    x1.push_back(b.initial_conditions(0, j));
    x2.push_back(b.initial_conditions(1, j));
    lab.push_back(b.labels[j]);
    div.push_back(b.diverged[j] ? 1.0 : 0.0);
  }
  write_csv(ctx.path("basin_" + label + ".csv"), {"x1_0", "x2_0", "final_x1", "label", "diverged"},
            {x1, x2, b.final_x1, lab, div});
}

GeneratedData make_data(Ctx& ctx) {
  ctx.log("[data] generating " + ctx.recipe.name + " (" + std::to_string(ctx.recipe.trajectories) + " trajectories)");
  GeneratedData g = stage("generate", [&] { return generate_dataset(ctx.recipe); });
  json p;
  p["version"] = kDatasetVersion;
  p["system"] = g.dataset.provenance.system;
  p["recipe"] = g.dataset.provenance.recipe;
  p["seed"] = g.dataset.provenance.seed;
  p["trajectories"] = g.dataset.provenance.trajectories;
  p["transient"] = g.dataset.provenance.transient;
  p["dt"] = g.dataset.dt;
  p["n"] = g.dataset.n;
  p["M"] = g.dataset.size();
  p["warnings"] = g.dataset.provenance.warnings;
  p["shift_pairs"] = ctx.recipe.shift_pairs;
  for (const auto& [k, v] : g.dataset.provenance.parameters) p["parameters"][k] = v;
  if (std::holds_alternative<Kse>(ctx.recipe.system)) p["initial_condition"] = "Fourier modes 1..8, unit normal coefficients";
  write_text(ctx.path("dataset.json"), p.dump(1) + "\n");
  for (const auto& w : g.dataset.provenance.warnings) ctx.log("[data] warning: " + w);
  return g;
}

Labeled roll(const std::string& label, const TrainedModel& m, const TestSet& t, std::size_t steps,
             const std::string& mode = "oo", std::size_t sweep = 1) {
  return {label, stage("rollout " + label, [&] { return rollout(m, t.x0, steps, mode, sweep); })};
}

void case_duffing(Ctx& ctx) {
  const GeneratedData g = make_data(ctx);
  const auto kdla = train_method(ctx, g.dataset, "kdla", "kdla");
  const auto kdl = train_method(ctx, g.dataset, "kdl-alternating", "kdl");
  const auto node = train_method(ctx, g.dataset, "node", "node");
  const std::size_t steps = 100;
  const TestSet test = stage("test set", [&] { return make_tests(ctx, 1000, steps, false); });
  std::vector<Labeled> preds{roll("kdla_oo", kdla, test, steps), roll("kdl_oo", kdl, test, steps),
                             roll("kdl_so", kdl, test, steps, "so", 1), roll("node", node, test, steps)};
  write_tracking(ctx, test, preds, "tracking.csv", {2.0, 5.0, 10.0});
  write_examples(ctx, test, preds);

  std::vector<Labeled> sweep;
  for (std::size_t m : {1, 5, 15}) sweep.push_back(roll("kdl_so_m" + std::to_string(m), kdl, test, steps, "so", m));
  write_tracking(ctx, test, sweep, "msweep_error.csv", {5.0});
  for (const auto& s : sweep) {
    write_trajectory_csv(ctx.path("msweep_" + s.label + ".csv"), s.trajs.front());
    // the example trajectory on its own, normalized by its own mean state norm
    const EnsembleReport one = tracking_error({test.truth.front()}, {s.trajs.front()});
    ctx.summary["msweep_example_error"][s.label] = one.at_time(5.0);
  }

  constexpr std::size_t kGrid = 20;
  Matrix ics(2, kGrid * kGrid);
  for (std::size_t i = 0; i < kGrid; ++i)
    for (std::size_t j = 0; j < kGrid; ++j) {
      ics(0, i * kGrid + j) = -2.0 + 4.0 * (static_cast<double>(j) + 0.5) / kGrid;
      ics(1, i * kGrid + j) = -2.0 + 4.0 * (static_cast<double>(i) + 0.5) / kGrid;
    }
  const double dt = ctx.recipe.dt;
  const Recipe& r = ctx.recipe;
  const BasinReport truth = basin_map(
      [&](const Matrix& x0, std::size_t n) {
        return rk4_ensemble(r.system, x0, r.dt / static_cast<double>(r.substeps), n, r.substeps);
      },
      ics, dt);
  write_basin(ctx, "truth", truth);
  for (const auto& [label, model, mode] : {std::tuple{"kdl_so", &kdl, "so"}, std::tuple{"kdla_oo", &kdla, "oo"},
                                           std::tuple{"node", &node, "oo"}}) {
    const BasinReport b = basin_map(
        [&, mode = mode, model = model](const Matrix& x0, std::size_t n) { return rollout(*model, x0, n, mode, 1); },
        ics, dt);
    write_basin(ctx, label, b);
    ctx.summary["basin_agreement"][label] = basin_agreement(truth, b);
  }
}

void case_appendix_a(Ctx& ctx) {
  ctx.recipe = make_recipe("duffing", ctx.opt.paper_scale, ctx.opt.seed);
  const GeneratedData g = make_data(ctx);
  const auto tanh25 = train_method(ctx, g.dataset, "kdl-alternating", "kdl_tanh25");
  const auto elu100 = train_method(ctx, g.dataset, "kdl-alternating", "kdl_elu100",
                                   {{"arch.trainable", "100"},
                                    {"arch.activations", "elu,elu,elu,elu"},
                                    {"arch.include_constant", "false"}});
  const std::size_t steps = 100;
  const TestSet test = stage("test set", [&] { return make_tests(ctx, 1000, steps, false); });
  std::vector<Labeled> preds{roll("kdl_tanh25_oo", tanh25, test, steps), roll("kdl_elu100_oo", elu100, test, steps)};
  write_tracking(ctx, test, preds, "tracking.csv", {2.0, 5.0, 10.0});
  write_examples(ctx, test, preds);
}

struct GenericCase {
  std::vector<std::pair<std::string, std::string>> methods;  // (method, label)
  std::size_t steps;
  std::size_t members;
  bool on_attractor;
  std::vector<double> report_times;
  bool energy = false;
  bool spectrum = false;
  std::vector<double> probes;
};

void case_generic(Ctx& ctx, const GenericCase& c) {
  const GeneratedData g = make_data(ctx);
  std::vector<std::pair<std::string, TrainedModel>> models;
  for (const auto& [method, label] : c.methods) models.emplace_back(label, train_method(ctx, g.dataset, method, label));
  const TestSet test = stage("test set", [&] { return make_tests(ctx, c.members, c.steps, c.on_attractor); });
  std::vector<Labeled> preds;
  for (const auto& [label, model] : models)
    preds.push_back(roll(std::holds_alternative<NodeModel>(model) ? label : label + "_oo", model, test, c.steps));
  write_tracking(ctx, test, preds, "tracking.csv", c.report_times);
  write_examples(ctx, test, preds);
  if (c.energy) write_energy(ctx, test, preds);
  if (c.spectrum) write_spectrum(ctx, test, preds);
  if (!c.probes.empty()) {
    std::vector<double> grid;
    if (const auto* k = std::get_if<Kse>(&ctx.recipe.system)) grid = kse_grid(k->length, k->grid_points);
    if (const auto* b = std::get_if<Burgers>(&ctx.recipe.system)) grid = burgers_grid(b->output_points);
    write_probes(ctx, test, preds, grid, c.probes);
  }
}

void case_stuart_landau(Ctx& ctx) {
  const GeneratedData g = make_data(ctx);
  const auto kdla = train_method(ctx, g.dataset, "kdla", "kdla");
  const auto node = train_method(ctx, g.dataset, "node", "node");
  TestSet test;
  test.truth = {g.trajectories.front()};
  test.x0 = test.truth.front().states.col_block(0, 1);
  const std::size_t steps = test.truth.front().steps();
  std::vector<Labeled> preds{roll("kdla_oo", kdla, test, steps), roll("node", node, test, steps)};
  write_tracking(ctx, test, preds, "tracking.csv", {5.0, 10.0, 20.0});
  write_examples(ctx, test, preds);
  const auto times = test.truth.front().times();
  std::vector<double> exact, kd, nd, truth;
  const double r0 = test.x0(0, 0);
  for (std::size_t j = 0; j < times.size(); ++j) {
    exact.push_back(stuart_landau_exact(r0, times[j]));
    truth.push_back(test.truth.front().states(0, j));
    kd.push_back(j < preds[0].trajs.front().states.cols() ? preds[0].trajs.front().states(0, j) : NAN);
    nd.push_back(j < preds[1].trajs.front().states.cols() ? preds[1].trajs.front().states(0, j) : NAN);
  }
  write_csv(ctx.path("stuart_landau.csv"), {"t", "exact", "rk4", "kdla_oo", "node"}, {times, exact, truth, kd, nd});
  double worst = 0.0;
  for (std::size_t j = 0; j < times.size(); ++j) worst = std::max(worst, std::abs(kd[j] - exact[j]));
  ctx.summary["kdla_max_state_error"] = worst;
}

}  // namespace

std::vector<std::string> reproduce_cases() {
  return {"duffing", "rossler", "cylinder", "burgers", "kse-tw", "kse-beating", "kse-chaos", "stuart-landau",
          "appendix-a"};
}

void reproduce(const std::string& name, const ReproduceOptions& options) {
  const auto cases = reproduce_cases();
  if (std::find(cases.begin(), cases.end(), name) == cases.end()) {
    std::string valid;
    for (const auto& c : cases) valid += (valid.empty() ? "" : ", ") + c;
    throw ConfigError("unknown case '" + name + "' (valid cases: " + valid + ")");
  }
  fs::create_directories(options.out_dir);
  Ctx ctx{options, name == "appendix-a" ? Recipe{} : make_recipe(name, options.paper_scale, options.seed)};
  ctx.summary["case"] = name;
  ctx.summary["seed"] = options.seed;
  ctx.summary["paper_scale"] = options.paper_scale;

  if (name == "duffing") case_duffing(ctx);
  else if (name == "appendix-a") case_appendix_a(ctx);
  else if (name == "stuart-landau") case_stuart_landau(ctx);
  else if (name == "rossler")
    case_generic(ctx, {{{"kdla", "kdla"}, {"node", "node"}}, 1000, 10, true, {1.0, 5.0, 10.0}, true, true, {}});
  else if (name == "cylinder")
    case_generic(ctx, {{{"kdla", "kdla"}, {"node", "node"}}, 200, 100, false, {5.0, 25.0, 50.0}, true, false, {}});
  else if (name == "burgers")
    case_generic(ctx, {{{"kdla", "kdla"}, {"node", "node"}}, 200, 10, false, {1.0, 10.0, 20.0}, true, true, {0.0, 0.5}});
  else if (name == "kse-tw")
    case_generic(ctx, {{{"kdla", "kdla"}, {"node", "node"}}, 1000, 1, true, {10.0, 100.0, 250.0}, true, true, {0.0, 2.5}});
  else if (name == "kse-beating")
    case_generic(ctx, {{{"kdl-alternating", "kdl"}, {"kdla", "kdla"}, {"node", "node"}},
                       5000,
                       1,
                       true,
                       {10.0, 100.0, 250.0},
                       true,
                       true,
                       {-2.5, 0.0, 2.5}});
  else if (name == "kse-chaos")
    case_generic(ctx, {{{"kdla", "kdla"}, {"node", "node"}}, 1000, 10, true, {5.0, 10.0, 20.0}, true, true, {}});

  write_text(ctx.path("summary.json"), ctx.summary.dump(1) + "\n");
  ctx.log("[done] outputs in " + options.out_dir.string());
}

}  // namespace kdla
