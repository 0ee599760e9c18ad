#include <algorithm>
#include <charconv>
#include <sstream>

#include "kdla/errors.hpp"
#include "kdla/io.hpp"
#include "kdla/pipeline.hpp"

namespace kdla {
namespace {

std::vector<Activation> repeat(Activation a, std::size_t n) { return std::vector<Activation>(n, a); }

struct Budget {
  std::size_t desk;
  std::size_t paper;
};

// Desk budgets keep each reproduce case within minutes on one core.
Budget kdla_epochs(const std::string& s) {
  if (s == "stuart-landau") return {3000, 10000};
  if (s == "kse-chaos") return {60, 1000};
  if (s == "kse-beating") return {100, 1000};
  if (s == "kse-tw" || s == "burgers") return {150, 1000};
  return {300, 3000};
}

// 500 Stuart-Landau pairs make two minibatches per epoch; the KSE L=22 vector field needs longer
Budget node_epochs(const std::string& s) {
  if (s == "stuart-landau") return {2000, 5000};
  if (s == "kse-chaos") return {300, 1000};
  return {100, 1000};
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(v);
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

DictionaryArch arch_of(const RunConfig& c) { return {c.hidden, c.trainable, c.activations, c.include_constant}; }

}  // namespace

std::vector<std::string> method_names() { return {"kdla", "kdl-alternating", "node"}; }

RunConfig default_run_config(const std::string& system, const std::string& method, bool paper_scale) {
  const Recipe recipe = make_recipe(system);  // validates the name
  RunConfig c;
  c.system = system;
  c.method = method;
  c.paper_scale = paper_scale;
  if (method == "kdla") {
    c.hidden = {100, 100, 100};
    c.trainable = 100;
    c.activations = repeat(Activation::elu, 4);
    if (system == "kse-beating") c.trainable = 50;
    if (system == "kse-chaos") {
      c.hidden = {250, 250, 250};
      c.trainable = 150;
    }
    if (system == "stuart-landau") {
      c.hidden = {50, 50, 50};
      c.trainable = 25;
      c.activations.back() = Activation::linear;
    }
    c.lifted_dim = recipe.planned_lifted_dim;
    const Budget b = kdla_epochs(system);
    c.epochs = paper_scale ? b.paper : b.desk;
    c.lr_start = 1e-3;
    c.lr_end = 1e-4;
    c.budget_estimated = true;
  } else if (method == "kdl-alternating") {
    c.hidden = {100, 100, 100};
    c.trainable = system == "kse-beating" ? 50 : 22;
    c.activations = repeat(Activation::tanh, 3);
    c.activations.push_back(Activation::linear);
    c.include_constant = true;
    c.epochs = paper_scale ? 3000 : 300;
    c.epochs_per_cycle = 1;
    c.batch_size = 5000;
    c.lr_start = c.lr_end = 1e-4;
    c.tikhonov = 0.1;
    c.budget_estimated = system != "duffing";
  } else if (method == "node") {
    c.hidden = {200, 200};
    c.activations = {Activation::sigmoid, Activation::sigmoid, Activation::linear};
    const Budget b = node_epochs(system);
    c.epochs = paper_scale ? b.paper : b.desk;
    c.batch_size = 256;
    c.lr_start = 1e-3;
    c.lr_end = 1e-4;
    c.budget_estimated = true;
  } else {
    throw ConfigError("unknown method '" + method + "' (valid: kdla, kdl-alternating, node)");
  }
  return c;
}

void apply_overrides(RunConfig& c, const std::map<std::string, std::string>& values) {
  for (const auto& [key, v] : values) {
    if (key == "system") c.system = v;
    else if (key == "method") c.method = v;
    else if (key == "seed") c.seed = parse_size(key, v);
    else if (key == "arch.hidden") {
      c.hidden.clear();
      for (const auto& s : split_list(v)) c.hidden.push_back(parse_size(key, s));
    } else if (key == "arch.trainable") c.trainable = parse_size(key, v);
    else if (key == "arch.activations") {
      c.activations.clear();
      for (const auto& s : split_list(v)) c.activations.push_back(parse_activation(s));
    } else if (key == "arch.include_constant") c.include_constant = parse_bool(key, v);
    else if (key == "arch.lifted_dim") c.lifted_dim = parse_size(key, v);
    else if (key == "train.epochs") c.epochs = parse_size(key, v);
    else if (key == "train.epochs_per_cycle") c.epochs_per_cycle = parse_size(key, v);
    else if (key == "train.lr_start") c.lr_start = parse_real(key, v);
    else if (key == "train.lr_end") c.lr_end = parse_real(key, v);
    else if (key == "train.batch_size") c.batch_size = parse_size(key, v);
    else if (key == "train.k_set_size") c.k_set_size = parse_size(key, v);
    else if (key == "train.rcond") c.rcond = parse_real(key, v);
    else if (key == "train.tikhonov") c.tikhonov = parse_real(key, v);
    else if (key == "train.substeps") c.substeps = parse_size(key, v);
    else if (key == "train.early_stop") c.early_stop = parse_bool(key, v);
    else if (key == "evolve.mode") c.mode = v;
    else if (key == "evolve.m") c.m = parse_size(key, v);
    else if (key == "paper_scale") c.paper_scale = parse_bool(key, v);
    else if (key == "budget_estimated") c.budget_estimated = parse_bool(key, v);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
}

void validate(const RunConfig& c, std::size_t n) {
  const auto methods = method_names();
  if (std::find(methods.begin(), methods.end(), c.method) == methods.end())
    throw ConfigError("unknown method '" + c.method + "' (valid: kdla, kdl-alternating, node)");
  if (c.mode != "oo" && c.mode != "so") throw ConfigError("evolve.mode must be oo or so, got '" + c.mode + "'");
  if (c.m < 1) throw ConfigError("evolve.m must be >= 1");
  if (c.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (!(c.lr_start > 0) || !(c.lr_end > 0)) throw ConfigError("learning rates must be positive");
  if (c.rcond < 0) throw ConfigError("train.rcond must be >= 0");
  if (c.tikhonov < 0) throw ConfigError("train.tikhonov must be >= 0");
  for (auto h : c.hidden)
    if (h == 0) throw ConfigError("arch.hidden: layer widths must be positive");
  if (c.method == "node") {
    if (c.activations.size() != c.hidden.size() + 1)
      throw ConfigError("arch.activations: need " + std::to_string(c.hidden.size() + 1) + " entries (hidden layers + output)");
    if (c.substeps < 1) throw ConfigError("train.substeps must be >= 1");
    return;
  }
  if (c.trainable == 0) {
    if (!c.hidden.empty() || !c.activations.empty())
      throw ConfigError("arch: a dictionary without trainable outputs cannot have hidden layers");
  } else if (c.activations.size() != c.hidden.size() + 1) {
    throw ConfigError("arch.activations: need " + std::to_string(c.hidden.size() + 1) +
                      " entries (hidden layers + output), got " + std::to_string(c.activations.size()));
  }
  const std::size_t d = n + (c.include_constant ? 1 : 0) + c.trainable;
  if (c.lifted_dim != 0 && c.lifted_dim != d) {
    throw ConfigError("arch: dictionary output width " + std::to_string(c.trainable) + " gives D = " + std::to_string(d) +
                      " for n = " + std::to_string(n) + ", but arch.lifted_dim = " + std::to_string(c.lifted_dim));
  }
}

std::string render_config(const RunConfig& c) {
  std::ostringstream out;
  out << "system = " << c.system << "\n"
      << "method = " << c.method << "\n"
      << "seed = " << c.seed << "\n"
      << "paper_scale = " << (c.paper_scale ? "true" : "false") << "\n"
      << "budget_estimated = " << (c.budget_estimated ? "true" : "false") << "\n"
      << "\n[arch]\n"
      << "hidden = " << join(c.hidden, [](std::size_t h) { return std::to_string(h); }) << "\n"
      << "trainable = " << c.trainable << "\n"
      << "activations = " << join(c.activations, [](Activation a) { return to_string(a); }) << "\n"
      << "include_constant = " << (c.include_constant ? "true" : "false") << "\n"
      << "lifted_dim = " << c.lifted_dim << "\n"
      << "\n[train]\n"
      << "epochs = " << c.epochs << "\n"
      << "epochs_per_cycle = " << c.epochs_per_cycle << "\n"
      << "lr_start = " << format_double(c.lr_start) << "\n"
      << "lr_end = " << format_double(c.lr_end) << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "k_set_size = " << c.k_set_size << "\n"
      << "rcond = " << format_double(c.rcond) << "\n"
      << "tikhonov = " << format_double(c.tikhonov) << "\n"
      << "substeps = " << c.substeps << "\n"
      << "early_stop = " << (c.early_stop ? "true" : "false") << "\n"
      << "\n[evolve]\n"
      << "mode = " << c.mode << "\n"
      << "m = " << c.m << "\n";
  return out.str();
}

TrainedModel train_model(const RunConfig& c, const SnapshotDataset& data,
                         const std::function<void(std::size_t, double)>& progress) {
  validate(c, data.n);
  if (c.method == "kdla") {
    KdlaConfig k;
    k.arch = arch_of(c);
    k.epochs = c.epochs;
    k.lr_start = c.lr_start;
    k.lr_end = c.lr_end;
    k.seed = c.seed;
    k.batch_size = c.batch_size;
    k.k_set_size = c.k_set_size;
    k.rcond = c.rcond;
    k.early_stop = c.early_stop;
    k.on_epoch = progress;
    return train_kdla(data, k);
  }
  if (c.method == "kdl-alternating") {
    AlternatingConfig a;
    a.arch = arch_of(c);
    a.cycles = c.epochs;
    a.epochs_per_cycle = c.epochs_per_cycle;
    a.batch_size = c.batch_size == 0 ? data.size() : c.batch_size;
    a.lr_start = c.lr_start;
    a.lr_end = c.lr_end;
    a.tikhonov = c.tikhonov;
    a.seed = c.seed;
    a.on_cycle = progress;
    return train_kdl_alternating(data, a);
  }
  NodeTrainConfig n;
  n.hidden = c.hidden;
  n.activations = c.activations;
  n.epochs = c.epochs;
  n.lr_start = c.lr_start;
  n.lr_end = c.lr_end;
  n.seed = c.seed;
  n.substeps = c.substeps;
  n.batch_size = c.batch_size;
  n.on_epoch = progress;
  return train_node(data, n);
}

std::vector<Trajectory> rollout(const TrainedModel& model, const Matrix& x0, std::size_t steps, const std::string& mode,
                                std::size_t m) {
  if (const auto* node = std::get_if<NodeModel>(&model)) return node_evolve(*node, x0, steps);
  const auto& k = std::get<KoopmanModel>(model);
  if (mode == "oo") return evolve_observable_only(k, x0, steps);
  if (mode == "so") return evolve_state_observable(k, x0, steps, m);
  throw ConfigError("evolution mode must be oo or so, got '" + mode + "'");
}

const std::vector<double>& loss_curve(const TrainedModel& model) {
  if (const auto* node = std::get_if<NodeModel>(&model)) return node->meta.loss_curve;
  return std::get<KoopmanModel>(model).meta.loss_curve;
}

}  // namespace kdla
