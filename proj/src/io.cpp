#include "kdla/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kdla/errors.hpp"

namespace kdla {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

json mlp_to_json(const MlpParams& p) {
  json j;
  j["layer_sizes"] = p.layer_sizes;
  std::vector<std::string> acts;
  for (auto a : p.activations) acts.push_back(to_string(a));
  j["activations"] = acts;
  json w = json::array(), b = json::array();
  for (const auto& m : p.weights) w.push_back(m.values());
  for (const auto& v : p.biases) b.push_back(v);
  j["weights"] = w;
  j["biases"] = b;
  return j;
}

MlpParams mlp_from_json(const json& j) {
  MlpParams p;
  p.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  for (const auto& a : j.at("activations")) p.activations.push_back(parse_activation(a.get<std::string>()));
  const auto& w = j.at("weights");
  const auto& b = j.at("biases");
  if (w.size() + 1 != p.layer_sizes.size() && !(w.empty() && p.layer_sizes.empty()))
    throw ParseError("model: weight count does not match layer_sizes");
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto values = w[i].get<std::vector<double>>();
    const std::size_t r = p.layer_sizes[i + 1], c = p.layer_sizes[i];
    if (values.size() != r * c) throw ParseError("model: weight " + std::to_string(i) + " has the wrong size");
    p.weights.emplace_back(r, c, std::move(values));
    p.biases.push_back(b.at(i).get<std::vector<double>>());
  }
  p.validate();
  return p;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

void check_version(const json& j, const std::string& expected) {
  const auto v = j.value("version", std::string{});
  if (v != expected) throw ParseError("expected version '" + expected + "', found '" + v + "'");
}

template <class F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

json provenance_json(const Provenance& p) {
  json params = json::object();
  for (const auto& [k, v] : p.parameters) params[k] = v;
  return {{"system", p.system},         {"parameters", params},          {"recipe", p.recipe},
          {"seed", p.seed},             {"trajectories", p.trajectories}, {"transient", p.transient},
          {"warnings", p.warnings}};
}

Provenance provenance_from(const json& j) {
  Provenance p;
  p.system = j.value("system", std::string{});
  if (j.contains("parameters"))
    for (const auto& [k, v] : j.at("parameters").items()) p.parameters.emplace_back(k, v.get<double>());
  p.recipe = j.value("recipe", std::string{});
  p.seed = j.value("seed", std::uint64_t{0});
  p.trajectories = j.value("trajectories", std::size_t{0});
  p.transient = j.value("transient", 0.0);
  if (j.contains("warnings")) p.warnings = j.at("warnings").get<std::vector<std::string>>();
  return p;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& field, const fs::path& path, std::size_t line) {
  const std::string f = trim(field);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(f, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (f.empty() || used != f.size())
    throw ParseError(path.string() + ":" + std::to_string(line) + ": not a number: '" + f + "'");
  return v;
}

Matrix read_columns_matrix(const fs::path& path) {
  std::vector<std::string> header;
  const auto rows = read_csv(path, &header);
  Matrix m(header.size(), rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i < header.size(); ++i) m(i, j) = rows[j][i];
  return m;
}

void write_columns_matrix(const fs::path& path, const Matrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) out += (i ? ",x" : "x") + std::to_string(i);
  out += '\n';
  for (std::size_t j = 0; j < m.cols(); ++j) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      if (i) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  write_text(path, out);
}

}  // namespace

std::string to_json(const KoopmanModel& model) {
  model.validate();
  const auto& m = model.meta;
  json j;
  j["version"] = kKoopmanModelVersion;
  j["n"] = model.dictionary.state_dim;
  j["d"] = model.dictionary.trainable_dim();
  j["D"] = model.dictionary.lifted_dim();
  j["include_constant"] = model.dictionary.include_constant;
  j["dt"] = model.dt;
  j["net"] = mlp_to_json(model.dictionary.net);
  j["K"] = model.k.values();
  j["training"] = {{"method", m.method},
                   {"epochs_budget", m.epochs_budget},
                   {"epochs_run", m.epochs_run},
                   {"best_epoch", m.best_epoch},
                   {"early_stopped", m.early_stopped},
                   {"loss_curve", m.loss_curve},
                   {"rcond", m.rcond},
                   {"tikhonov", m.tikhonov},
                   {"seed", m.seed},
                   {"batch_size", m.batch_size},
                   {"lr_start", m.lr_start},
                   {"lr_end", m.lr_end},
                   {"k_refit", m.k_refit}};
  return j.dump(1) + "\n";
}

KoopmanModel koopman_from_json(const std::string& text) {
  const json j = parse_json(text, "koopman model");
  check_version(j, kKoopmanModelVersion);
  return guarded("koopman model", [&] {
    KoopmanModel model;
    model.dictionary.state_dim = j.at("n").get<std::size_t>();
    model.dictionary.include_constant = j.at("include_constant").get<bool>();
    model.dictionary.net = mlp_from_json(j.at("net"));
    model.dt = j.at("dt").get<double>();
    const std::size_t d = model.dictionary.lifted_dim();
    if (j.at("D").get<std::size_t>() != d) throw ParseError("koopman model: D disagrees with the dictionary");
    auto k = j.at("K").get<std::vector<double>>();
    if (k.size() != d * d) throw ParseError("koopman model: K has " + std::to_string(k.size()) + " entries");
    model.k = Matrix(d, d, std::move(k));
    const auto& t = j.at("training");
    auto& m = model.meta;
    m.method = t.value("method", std::string{});
    m.epochs_budget = t.value("epochs_budget", std::size_t{0});
    m.epochs_run = t.value("epochs_run", std::size_t{0});
    m.best_epoch = t.value("best_epoch", std::size_t{0});
    m.early_stopped = t.value("early_stopped", false);
    m.loss_curve = t.value("loss_curve", std::vector<double>{});
    m.rcond = t.value("rcond", kDefaultRcond);
    m.tikhonov = t.value("tikhonov", 0.0);
    m.seed = t.value("seed", std::uint64_t{0});
    m.batch_size = t.value("batch_size", std::size_t{0});
    m.lr_start = t.value("lr_start", 0.0);
    m.lr_end = t.value("lr_end", 0.0);
    m.k_refit = t.value("k_refit", true);
    model.validate();
    return model;
  });
}

std::string to_json(const NodeModel& model) {
  model.validate();
  const auto& m = model.meta;
  json j;
  j["version"] = kNodeModelVersion;
  j["n"] = model.state_dim();
  j["dt"] = model.dt;
  j["substeps"] = model.substeps;
  j["net"] = mlp_to_json(model.net);
  j["training"] = {{"method", "node"},
                   {"epochs_budget", m.epochs_budget},
                   {"epochs_run", m.epochs_run},
                   {"best_epoch", m.best_epoch},
                   {"loss_curve", m.loss_curve},
                   {"seed", m.seed},
                   {"batch_size", m.batch_size},
                   {"lr_start", m.lr_start},
                   {"lr_end", m.lr_end}};
  return j.dump(1) + "\n";
}

NodeModel node_from_json(const std::string& text) {
  const json j = parse_json(text, "node model");
  check_version(j, kNodeModelVersion);
  return guarded("node model", [&] {
    NodeModel model;
    model.net = mlp_from_json(j.at("net"));
    model.dt = j.at("dt").get<double>();
    model.substeps = j.at("substeps").get<std::size_t>();
    const auto& t = j.at("training");
    auto& m = model.meta;
    m.epochs_budget = t.value("epochs_budget", std::size_t{0});
    m.epochs_run = t.value("epochs_run", std::size_t{0});
    m.best_epoch = t.value("best_epoch", std::size_t{0});
    m.loss_curve = t.value("loss_curve", std::vector<double>{});
    m.seed = t.value("seed", std::uint64_t{0});
    m.batch_size = t.value("batch_size", std::size_t{0});
    m.lr_start = t.value("lr_start", 0.0);
    m.lr_end = t.value("lr_end", 0.0);
    model.validate();
    return model;
  });
}

void save_model(const fs::path& path, const KoopmanModel& model) { write_text(path, to_json(model)); }
void save_model(const fs::path& path, const NodeModel& model) { write_text(path, to_json(model)); }

std::string model_version(const fs::path& path) {
  const json j = parse_json(read_text(path), path.string());
  if (!j.is_object() || !j.contains("version")) throw ParseError(path.string() + ": no version field");
  return j.at("version").get<std::string>();
}

KoopmanModel load_koopman_model(const fs::path& path) { return koopman_from_json(read_text(path)); }
NodeModel load_node_model(const fs::path& path) { return node_from_json(read_text(path)); }

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns) {
  require_shape(header.size() == columns.size(), "write_csv: header and column counts differ");
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns) require_shape(c.size() == rows, "write_csv: columns differ in length");
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out += ',';
      out += format_double(columns[c][r]);
    }
    out += '\n';
  }
  write_text(path, out);
}

std::vector<std::vector<double>> read_csv(const fs::path& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ":1: missing header row");
  std::vector<std::string> names;
  for (const auto& f : split(line, ',')) names.push_back(trim(f));
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != names.size())
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(names.size()) +
                       " fields, found " + std::to_string(fields.size()));
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_number(f, path, lineno));
    rows.push_back(std::move(row));
  }
  if (header) *header = std::move(names);
  return rows;
}

void write_trajectory_csv(const fs::path& path, const Trajectory& traj) {
  std::string out = "t";
  for (std::size_t i = 0; i < traj.dim(); ++i) out += ",x" + std::to_string(i);
  out += '\n';
  const auto times = traj.times();
  for (std::size_t j = 0; j < traj.states.cols(); ++j) {
    out += format_double(times[j]);
    for (std::size_t i = 0; i < traj.dim(); ++i) {
      out += ',';
      out += format_double(traj.states(i, j));
    }
    out += '\n';
  }
  write_text(path, out);
}

Trajectory read_trajectory_csv(const fs::path& path) {
  std::vector<std::string> header;
  const auto rows = read_csv(path, &header);
  if (header.size() < 2 || header.front() != "t")
    throw ParseError(path.string() + ":1: header must be t,x0,...");
  if (rows.empty()) throw ParseError(path.string() + ": no samples");
  Trajectory t;
  t.source = path.stem().string();
  t.t0 = rows.front()[0];
  t.dt = rows.size() > 1 ? rows[1][0] - rows[0][0] : 0.0;
  for (std::size_t r = 2; r < rows.size(); ++r) {
    const double step = rows[r][0] - rows[r - 1][0];
    if (std::abs(step - t.dt) > 1e-9 * std::max(1.0, std::abs(t.dt)))
      throw ParseError(path.string() + ":" + std::to_string(r + 2) + ": non-uniform time step");
  }
  t.states = Matrix(header.size() - 1, rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i + 1 < header.size(); ++i) t.states(i, j) = rows[j][i + 1];
  return t;
}

void save_trajectory(const fs::path& csv_path, const Trajectory& traj, const Provenance& provenance) {
  write_trajectory_csv(csv_path, traj);
  json j = provenance_json(provenance);
  j["dt"] = traj.dt;
  j["t0"] = traj.t0;
  j["samples"] = traj.states.cols();
  if (traj.truncated()) j["diagnostic"] = traj.diagnostic;
  fs::path side = csv_path;
  side.replace_extension(".json");
  write_text(side, j.dump(1) + "\n");
}

void save_dataset(const fs::path& prefix, const SnapshotDataset& data) {
  data.validate();
  const std::string p = prefix.string();
  write_columns_matrix(p + "_xt.csv", data.x_t);
  write_columns_matrix(p + "_xtdt.csv", data.x_tdt);
  json j = provenance_json(data.provenance);
  j["version"] = kDatasetVersion;
  j["n"] = data.n;
  j["M"] = data.size();
  j["dt"] = data.dt;
  write_text(p + ".json", j.dump(1) + "\n");
}

SnapshotDataset load_dataset(const fs::path& prefix) {
  const std::string p = prefix.string();
  const json j = parse_json(read_text(p + ".json"), p + ".json");
  check_version(j, kDatasetVersion);
  return guarded(p + ".json", [&] {
    SnapshotDataset d;
    d.n = j.at("n").get<std::size_t>();
    d.dt = j.at("dt").get<double>();
    d.provenance = provenance_from(j);
    d.x_t = read_columns_matrix(p + "_xt.csv");
    d.x_tdt = read_columns_matrix(p + "_xtdt.csv");
    const auto m = j.at("M").get<std::size_t>();
    if (d.x_t.cols() != m || d.x_tdt.cols() != m)
      throw ParseError(p + ": pair count disagrees with sidecar (M = " + std::to_string(m) + ", files hold " +
                       std::to_string(d.x_t.cols()) + " and " + std::to_string(d.x_tdt.cols()) + ")");
    if (d.x_t.rows() != d.n || d.x_tdt.rows() != d.n) throw ParseError(p + ": column count disagrees with n");
    d.validate();
    return d;
  });
}

std::map<std::string, std::string> parse_config(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParseError(where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + "expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(where + "empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!section.empty()) key = section + "." + key;
    if (!out.emplace(key, value).second) throw ParseError(where + "duplicate key '" + key + "'");
  }
  return out;
}

std::map<std::string, std::string> load_config(const fs::path& path) {
  return parse_config(read_text(path), path.string());
}

}  // namespace kdla
