#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kdla/dataset.hpp"
#include "kdla/errors.hpp"
#include "kdla/koopman.hpp"
#include "kdla/node.hpp"

namespace kdla {

namespace fs = std::filesystem;

/// Malformed file contents. The message names the file and line where possible.
class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

inline constexpr const char* kKoopmanModelVersion = "kdla-model/1";
inline constexpr const char* kNodeModelVersion = "node-model/1";
inline constexpr const char* kDatasetVersion = "kdla-data/1";

/// f64 with 17 significant digits.
std::string format_double(double v);

std::string to_json(const KoopmanModel& model);
std::string to_json(const NodeModel& model);
KoopmanModel koopman_from_json(const std::string& text);
NodeModel node_from_json(const std::string& text);

void save_model(const fs::path& path, const KoopmanModel& model);
void save_model(const fs::path& path, const NodeModel& model);
/// "kdla-model/1" or "node-model/1".
std::string model_version(const fs::path& path);
KoopmanModel load_koopman_model(const fs::path& path);
NodeModel load_node_model(const fs::path& path);

/// Header `t,x0,...,x{n-1}`, one row per sample.
void write_trajectory_csv(const fs::path& path, const Trajectory& traj);
/// dt and t0 are taken from the time column.
Trajectory read_trajectory_csv(const fs::path& path);
/// Writes `<stem>.csv` and a JSON sidecar `<stem>.json` (system, parameters, dt, seed, transient).
void save_trajectory(const fs::path& csv_path, const Trajectory& traj, const Provenance& provenance);

/// Paired dataset: `<prefix>_xt.csv`, `<prefix>_xtdt.csv` (one row per pair, header x0..)
/// and `<prefix>.json`.
void save_dataset(const fs::path& prefix, const SnapshotDataset& data);
SnapshotDataset load_dataset(const fs::path& prefix);

/// Generic numeric table with a header row.
void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns);
/// Returns the data rows; `header` receives the column names.
std::vector<std::vector<double>> read_csv(const fs::path& path, std::vector<std::string>* header = nullptr);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

/// `key = value` lines; `# comments`; `[section]` headers prefix later keys with `section.`.
/// Values may be quoted. Duplicate keys are an error.
std::map<std::string, std::string> parse_config(const std::string& text, const std::string& origin = "config");
std::map<std::string, std::string> load_config(const fs::path& path);

}  // namespace kdla
