#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "kdla/koopman.hpp"
#include "kdla/node.hpp"
#include "kdla/systems.hpp"

namespace kdla {

/// Everything needed to train and roll out one model on one system.
struct RunConfig {
  std::string system = "duffing";
  std::string method = "kdla";  // kdla | kdl-alternating | node

  std::vector<std::size_t> hidden;
  std::size_t trainable = 0;      // dictionary outputs (Koopman methods)
  std::vector<Activation> activations;
  bool include_constant = false;
  std::size_t lifted_dim = 0;     // expected D; 0 = not checked

  std::size_t epochs = 0;         // kdla/node epochs, kdl-alternating cycles
  std::size_t epochs_per_cycle = 1;
  double lr_start = 1e-3;
  double lr_end = 1e-4;
  std::size_t batch_size = 0;
  std::size_t k_set_size = 0;
  double rcond = kDefaultRcond;
  double tikhonov = 0.0;
  std::size_t substeps = 1;       // node RK4 steps per interval
  bool early_stop = false;

  std::string mode = "oo";        // oo | so
  std::size_t m = 1;

  std::uint64_t seed = 0;
  bool paper_scale = false;
  bool budget_estimated = false;  // paper gives no budget for this method/system
};

std::vector<std::string> method_names();

/// Defaults for a system/method pair: the published architecture, desk-scale or paper-scale budget.
RunConfig default_run_config(const std::string& system, const std::string& method, bool paper_scale = false);

/// Applies `key = value` overrides. Keys: system, method, seed, paper_scale, budget_estimated, arch.hidden, arch.trainable,
/// arch.activations, arch.include_constant, arch.lifted_dim, train.epochs, train.epochs_per_cycle,
/// train.lr_start, train.lr_end, train.batch_size, train.k_set_size, train.rcond, train.tikhonov,
/// train.substeps, train.early_stop, evolve.mode, evolve.m. Unknown keys are an error.
void apply_overrides(RunConfig& config, const std::map<std::string, std::string>& values);

/// Throws ConfigError on inconsistencies (activation count, D != n + const + d, unknown method...).
void validate(const RunConfig& config, std::size_t state_dim);

/// `key = value` text that apply_overrides reads back to the same config.
std::string render_config(const RunConfig& config);

using TrainedModel = std::variant<KoopmanModel, NodeModel>;

TrainedModel train_model(const RunConfig& config, const SnapshotDataset& data,
                         const std::function<void(std::size_t, double)>& progress = {});

/// One trajectory per column of x0: oo/so for Koopman models (m used for so), RK4 for NODE.
std::vector<Trajectory> rollout(const TrainedModel& model, const Matrix& x0, std::size_t steps,
                                const std::string& mode = "oo", std::size_t m = 1);

const std::vector<double>& loss_curve(const TrainedModel& model);

struct ReproduceOptions {
  std::filesystem::path out_dir;
  bool paper_scale = false;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> overrides;  // applied to every trained method
  std::ostream* log = nullptr;
};

std::vector<std::string> reproduce_cases();

/// Generates data, trains every method the case uses and writes the CSV/JSON outputs into
/// options.out_dir. Errors carry the stage that failed.
void reproduce(const std::string& case_name, const ReproduceOptions& options);

}  // namespace kdla
