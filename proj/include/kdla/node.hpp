#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "kdla/dataset.hpp"
#include "kdla/mlp.hpp"

namespace kdla {

/// Neural vector field x' = f(x; theta) advanced by classical RK4.
struct NodeModel {
  MlpParams net;  // n -> ... -> n
  double dt = 0.0;
  std::size_t substeps = 1;  // RK4 steps of size dt / substeps per data interval

  struct Meta {
    std::size_t epochs_budget = 0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    std::vector<double> loss_curve;
    std::uint64_t seed = 0;
    std::size_t batch_size = 0;
    double lr_start = 0.0;
    double lr_end = 0.0;
  } meta;

  std::size_t state_dim() const noexcept { return net.input_dim(); }
  void validate() const;
};

struct NodeTrainConfig {
  std::vector<std::size_t> hidden{200, 200};
  std::vector<Activation> activations{Activation::sigmoid, Activation::sigmoid, Activation::linear};
  std::size_t epochs = 200;
  double lr_start = 1e-3;
  double lr_end = 1e-4;
  std::uint64_t seed = 0;
  std::size_t substeps = 1;
  std::size_t batch_size = 0;  // 0 = full batch
  std::function<void(std::size_t epoch, double loss)> on_epoch;
};

/// One data interval: `substeps` RK4 steps. Columns of x are independent states.
/// Throws NumericalError if an intermediate stage is not finite.
Matrix node_predict(const NodeModel& model, const Matrix& x);
std::vector<double> node_predict(const NodeModel& model, std::span<const double> x);

struct NodeLoss {
  double value = 0.0;
  MlpParams grads;
};

/// L = 1/(nN) sum_i ||x(t_i + dt) - x~(t_i + dt)||^2, differentiated through every RK4 stage.
NodeLoss node_loss(const NodeModel& model, const Matrix& x_t, const Matrix& x_tdt, bool with_grad = true);
NodeLoss node_loss(const NodeModel& model, const SnapshotDataset& data, bool with_grad = true);

/// Adam on node_loss; keeps the parameters of the epoch with the lowest mean loss.
NodeModel train_node(const SnapshotDataset& data, const NodeTrainConfig& config);
NodeModel train_node(const SnapshotDataset& data, NodeModel init, const NodeTrainConfig& config);

/// Iterated node_predict. A member whose state stops being finite is truncated at its last
/// finite sample and carries a diagnostic; the other members continue.
std::vector<Trajectory> node_evolve(const NodeModel& model, const Matrix& x0, std::size_t steps);
Trajectory node_evolve(const NodeModel& model, std::span<const double> x0, std::size_t steps);

}  // namespace kdla
