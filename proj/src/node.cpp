#include "kdla/node.hpp"

#include <cmath>
#include <numeric>

#include "kdla/adam.hpp"
#include "kdla/errors.hpp"
#include "kdla/rng.hpp"

namespace kdla {
namespace {

// x + s * k
Matrix axpy(const Matrix& x, double s, const Matrix& k) {
  Matrix out = x;
  double* o = out.data();
  const double* kv = k.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] += s * kv[i];
  return out;
}

void add_scaled(Matrix& dst, double s, const Matrix& src) {
  double* d = dst.data();
  const double* v = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s * v[i];
}

struct StageTape {
  MlpCache c1, c2, c3, c4;
};

// Advances x by one RK4 step of size h; records the network caches when tape != nullptr.
Matrix rk4_step(const MlpParams& net, const Matrix& x, double h, StageTape* tape) {
  auto f = [&](const Matrix& z, MlpCache* cache) {
    if (!cache) return mlp_apply(net, z);
    MlpForward fw = mlp_forward(net, z);
    *cache = std::move(fw.cache);
    return std::move(fw.y);
  };
  const Matrix k1 = f(x, tape ? &tape->c1 : nullptr);
  const Matrix k2 = f(axpy(x, 0.5 * h, k1), tape ? &tape->c2 : nullptr);
  const Matrix k3 = f(axpy(x, 0.5 * h, k2), tape ? &tape->c3 : nullptr);
  const Matrix k4 = f(axpy(x, h, k3), tape ? &tape->c4 : nullptr);
  Matrix out = x;
  double* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    o[i] += h / 6.0 * (k1.data()[i] + 2.0 * k2.data()[i] + 2.0 * k3.data()[i] + k4.data()[i]);
  return out;
}

// Given dL/dx_{next}, returns dL/dx and accumulates parameter gradients.
Matrix rk4_step_backward(const MlpParams& net, const StageTape& tape, const Matrix& g_next, double h,
                         MlpParams& grads) {
  Matrix gx = g_next;
  Matrix gk1 = g_next, gk2 = g_next, gk3 = g_next, gk4 = g_next;
  gk1 *= h / 6.0;
  gk2 *= h / 3.0;
  gk3 *= h / 3.0;
  gk4 *= h / 6.0;

  MlpBackward b4 = mlp_backward(net, tape.c4, gk4);  // z4 = x + h k3
  accumulate(grads, b4.grads);
  gx += b4.dx;
  add_scaled(gk3, h, b4.dx);

  MlpBackward b3 = mlp_backward(net, tape.c3, gk3);  // z3 = x + h/2 k2
  accumulate(grads, b3.grads);
  gx += b3.dx;
  add_scaled(gk2, 0.5 * h, b3.dx);

  MlpBackward b2 = mlp_backward(net, tape.c2, gk2);  // z2 = x + h/2 k1
  accumulate(grads, b2.grads);
  gx += b2.dx;
  add_scaled(gk1, 0.5 * h, b2.dx);

  MlpBackward b1 = mlp_backward(net, tape.c1, gk1);  // z1 = x
  accumulate(grads, b1.grads);
  gx += b1.dx;
  return gx;
}

void check_input(const NodeModel& model, const Matrix& x) {
  require_shape(x.rows() == model.state_dim(), "node: state has dimension " + std::to_string(x.rows()) +
                                                    ", model expects " + std::to_string(model.state_dim()));
}

}  // namespace

void NodeModel::validate() const {
  net.validate();
  if (net.num_layers() == 0) throw ConfigError("node model: network has no layers");
  require_shape(net.input_dim() == net.output_dim(), "node model: network must map R^n to R^n");
  if (substeps < 1) throw ConfigError("node model: substeps must be >= 1");
  if (!(dt > 0)) throw ConfigError("node model: dt must be positive");
}

Matrix node_predict(const NodeModel& model, const Matrix& x) {
  check_input(model, x);
  const double h = model.dt / static_cast<double>(model.substeps);
  Matrix state = x;
  for (std::size_t s = 0; s < model.substeps; ++s) {
    state = rk4_step(model.net, state, h, nullptr);
    if (!state.all_finite()) throw NumericalError("node_predict: non-finite state after RK4 substep " + std::to_string(s));
  }
  return state;
}

std::vector<double> node_predict(const NodeModel& model, std::span<const double> x) {
  return node_predict(model, Matrix::column(x)).values();
}

NodeLoss node_loss(const NodeModel& model, const Matrix& x_t, const Matrix& x_tdt, bool with_grad) {
  check_input(model, x_t);
  require_shape(x_t.same_shape(x_tdt), "node_loss: snapshot matrices differ in shape");
  const double h = model.dt / static_cast<double>(model.substeps);
  std::vector<StageTape> tapes(with_grad ? model.substeps : 0);
  Matrix state = x_t;
  for (std::size_t s = 0; s < model.substeps; ++s) {
    state = rk4_step(model.net, state, h, with_grad ? &tapes[s] : nullptr);
    if (!state.all_finite()) throw NumericalError("node_loss: non-finite state after RK4 substep " + std::to_string(s));
  }
  Matrix diff = x_tdt - state;
  const double scale = 1.0 / static_cast<double>(x_t.rows() * x_t.cols());
  double sum = 0.0;
  for (double v : diff.values()) sum += v * v;
  NodeLoss out{sum * scale, model.net.zeros_like()};
  if (!with_grad) return out;

  Matrix g = std::move(diff);
  g *= -2.0 * scale;
  for (std::size_t s = model.substeps; s-- > 0;) g = rk4_step_backward(model.net, tapes[s], g, h, out.grads);
  return out;
}

NodeLoss node_loss(const NodeModel& model, const SnapshotDataset& data, bool with_grad) {
  require_shape(data.n == model.state_dim(), "node_loss: dataset state dimension differs from model");
  return node_loss(model, data.x_t, data.x_tdt, with_grad);
}

NodeModel train_node(const SnapshotDataset& data, const NodeTrainConfig& config) {
  std::vector<std::size_t> sizes{data.n};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(data.n);
  NodeModel init;
  init.net = mlp_init(std::move(sizes), config.activations, config.seed);
  init.dt = data.dt;
  init.substeps = config.substeps;
  return train_node(data, std::move(init), config);
}

NodeModel train_node(const SnapshotDataset& data, NodeModel model, const NodeTrainConfig& config) {
  data.validate();
  model.dt = data.dt;
  model.substeps = config.substeps;
  model.validate();
  if (config.epochs < 1) throw ConfigError("train_node: epochs must be >= 1");
  require_shape(model.state_dim() == data.n, "train_node: model state dimension differs from dataset");
  const std::size_t m = data.size();
  const std::size_t batch = config.batch_size == 0 || config.batch_size >= m ? m : config.batch_size;

  auto& meta = model.meta;
  meta = {};
  meta.epochs_budget = config.epochs;
  meta.seed = config.seed;
  meta.batch_size = batch == m ? 0 : batch;
  meta.lr_start = config.lr_start;
  meta.lr_end = config.lr_end;

  AdamState adam = AdamState::for_params(model.net);
  MlpParams best = model.net;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_drop_schedule(epoch, config.epochs, config.lr_start, config.lr_end);
    double total = 0.0;
    const MlpParams before = model.net;
    try {
      if (batch == m) {
        NodeLoss l = node_loss(model, data.x_t, data.x_tdt, true);
        total = l.value;
        if (!std::isfinite(total)) throw NumericalError("loss is not finite");
        adam_step(model.net, l.grads, adam, lr);
      } else {
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), 0);
        CounterRng rng(config.seed, 0x6e6f6465ULL + epoch);
        for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        for (std::size_t start = 0; start < m; start += batch) {
          const std::size_t len = std::min(batch, m - start);
          std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(start + len));
          NodeLoss l = node_loss(model, data.x_t.gather_cols(idx), data.x_tdt.gather_cols(idx), true);
          if (!std::isfinite(l.value)) throw NumericalError("batch loss is not finite");
          total += l.value * static_cast<double>(len);
          adam_step(model.net, l.grads, adam, lr);
        }
        total /= static_cast<double>(m);
      }
    } catch (const NumericalError& e) {
      throw TrainingError("train_node: diverged at epoch " + std::to_string(epoch) + ": " + e.what(), meta.best_epoch,
                          std::make_shared<const MlpParams>(best));
    }
    // Full batch: `total` is the loss of the parameters before this step.
    // Mini-batch: mean over the epoch, attributed to the parameters at its end.
    const MlpParams& scored = batch == m ? before : model.net;
    if (total < best_loss) {
      best_loss = total;
      best = scored;
      meta.best_epoch = epoch;
    }
    meta.loss_curve.push_back(total);
    meta.epochs_run = epoch + 1;
    if (config.on_epoch) config.on_epoch(epoch, total);
  }
  model.net = std::move(best);
  return model;
}

std::vector<Trajectory> node_evolve(const NodeModel& model, const Matrix& x0, std::size_t steps) {
  model.validate();
  check_input(model, x0);
  const std::size_t n = x0.rows(), members = x0.cols();
  std::vector<Trajectory> out(members);
  for (auto& t : out) {
    t.source = "node";
    t.dt = model.dt;
    t.seed = model.meta.seed;
    t.states = Matrix(n, steps + 1);
  }
  std::vector<std::size_t> last_finite(members, 0);
  std::vector<bool> alive(members, true);
  for (std::size_t e = 0; e < members; ++e) {
    for (std::size_t i = 0; i < n; ++i) out[e].states(i, 0) = x0(i, e);
  }

  const double h = model.dt / static_cast<double>(model.substeps);
  Matrix state = x0;
  for (std::size_t step = 1; step <= steps; ++step) {
    for (std::size_t s = 0; s < model.substeps; ++s) state = rk4_step(model.net, state, h, nullptr);
    for (std::size_t e = 0; e < members; ++e) {
      if (!alive[e]) continue;
      bool finite = true;
      for (std::size_t i = 0; i < n; ++i) finite = finite && std::isfinite(state(i, e));
      if (!finite) {
        alive[e] = false;
        out[e].diagnostic = "node_evolve: state became non-finite at step " + std::to_string(step);
        // keep the column out of later products
        for (std::size_t i = 0; i < n; ++i) state(i, e) = 0.0;
        continue;
      }
      for (std::size_t i = 0; i < n; ++i) out[e].states(i, step) = state(i, e);
      last_finite[e] = step;
    }
  }
  for (std::size_t e = 0; e < members; ++e) {
    if (!alive[e]) out[e].states = out[e].states.col_block(0, last_finite[e] + 1);
  }
  return out;
}

Trajectory node_evolve(const NodeModel& model, std::span<const double> x0, std::size_t steps) {
  return node_evolve(model, Matrix::column(x0), steps).front();
}

}  // namespace kdla
