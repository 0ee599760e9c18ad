#include "kdla/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "kdla/adam.hpp"
#include "kdla/errors.hpp"
#include "kdla/rng.hpp"

namespace kdla {
namespace {

// Psi = [x; 1?; y_nn]
Matrix assemble(const DictionaryNet& dict, const Matrix& x, const Matrix& y_nn) {
  Matrix psi(dict.lifted_dim(), x.cols());
  std::copy(x.values().begin(), x.values().end(), psi.data());
  if (dict.include_constant) std::fill_n(psi.data() + dict.state_dim * x.cols(), x.cols(), 1.0);
  std::copy(y_nn.values().begin(), y_nn.values().end(), psi.data() + dict.trainable_offset() * x.cols());
  return psi;
}

// Gradient rows belonging to the trainable block.
Matrix trainable_rows(const DictionaryNet& dict, const Matrix& d_psi) {
  return d_psi.row_block(dict.trainable_offset(), dict.trainable_dim());
}

std::vector<std::size_t> shuffled(std::size_t m, std::uint64_t seed, std::uint64_t stream) {
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  CounterRng rng(seed, stream);
  for (std::size_t i = m; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

void check_lift_input(const DictionaryNet& dict, const Matrix& x) {
  require_shape(x.rows() == dict.state_dim, "lift: input has " + std::to_string(x.rows()) + " rows, dictionary expects " +
                                                std::to_string(dict.state_dim));
}

double frob_residual(const Matrix& k, const ObservablePair& p) {
  return frobenius_norm(p.psi_tdt - matmul(k, p.psi_t));
}

std::shared_ptr<const MlpParams> snapshot(const MlpParams& p) { return std::make_shared<const MlpParams>(p); }

}  // namespace

void DictionaryNet::validate() const {
  net.validate();
  if (state_dim == 0) throw ConfigError("dictionary: state dimension must be positive");
  if (net.num_layers() > 0) {
    require_shape(net.input_dim() == state_dim, "dictionary: network input " + std::to_string(net.input_dim()) +
                                                    " != state dimension " + std::to_string(state_dim));
  }
}

DictionaryNet make_dictionary(std::size_t state_dim, const DictionaryArch& arch, std::uint64_t seed) {
  DictionaryNet d;
  d.state_dim = state_dim;
  d.include_constant = arch.include_constant;
  if (arch.trainable > 0) {
    std::vector<std::size_t> sizes{state_dim};
    sizes.insert(sizes.end(), arch.hidden.begin(), arch.hidden.end());
    sizes.push_back(arch.trainable);
    d.net = mlp_init(std::move(sizes), arch.activations, seed);
  }
  d.validate();
  return d;
}

void KoopmanModel::validate() const {
  dictionary.validate();
  const std::size_t D = dictionary.lifted_dim();
  require_shape(k.rows() == D && k.cols() == D,
                "koopman model: K is " + shape_str(k) + " but the dictionary lifts to " + std::to_string(D));
  if (!(dt > 0)) throw ConfigError("koopman model: dt must be positive");
}

Matrix lift(const DictionaryNet& dict, const Matrix& x) {
  check_lift_input(dict, x);
  return assemble(dict, x, mlp_apply(dict.net, x));
}

Matrix readback(const Matrix& psi, const DictionaryNet& dict) {
  require_shape(psi.rows() == dict.lifted_dim(), "readback: psi has " + std::to_string(psi.rows()) +
                                                     " rows, dictionary lifts to " + std::to_string(dict.lifted_dim()));
  return psi.row_block(0, dict.state_dim);
}

Matrix edmd_fit(const ObservablePair& pair, double tikhonov, double rcond) {
  require_shape(pair.psi_t.same_shape(pair.psi_tdt),
                "edmd_fit: psi_t " + shape_str(pair.psi_t) + " vs psi_tdt " + shape_str(pair.psi_tdt));
  if (pair.psi_t.cols() == 0) throw ConfigError("edmd_fit: no snapshots");
  if (!(tikhonov >= 0)) throw ConfigError("edmd_fit: tikhonov must be >= 0");
  if (!pair.psi_t.all_finite() || !pair.psi_tdt.all_finite()) throw NumericalError("edmd_fit: non-finite observables");
  if (tikhonov == 0.0) return matmul(pair.psi_tdt, pinv(pair.psi_t, rcond));

  Matrix g = matmul_nt(pair.psi_t, pair.psi_t);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += tikhonov;
  const Matrix a = matmul_nt(pair.psi_tdt, pair.psi_t);
  // K (G + gI) = A  <=>  (G + gI) K^T = A^T
  return solve_spd(g, a.transposed()).transposed();
}

KdlaLossResult kdla_loss_two_set(const ObservablePair& prediction, const ObservablePair& k_set, double rcond,
                                 bool with_grad) {
  const Matrix& xq = k_set.psi_t;
  const Matrix& yq = k_set.psi_tdt;
  const Matrix& xp = prediction.psi_t;
  const Matrix& yp = prediction.psi_tdt;
  require_shape(xq.same_shape(yq), "kdla_loss: K-set shapes differ");
  require_shape(xp.same_shape(yp), "kdla_loss: prediction-set shapes differ");
  require_shape(xp.rows() == xq.rows(), "kdla_loss: sets have different lifted dimension");
  if (xq.cols() <= xq.rows()) {
    throw ConfigError("kdla_loss: need more snapshots than observables (M = " + std::to_string(xq.cols()) +
                      ", D = " + std::to_string(xq.rows()) + "); with M <= D the projection residual is identically 0");
  }

  KdlaLossResult r;
  const Matrix xq_plus = pinv(xq, rcond);
  r.k = matmul(yq, xq_plus);
  Matrix resid = yp - matmul(r.k, xp);
  r.value = frobenius_norm(resid);
  if (!with_grad) return r;

  Matrix g = std::move(resid);
  if (r.value > 0) g *= 1.0 / r.value;
  else g *= 0.0;
  r.d_psi_t = matmul_tn(r.k, g);
  r.d_psi_t *= -1.0;
  Matrix dk = matmul_nt(g, xp);
  dk *= -1.0;
  r.d_psi_tdt = std::move(g);
  r.d_k_psi_tdt = matmul_nt(dk, xq_plus);
  r.d_k_psi_t = pinv_vjp(xq, xq_plus, matmul_tn(yq, dk));
  return r;
}

KdlaLossResult kdla_loss(const ObservablePair& pair, double rcond, bool with_grad) {
  KdlaLossResult r = kdla_loss_two_set(pair, pair, rcond, with_grad);
  if (with_grad) {
    r.d_psi_t += r.d_k_psi_t;
    r.d_psi_tdt += r.d_k_psi_tdt;
    r.d_k_psi_t = Matrix();
    r.d_k_psi_tdt = Matrix();
  }
  return r;
}

DictionaryGradient kdla_objective(const DictionaryNet& dict, const Matrix& x_t, const Matrix& x_tdt, double rcond) {
  check_lift_input(dict, x_t);
  require_shape(x_t.same_shape(x_tdt), "kdla_objective: snapshot matrices differ in shape");
  const std::size_t m = x_t.cols();
  const Matrix z = hstack(x_t, x_tdt);
  MlpForward fwd = mlp_forward(dict.net, z);
  const Matrix psi = assemble(dict, z, fwd.y);
  const ObservablePair pair{psi.col_block(0, m), psi.col_block(m, m), 0.0};
  KdlaLossResult loss = kdla_loss(pair, rcond, true);
  DictionaryGradient out{loss.value, dict.net.zeros_like()};
  if (dict.trainable_dim() == 0) return out;
  const Matrix upstream = hstack(trainable_rows(dict, loss.d_psi_t), trainable_rows(dict, loss.d_psi_tdt));
  out.grads = mlp_backward(dict.net, fwd.cache, upstream).grads;
  return out;
}

KoopmanModel train_kdla(const SnapshotDataset& data, const KdlaConfig& config) {
  return train_kdla(data, make_dictionary(data.n, config.arch, config.seed), config);
}

KoopmanModel train_kdla(const SnapshotDataset& data, DictionaryNet dict, const KdlaConfig& config) {
  data.validate();
  dict.validate();
  require_shape(dict.state_dim == data.n, "train_kdla: dictionary state dimension differs from dataset");
  const std::size_t m = data.size(), big_d = dict.lifted_dim();
  if (m <= big_d) {
    throw ConfigError("train_kdla: dataset has M = " + std::to_string(m) + " snapshot pairs but the dictionary lifts to D = " +
                      std::to_string(big_d) + "; the projection loss needs M > D");
  }
  const bool full_batch = config.batch_size == 0 || config.batch_size >= m;

  KoopmanModel model;
  model.dt = data.dt;
  auto& meta = model.meta;
  meta.method = "kdla";
  meta.epochs_budget = config.epochs;
  meta.rcond = config.rcond;
  meta.seed = config.seed;
  meta.batch_size = full_batch ? 0 : config.batch_size;
  meta.lr_start = config.lr_start;
  meta.lr_end = config.lr_end;

  AdamState adam = AdamState::for_params(dict.net);
  MlpParams best = dict.net;
  double best_loss = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_drop_schedule(epoch, config.epochs, config.lr_start, config.lr_end);
    double epoch_loss = 0.0;
    try {
      if (full_batch) {
        DictionaryGradient g = kdla_objective(dict, data.x_t, data.x_tdt, config.rcond);
        epoch_loss = g.loss;
        if (!std::isfinite(epoch_loss)) throw NumericalError("loss is not finite");
        if (epoch_loss < best_loss) {
          best_loss = epoch_loss;
          best = dict.net;
          meta.best_epoch = epoch;
        }
        if (dict.trainable_dim() > 0) adam_step(dict.net, g.grads, adam, lr);
      } else {
        const auto order = shuffled(m, config.seed, 0x6b646c61ULL + epoch);
        std::size_t batches = 0;
        for (std::size_t start = 0; start < m; start += config.batch_size, ++batches) {
          const std::size_t len = std::min(config.batch_size, m - start);
          std::vector<std::size_t> pidx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                        order.begin() + static_cast<std::ptrdiff_t>(start + len));
          std::vector<std::size_t> qidx;
          if (config.k_set_size == 0 || config.k_set_size >= m) {
            qidx.resize(m);
            std::iota(qidx.begin(), qidx.end(), 0);
          } else {
            const auto qo = shuffled(m, config.seed, 0x4b736574ULL + epoch * 1000003ULL + batches);
            qidx.assign(qo.begin(), qo.begin() + static_cast<std::ptrdiff_t>(config.k_set_size));
          }
          const std::size_t np = pidx.size(), nq = qidx.size();
          Matrix z = hstack(hstack(data.x_t.gather_cols(pidx), data.x_tdt.gather_cols(pidx)),
                            hstack(data.x_t.gather_cols(qidx), data.x_tdt.gather_cols(qidx)));
          MlpForward fwd = mlp_forward(dict.net, z);
          const Matrix psi = assemble(dict, z, fwd.y);
          const ObservablePair p{psi.col_block(0, np), psi.col_block(np, np), data.dt};
          const ObservablePair q{psi.col_block(2 * np, nq), psi.col_block(2 * np + nq, nq), data.dt};
          KdlaLossResult loss = kdla_loss_two_set(p, q, config.rcond, true);
          if (!std::isfinite(loss.value)) throw NumericalError("loss is not finite");
          epoch_loss += loss.value;
          if (dict.trainable_dim() == 0) continue;
          const Matrix upstream =
              hstack(hstack(trainable_rows(dict, loss.d_psi_t), trainable_rows(dict, loss.d_psi_tdt)),
                     hstack(trainable_rows(dict, loss.d_k_psi_t), trainable_rows(dict, loss.d_k_psi_tdt)));
          adam_step(dict.net, mlp_backward(dict.net, fwd.cache, upstream).grads, adam, lr);
        }
        epoch_loss /= static_cast<double>(batches);
        if (epoch_loss < best_loss) {
          best_loss = epoch_loss;
          best = dict.net;
          meta.best_epoch = epoch;
        }
      }
    } catch (const NumericalError& e) {
      throw TrainingError("train_kdla: diverged at epoch " + std::to_string(epoch) + ": " + e.what(),
                          meta.best_epoch, snapshot(best));
    }
    meta.loss_curve.push_back(epoch_loss);
    meta.epochs_run = epoch + 1;
    if (config.on_epoch) config.on_epoch(epoch, epoch_loss);
    if (config.early_stop && epoch >= config.early_stop_window) {
      const double past = meta.loss_curve[epoch - config.early_stop_window];
      if (past > 0 && (past - epoch_loss) / past < config.early_stop_tol) {
        meta.early_stopped = true;
        break;
      }
    }
  }

  dict.net = std::move(best);
  const ObservablePair full{lift(dict, data.x_t), lift(dict, data.x_tdt), data.dt};
  model.k = edmd_fit(full, 0.0, config.rcond);
  model.dictionary = std::move(dict);
  meta.k_refit = true;
  return model;
}

KoopmanModel train_kdl_alternating(const SnapshotDataset& data, const AlternatingConfig& config) {
  return train_kdl_alternating(data, make_dictionary(data.n, config.arch, config.seed), config);
}

KoopmanModel train_kdl_alternating(const SnapshotDataset& data, DictionaryNet dict, const AlternatingConfig& config) {
  data.validate();
  dict.validate();
  require_shape(dict.state_dim == data.n, "train_kdl_alternating: dictionary state dimension differs from dataset");
  if (config.batch_size == 0) throw ConfigError("train_kdl_alternating: batch_size must be positive");
  const std::size_t m = data.size();

  KoopmanModel model;
  model.dt = data.dt;
  auto& meta = model.meta;
  meta.method = "kdl-alternating";
  meta.epochs_budget = config.cycles * config.epochs_per_cycle;
  meta.tikhonov = config.tikhonov;
  meta.seed = config.seed;
  meta.batch_size = config.batch_size;
  meta.lr_start = config.lr_start;
  meta.lr_end = config.lr_end;

  AdamState adam = AdamState::for_params(dict.net);
  std::size_t last_good = 0;
  for (std::size_t cycle = 0; cycle < config.cycles; ++cycle) {
    try {
      const ObservablePair full{lift(dict, data.x_t), lift(dict, data.x_tdt), data.dt};
      const Matrix k = edmd_fit(full, config.tikhonov);
      const double loss = frob_residual(k, full);
      if (!std::isfinite(loss)) throw NumericalError("loss is not finite");
      meta.loss_curve.push_back(loss);
      if (config.on_cycle) config.on_cycle(cycle, loss);
      last_good = cycle;

      const double lr = lr_drop_schedule(cycle, config.cycles, config.lr_start, config.lr_end);
      for (std::size_t e = 0; e < config.epochs_per_cycle && dict.trainable_dim() > 0; ++e) {
        const auto order = shuffled(m, config.seed, 0x616c74ULL + cycle * config.epochs_per_cycle + e);
        for (std::size_t start = 0; start < m; start += config.batch_size) {
          const std::size_t len = std::min(config.batch_size, m - start);
          std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(start + len));
          const Matrix z = hstack(data.x_t.gather_cols(idx), data.x_tdt.gather_cols(idx));
          MlpForward fwd = mlp_forward(dict.net, z);
          const Matrix psi = assemble(dict, z, fwd.y);
          const Matrix pt = psi.col_block(0, len), ptdt = psi.col_block(len, len);
          Matrix g = ptdt - matmul(k, pt);
          const double l = frobenius_norm(g);
          if (!std::isfinite(l)) throw NumericalError("batch loss is not finite");
          if (l > 0) g *= 1.0 / l;
          Matrix d_pt = matmul_tn(k, g);
          d_pt *= -1.0;
          const Matrix upstream = hstack(trainable_rows(dict, d_pt), trainable_rows(dict, g));
          adam_step(dict.net, mlp_backward(dict.net, fwd.cache, upstream).grads, adam, lr);
        }
      }
    } catch (const NumericalError& e) {
      throw TrainingError("train_kdl_alternating: diverged in cycle " + std::to_string(cycle) + ": " + e.what(),
                          last_good, snapshot(dict.net));
    }
    meta.epochs_run = (cycle + 1) * config.epochs_per_cycle;
  }

  const ObservablePair full{lift(dict, data.x_t), lift(dict, data.x_tdt), data.dt};
  model.k = edmd_fit(full, config.tikhonov);
  meta.best_epoch = meta.epochs_run;
  meta.k_refit = true;
  model.dictionary = std::move(dict);
  return model;
}

namespace {

std::vector<Trajectory> make_rollouts(const KoopmanModel& model, std::size_t members, std::size_t steps,
                                      const std::string& source) {
  std::vector<Trajectory> out(members);
  for (auto& t : out) {
    t.source = source;
    t.dt = model.dt;
    t.states = Matrix(model.dictionary.state_dim, steps + 1);
    t.seed = model.meta.seed;
  }
  return out;
}

void store_column(std::vector<Trajectory>& out, const Matrix& states, std::size_t step) {
  for (std::size_t e = 0; e < out.size(); ++e)
    for (std::size_t i = 0; i < states.rows(); ++i) out[e].states(i, step) = states(i, e);
}

void check_rollout(const KoopmanModel& model, const Matrix& x0) {
  model.validate();
  require_shape(x0.rows() == model.dictionary.state_dim,
                "evolve: initial condition has dimension " + std::to_string(x0.rows()) + ", model expects " +
                    std::to_string(model.dictionary.state_dim));
}

}  // namespace

std::vector<Trajectory> evolve_observable_only(const KoopmanModel& model, const Matrix& x0, std::size_t steps) {
  check_rollout(model, x0);
  auto out = make_rollouts(model, x0.cols(), steps, model.meta.method + "_oo");
  store_column(out, x0, 0);
  Matrix psi = lift(model.dictionary, x0);
  for (std::size_t i = 1; i <= steps; ++i) {
    psi = matmul(model.k, psi);
    store_column(out, readback(psi, model.dictionary), i);
  }
  return out;
}

Trajectory evolve_observable_only(const KoopmanModel& model, std::span<const double> x0, std::size_t steps) {
  return evolve_observable_only(model, Matrix::column(x0), steps).front();
}

std::vector<Trajectory> evolve_state_observable(const KoopmanModel& model, const Matrix& x0, std::size_t steps,
                                                std::size_t m) {
  if (m == 0) throw ConfigError("evolve_state_observable: m must be >= 1");
  check_rollout(model, x0);
  auto out = make_rollouts(model, x0.cols(), steps, model.meta.method + "_so_m" + std::to_string(m));
  store_column(out, x0, 0);
  Matrix state = x0;
  std::size_t emitted = 0;
  while (emitted < steps) {
    Matrix psi = lift(model.dictionary, state);
    const std::size_t run = std::min(m, steps - emitted);
    for (std::size_t j = 0; j < run; ++j) {
      psi = matmul(model.k, psi);
      state = readback(psi, model.dictionary);
      store_column(out, state, ++emitted);
    }
  }
  return out;
}

Trajectory evolve_state_observable(const KoopmanModel& model, std::span<const double> x0, std::size_t steps,
                                   std::size_t m) {
  return evolve_state_observable(model, Matrix::column(x0), steps, m).front();
}

KoopmanSpectrum spectrum(const Matrix& k, bool with_vectors) {
  require_shape(k.rows() == k.cols(), "spectrum: K must be square, got " + shape_str(k));
  if (!k.all_finite()) throw NumericalError("spectrum: K has non-finite entries");
  const auto n = static_cast<Eigen::Index>(k.rows());
  Eigen::MatrixXd km(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) km(i, j) = k(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  Eigen::EigenSolver<Eigen::MatrixXd> es(km, with_vectors);
  if (es.info() != Eigen::Success) throw NumericalError("spectrum: QR iteration did not converge");

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto vals = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ma = std::abs(vals(static_cast<Eigen::Index>(a))), mb = std::abs(vals(static_cast<Eigen::Index>(b)));
    if (ma != mb) return ma > mb;
    return vals(static_cast<Eigen::Index>(a)).imag() > vals(static_cast<Eigen::Index>(b)).imag();
  });

  KoopmanSpectrum s;
  for (std::size_t i : order) s.eigenvalues.push_back(vals(static_cast<Eigen::Index>(i)));
  if (with_vectors) {
    const auto vecs = es.eigenvectors();
    s.eigenvectors.resize(static_cast<std::size_t>(n * n));
    for (Eigen::Index r = 0; r < n; ++r)
      for (std::size_t c = 0; c < order.size(); ++c)
        s.eigenvectors[static_cast<std::size_t>(r) * order.size() + c] = vecs(r, static_cast<Eigen::Index>(order[c]));
  }
  return s;
}

KoopmanSpectrum spectrum(const KoopmanModel& model, bool with_vectors) { return spectrum(model.k, with_vectors); }

}  // namespace kdla
