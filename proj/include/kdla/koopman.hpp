#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kdla/dataset.hpp"
#include "kdla/linalg.hpp"
#include "kdla/mlp.hpp"

namespace kdla {

/// Lifting x -> Psi(x) = [x; 1 (optional); net(x)]. The first n observables are the state.
struct DictionaryNet {
  std::size_t state_dim = 0;
  MlpParams net;  // state_dim -> trainable_dim, or empty for a state-only dictionary
  bool include_constant = false;

  std::size_t trainable_dim() const noexcept { return net.output_dim(); }
  std::size_t lifted_dim() const noexcept { return state_dim + (include_constant ? 1 : 0) + trainable_dim(); }
  /// Row of Psi where the trainable block starts.
  std::size_t trainable_offset() const noexcept { return state_dim + (include_constant ? 1 : 0); }
  void validate() const;
};

/// Hidden widths, trainable output count and per-layer activations (hidden layers + output layer).
struct DictionaryArch {
  std::vector<std::size_t> hidden;
  std::size_t trainable = 0;
  std::vector<Activation> activations;
  bool include_constant = false;
};

DictionaryNet make_dictionary(std::size_t state_dim, const DictionaryArch& arch, std::uint64_t seed);

struct ObservablePair {
  Matrix psi_t;    // D x M
  Matrix psi_tdt;  // D x M
  double dt = 0.0;
};

struct TrainingMetadata {
  std::string method;                 // "kdla" or "kdl-alternating"
  std::size_t epochs_budget = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
  std::vector<double> loss_curve;
  double rcond = kDefaultRcond;
  double tikhonov = 0.0;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;         // 0 = full batch
  double lr_start = 0.0;
  double lr_end = 0.0;
  bool k_refit = true;                // K recomputed on the full dataset after training
};

struct KoopmanModel {
  Matrix k;  // D x D
  DictionaryNet dictionary;
  double dt = 0.0;
  TrainingMetadata meta;

  void validate() const;
};

struct KoopmanSpectrum {
  std::vector<std::complex<double>> eigenvalues;   // descending modulus
  std::vector<std::complex<double>> eigenvectors;  // D x D row-major, column j pairs with eigenvalue j; empty unless requested
};

Matrix lift(const DictionaryNet& dict, const Matrix& x);
Matrix readback(const Matrix& psi, const DictionaryNet& dict);

/// Least-squares K with K psi_t ~ psi_tdt. tikhonov = 0: K = psi_tdt psi_t^+.
/// tikhonov = g > 0: K = A (G + g I)^-1 with the unnormalized sums G = psi_t psi_t^T, A = psi_tdt psi_t^T.
Matrix edmd_fit(const ObservablePair& pair, double tikhonov, double rcond = kDefaultRcond);

struct KdlaLossResult {
  double value = 0.0;
  Matrix k;             // psi_tdt(K set) psi_t(K set)^+
  Matrix d_psi_t;       // dL/d psi_t of the prediction set
  Matrix d_psi_tdt;
  Matrix d_k_psi_t;     // dL/d psi_t of the K set
  Matrix d_k_psi_tdt;
};

/// L = ||psi_tdt (I - psi_t^+ psi_t)||_F, the residual left after projecting onto the row
/// space of psi_t, with gradients through the pseudoinverse. Requires M > D (ConfigError).
/// With one set the K-set gradients are already folded into d_psi_t / d_psi_tdt.
KdlaLossResult kdla_loss(const ObservablePair& pair, double rcond = kDefaultRcond, bool with_grad = true);

/// Two-set form L = ||psi_tdt(P) - psi_tdt(Q) psi_t(Q)^+ psi_t(P)||_F with prediction set P
/// and K set Q. The K set must have more columns than rows.
KdlaLossResult kdla_loss_two_set(const ObservablePair& prediction, const ObservablePair& k_set,
                                 double rcond = kDefaultRcond, bool with_grad = true);

/// Loss value and gradient with respect to the dictionary parameters.
struct DictionaryGradient {
  double loss = 0.0;
  MlpParams grads;
};
DictionaryGradient kdla_objective(const DictionaryNet& dict, const Matrix& x_t, const Matrix& x_tdt,
                                  double rcond = kDefaultRcond);

struct KdlaConfig {
  DictionaryArch arch;
  std::size_t epochs = 500;
  double lr_start = 1e-3;
  double lr_end = 1e-4;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;    // 0 or >= M: full batch
  std::size_t k_set_size = 0;    // two-set form only; 0 = whole dataset builds K
  double rcond = kDefaultRcond;
  bool early_stop = false;
  double early_stop_tol = 1e-6;  // relative improvement
  std::size_t early_stop_window = 50;
  std::function<void(std::size_t epoch, double loss)> on_epoch;
};

/// Gradient descent on the projection residual. Returns the dictionary at the epoch of
/// lowest recorded loss and K refit on the full lifted dataset.
KoopmanModel train_kdla(const SnapshotDataset& data, const KdlaConfig& config);
KoopmanModel train_kdla(const SnapshotDataset& data, DictionaryNet init, const KdlaConfig& config);

struct AlternatingConfig {
  DictionaryArch arch;
  std::size_t cycles = 300;           // each cycle: K fit, then `epochs_per_cycle` passes over the data
  std::size_t epochs_per_cycle = 1;   // 0 leaves the network untouched
  std::size_t batch_size = 5000;
  double lr_start = 1e-4;
  double lr_end = 1e-4;
  double tikhonov = 0.1;
  std::uint64_t seed = 0;
  std::function<void(std::size_t cycle, double loss)> on_cycle;
};

/// EDMD with dictionary learning by alternation: K <- edmd_fit(lift, tikhonov), then fixed-K
/// Adam steps on ||psi_tdt - K psi_t||_F. Returns the final network and K refit to it.
KoopmanModel train_kdl_alternating(const SnapshotDataset& data, const AlternatingConfig& config);
KoopmanModel train_kdl_alternating(const SnapshotDataset& data, DictionaryNet init, const AlternatingConfig& config);

/// Algorithm "observable only": Psi_0 = lift(x0), Psi_{i+1} = K Psi_i, states read back.
/// Each column of x0 is one initial condition; returns one trajectory per column.
std::vector<Trajectory> evolve_observable_only(const KoopmanModel& model, const Matrix& x0, std::size_t steps);
Trajectory evolve_observable_only(const KoopmanModel& model, std::span<const double> x0, std::size_t steps);

/// Alternation between state and observables: lift, apply K `m` times, read back, repeat.
/// m = 1 re-lifts every step; m >= steps equals evolve_observable_only.
std::vector<Trajectory> evolve_state_observable(const KoopmanModel& model, const Matrix& x0, std::size_t steps,
                                                std::size_t m);
Trajectory evolve_state_observable(const KoopmanModel& model, std::span<const double> x0, std::size_t steps,
                                   std::size_t m);

KoopmanSpectrum spectrum(const Matrix& k, bool with_vectors = false);
KoopmanSpectrum spectrum(const KoopmanModel& model, bool with_vectors = false);

}  // namespace kdla
