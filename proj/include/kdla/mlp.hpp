#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kdla/matrix.hpp"

namespace kdla {

enum class Activation { elu, tanh, sigmoid, linear };

std::string to_string(Activation a);
/// Accepts "elu", "tanh", "sigmoid", "linear" / "lin". Throws ConfigError otherwise.
Activation parse_activation(const std::string& s);

/// Fully connected network. Layer i maps layer_sizes[i] -> layer_sizes[i+1]:
/// a_{i+1} = act_i(W_i a_i + b_i). ELU uses alpha = 1.
/// An empty layer list is a network with no parameters and zero outputs.
struct MlpParams {
  std::vector<std::size_t> layer_sizes;
  std::vector<Matrix> weights;               // layer_sizes[i+1] x layer_sizes[i]
  std::vector<std::vector<double>> biases;   // layer_sizes[i+1]
  std::vector<Activation> activations;       // one per layer

  std::size_t num_layers() const noexcept { return weights.size(); }
  std::size_t input_dim() const noexcept { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
  std::size_t output_dim() const noexcept { return weights.empty() ? 0 : layer_sizes.back(); }
  std::size_t parameter_count() const noexcept;

  /// Every weight matrix and bias vector, in layer order (W0, b0, W1, b1, ...).
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  /// Zero-valued copy with identical shapes.
  MlpParams zeros_like() const;

  /// Throws DimensionError when shapes are inconsistent.
  void validate() const;

  bool operator==(const MlpParams&) const = default;
};

/// Glorot-uniform weights U(+-sqrt(6/(fan_in+fan_out))), zero biases.
MlpParams mlp_init(std::vector<std::size_t> layer_sizes, std::vector<Activation> activations,
                   std::uint64_t seed);

/// Post-activation values a_0 = X, a_1, ..., a_L; enough for an exact backward pass.
struct MlpCache {
  std::vector<Matrix> activations;
};

struct MlpForward {
  Matrix y;
  MlpCache cache;
};

struct MlpBackward {
  MlpParams grads;  // same shapes as params
  Matrix dx;
};

/// Column-wise forward pass over X (input_dim x M).
MlpForward mlp_forward(const MlpParams& params, const Matrix& x);
/// Output only; does not retain intermediate activations.
Matrix mlp_apply(const MlpParams& params, const Matrix& x);
/// Gradients of <upstream, Y> with respect to parameters and X.
MlpBackward mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& upstream);

/// dst += src, tensor by tensor.
void accumulate(MlpParams& dst, const MlpParams& src);

}  // namespace kdla
