#include "kdla/mlp.hpp"

#include <cmath>

#include "activations.hpp"
#include "kdla/errors.hpp"
#include "kdla/rng.hpp"

namespace kdla {
namespace {

void activate(Activation act, Matrix& z) { detail::activate_inplace(act, z.data(), z.size()); }

// upstream <- upstream * act'(z), expressed through the output a = act(z).
void scale_by_derivative(Activation act, const Matrix& a, Matrix& g) {
  const double* av = a.data();
  double* gv = g.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(g.size());
  switch (act) {
    case Activation::elu:
#pragma omp parallel for schedule(static) if (n > 65536)
      for (std::ptrdiff_t i = 0; i < n; ++i) gv[i] *= av[i] > 0 ? 1.0 : av[i] + 1.0;
      break;
    case Activation::tanh:
#pragma omp parallel for schedule(static) if (n > 65536)
      for (std::ptrdiff_t i = 0; i < n; ++i) gv[i] *= 1.0 - av[i] * av[i];
      break;
    case Activation::sigmoid:
#pragma omp parallel for schedule(static) if (n > 65536)
      for (std::ptrdiff_t i = 0; i < n; ++i) gv[i] *= av[i] * (1.0 - av[i]);
      break;
    case Activation::linear:
      break;
  }
}

Matrix affine(const Matrix& w, const std::vector<double>& b, const Matrix& x) {
  Matrix z = matmul(w, x);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const double bi = b[i];
    for (double& v : z.row(i)) v += bi;
  }
  return z;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  if (s == "elu" || s == "ELU") return Activation::elu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "linear" || s == "lin") return Activation::linear;
  throw ConfigError("unknown activation '" + s + "' (expected elu, tanh, sigmoid or linear)");
}

std::size_t MlpParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
  return n;
}

std::vector<std::span<double>> MlpParams::tensors() {
  std::vector<std::span<double>> t;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    t.emplace_back(weights[i].flat());
    t.emplace_back(biases[i]);
  }
  return t;
}

std::vector<std::span<const double>> MlpParams::tensors() const {
  std::vector<std::span<const double>> t;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    t.emplace_back(weights[i].flat());
    t.emplace_back(biases[i]);
  }
  return t;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  z.layer_sizes = layer_sizes;
  z.activations = activations;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    z.weights.emplace_back(weights[i].rows(), weights[i].cols());
    z.biases.emplace_back(biases[i].size(), 0.0);
  }
  return z;
}

void MlpParams::validate() const {
  if (weights.empty()) {
    require_shape(biases.empty() && activations.empty() && layer_sizes.size() <= 1,
                  "MlpParams: parameterless network must have no layers");
    return;
  }
  const std::size_t L = weights.size();
  require_shape(layer_sizes.size() == L + 1, "MlpParams: layer_sizes must have one more entry than weights");
  require_shape(biases.size() == L && activations.size() == L, "MlpParams: biases/activations count != layers");
  for (std::size_t i = 0; i < L; ++i) {
    require_shape(weights[i].rows() == layer_sizes[i + 1] && weights[i].cols() == layer_sizes[i],
                  "MlpParams: weight " + std::to_string(i) + " is " + shape_str(weights[i]) + ", expected " +
                      std::to_string(layer_sizes[i + 1]) + "x" + std::to_string(layer_sizes[i]));
    require_shape(biases[i].size() == layer_sizes[i + 1], "MlpParams: bias " + std::to_string(i) + " length");
  }
}

MlpParams mlp_init(std::vector<std::size_t> layer_sizes, std::vector<Activation> activations,
                   std::uint64_t seed) {
  MlpParams p;
  if (layer_sizes.size() < 2) {
    p.validate();
    return p;
  }
  if (activations.size() != layer_sizes.size() - 1) {
    throw ConfigError("mlp_init: need one activation per layer (" + std::to_string(layer_sizes.size() - 1) +
                      "), got " + std::to_string(activations.size()));
  }
  p.layer_sizes = std::move(layer_sizes);
  p.activations = std::move(activations);
  CounterRng rng(seed, 0x6d6c70);
  for (std::size_t i = 0; i + 1 < p.layer_sizes.size(); ++i) {
    const std::size_t fan_in = p.layer_sizes[i], fan_out = p.layer_sizes[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (double& v : w.flat()) v = rng.uniform(-limit, limit);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(fan_out, 0.0);
  }
  return p;
}

MlpForward mlp_forward(const MlpParams& params, const Matrix& x) {
  if (params.num_layers() == 0) return {Matrix(0, x.cols()), MlpCache{{x}}};
  require_shape(x.rows() == params.input_dim(), "mlp_forward: input has " + std::to_string(x.rows()) +
                                                    " rows, network expects " + std::to_string(params.input_dim()));
  require_shape(x.cols() >= 1, "mlp_forward: input has no columns");
  MlpCache cache;
  cache.activations.reserve(params.num_layers() + 1);
  cache.activations.push_back(x);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    Matrix z = affine(params.weights[l], params.biases[l], cache.activations.back());
    activate(params.activations[l], z);
    cache.activations.push_back(std::move(z));
  }
  Matrix y = cache.activations.back();
  return {std::move(y), std::move(cache)};
}

Matrix mlp_apply(const MlpParams& params, const Matrix& x) {
  if (params.num_layers() == 0) return Matrix(0, x.cols());
  require_shape(x.rows() == params.input_dim(), "mlp_apply: input has " + std::to_string(x.rows()) +
                                                    " rows, network expects " + std::to_string(params.input_dim()));
  Matrix a = affine(params.weights[0], params.biases[0], x);
  activate(params.activations[0], a);
  for (std::size_t l = 1; l < params.num_layers(); ++l) {
    a = affine(params.weights[l], params.biases[l], a);
    activate(params.activations[l], a);
  }
  return a;
}

MlpBackward mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& upstream) {
  const std::size_t L = params.num_layers();
  require_shape(cache.activations.size() == L + 1, "mlp_backward: cache has " +
                                                       std::to_string(cache.activations.size()) +
                                                       " activations, network needs " + std::to_string(L + 1));
  if (L == 0) return {params.zeros_like(), Matrix(cache.activations.front().rows(), upstream.cols())};
  for (std::size_t l = 0; l <= L; ++l) {
    require_shape(cache.activations[l].rows() == params.layer_sizes[l] &&
                      cache.activations[l].cols() == cache.activations[0].cols(),
                  "mlp_backward: stale cache at layer " + std::to_string(l));
  }
  require_shape(upstream.same_shape(cache.activations.back()),
                "mlp_backward: upstream " + shape_str(upstream) + " vs output " + shape_str(cache.activations.back()));

  MlpBackward out{params.zeros_like(), Matrix()};
  Matrix delta = upstream;
  for (std::size_t l = L; l-- > 0;) {
    scale_by_derivative(params.activations[l], cache.activations[l + 1], delta);
    out.grads.weights[l] = matmul_nt(delta, cache.activations[l]);
    auto& db = out.grads.biases[l];
    for (std::size_t i = 0; i < delta.rows(); ++i) {
      double s = 0.0;
      for (double v : delta.row(i)) s += v;
      db[i] = s;
    }
    delta = matmul_tn(params.weights[l], delta);
  }
  out.dx = std::move(delta);
  return out;
}

void accumulate(MlpParams& dst, const MlpParams& src) {
  auto d = dst.tensors();
  auto s = src.tensors();
  require_shape(d.size() == s.size(), "accumulate: parameter layouts differ");
  for (std::size_t t = 0; t < d.size(); ++t) {
    require_shape(d[t].size() == s[t].size(), "accumulate: tensor size mismatch");
    for (std::size_t i = 0; i < d[t].size(); ++i) d[t][i] += s[t][i];
  }
}

}  // namespace kdla
