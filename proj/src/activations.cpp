#include "activations.hpp"

#include <cmath>

namespace kdla::detail {

void activate_inplace(Activation act, double* d, std::size_t count) {
  const auto n = static_cast<std::ptrdiff_t>(count);
  switch (act) {
    case Activation::elu:
#pragma omp parallel for simd schedule(static) if (n > 65536)
      for (std::ptrdiff_t i = 0; i < n; ++i) d[i] = d[i] > 0 ? d[i] : std::expm1(d[i]);
      break;
    case Activation::tanh:
#pragma omp parallel for simd schedule(static) if (n > 65536)
      for (std::ptrdiff_t i = 0; i < n; ++i) d[i] = std::tanh(d[i]);
      break;
    case Activation::sigmoid:
#pragma omp parallel for simd schedule(static) if (n > 65536)
      for (std::ptrdiff_t i = 0; i < n; ++i) d[i] = 1.0 / (1.0 + std::exp(-d[i]));
      break;
    case Activation::linear:
      break;
  }
}

}  // namespace kdla::detail
