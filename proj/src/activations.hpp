#pragma once

#include <cstddef>

#include "kdla/mlp.hpp"

namespace kdla::detail {

// Elementwise activation in place. Lives in its own translation unit so the transcendental
// loops can use the vectorized libm entry points.
void activate_inplace(Activation act, double* d, std::size_t n);

}  // namespace kdla::detail
