#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "dsam/autodiff/graph.hpp"

namespace dsam::ad {

// Builds the scalar loss on a fresh graph bound to the parameter store.
using LossFn = std::function<Var(Graph&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every element; otherwise a seeded sample of this many per parameter.
  std::size_t max_elements_per_param = 0;
  std::uint64_t seed = 0;
  // Fourth-order central stencil (f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h.
  // Its O(h^4) truncation error allows a larger eps, which keeps round-off
  // small on near-zero gradients.
  bool five_point = false;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Compares autodiff gradients with central differences. The relative error
// of an element is |a - f| / max(|a|, |f|, 1e-8). Throws if loss_fn gives two
// different values at the same point.
GradCheckReport finite_difference_check(const LossFn& loss_fn, ParameterStore& params,
                                        const GradCheckOptions& options = {});

inline double finite_difference_check(const LossFn& loss_fn, ParameterStore& params, double eps) {
  return finite_difference_check(loss_fn, params, GradCheckOptions{eps, 0, 0}).max_relative_error;
}

}  // namespace dsam::ad
