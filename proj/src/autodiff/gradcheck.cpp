#include "dsam/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace dsam::ad {
namespace {

double evaluate(const LossFn& loss_fn, const ParameterStore& params) {
  Graph g(&params);
  return loss_fn(g).value().item();
}

}  // namespace

GradCheckReport finite_difference_check(const LossFn& loss_fn, ParameterStore& params,
                                        const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be positive");

  Gradients analytic;
  double base = 0.0;
  {
    Graph g(&params);
    Var loss = loss_fn(g);
    base = loss.value().item();
    analytic = g.backward(loss);
  }
  if (evaluate(loss_fn, params) != base) {
    throw std::runtime_error("finite_difference_check: loss function is not deterministic");
  }

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (ParamId p = 0; p < params.size(); ++p) {
    const std::size_t n = params.value(p).size();
    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (options.max_elements_per_param > 0 && n > options.max_elements_per_param) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_elements_per_param);
      std::sort(indices.begin(), indices.end());
    }
    for (std::size_t i : indices) {
      double& x = params.value(p)[i];
      const double saved = x;
      auto at = [&](double offset) {
        x = saved + offset;
        const double v = evaluate(loss_fn, params);
        x = saved;
        return v;
      };
      const double h = options.eps;
      const double numeric = options.five_point
                                 ? (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
                                 : (at(h) - at(-h)) / (2.0 * h);
      const double a = analytic[p][i];
      const double err = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      ++report.checked;
      if (err > report.max_relative_error || report.worst_param.empty()) {
        if (err >= report.max_relative_error) {
          report.max_relative_error = err;
          report.worst_param = params.name(p);
          report.worst_index = i;
          report.analytic = a;
          report.numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace dsam::ad
