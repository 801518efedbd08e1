#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <string>

#include "raregan/graph.hpp"
#include "raregan/param_store.hpp"

namespace raregan {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_elem = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients against central differences at `n_points`
// randomly sampled parameter coordinates. `build` must construct the loss on
// the given graph deterministically from the current store values.
GradCheckReport grad_check(const std::function<Var(Graph&)>& build,
                           ParamStore& store, std::mt19937_64& rng,
                           std::size_t n_points = 10, double epsilon = 1e-5);

}  // namespace raregan
