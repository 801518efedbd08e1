#pragma once

#include <algorithm>
#include <random>
#include <stdexcept>
#include <vector>

namespace raregan {

// Deterministic categorical sampler over fixed weights (upper_bound on the
// cumulative sums; no reliance on library-specific discrete_distribution
// internals, so draws are identical across standard libraries).
class DiscreteSampler {
 public:
  explicit DiscreteSampler(const std::vector<double>& weights) {
    cum_.reserve(weights.size());
    double acc = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("sampler: negative weight");
      acc += w;
      cum_.push_back(acc);
    }
    if (cum_.empty() || acc <= 0.0) {
      throw std::invalid_argument("sampler: no positive weights");
    }
    total_ = acc;
  }

  std::size_t operator()(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unit(0.0, total_);
    double u = unit(rng);
    auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    if (it == cum_.end()) --it;
    return static_cast<std::size_t>(it - cum_.begin());
  }

 private:
  std::vector<double> cum_;
  double total_ = 0.0;
};

}  // namespace raregan
