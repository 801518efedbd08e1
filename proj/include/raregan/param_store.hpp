#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "raregan/tensor.hpp"

namespace raregan {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Named parameter tensors plus their gradient accumulators and Adam moments.
// Iteration order is the lexicographic name order, so optimizer sweeps are
// reproducible across runs.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Tensor init);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t count() const { return entries_.size(); }
  std::size_t numel() const;

  void accumulate_grad(const std::string& name, const Tensor& g);
  bool has_grad(const std::string& name) const;
  const Tensor& grad(const std::string& name) const;
  void zero_grad();

  // One Adam update over every parameter. Throws if any parameter has not
  // received a gradient since the last step.
  void adam_step(const AdamConfig& cfg);
  std::size_t step_count() const { return step_; }

  nlohmann::json to_json() const;
  static ParamStore from_json(const nlohmann::json& j);

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    Tensor m;
    Tensor v;
  };
  std::map<std::string, Entry> entries_;
  std::size_t step_ = 0;
};

// Initializers used when creating parameters.
Tensor uniform_init(const std::vector<std::size_t>& shape, double lo, double hi,
                    std::mt19937_64& rng);
Tensor normal_init(const std::vector<std::size_t>& shape, double mean,
                   double stddev, std::mt19937_64& rng);
// U[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))] for an
// (fan_in x fan_out) matrix.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng);

}  // namespace raregan
