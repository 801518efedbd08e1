#include "raregan/param_store.hpp"

#include <cmath>
#include <stdexcept>

namespace raregan {

Tensor& ParamStore::create(const std::string& name, Tensor init) {
  if (entries_.count(name)) {
    throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  }
  if (!init.all_finite()) {
    throw std::invalid_argument("ParamStore: non-finite init for " + name);
  }
  Entry e;
  e.grad = Tensor::zeros(init.shape);
  e.m = Tensor::zeros(init.shape);
  e.v = Tensor::zeros(init.shape);
  e.value = std::move(init);
  auto [it, ok] = entries_.emplace(name, std::move(e));
  (void)ok;
  return it->second.value;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("ParamStore: unknown parameter " + name);
  }
  return it->second.value;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("ParamStore: unknown parameter " + name);
  }
  return it->second.value;
}

bool ParamStore::contains(const std::string& name) const {
  return entries_.count(name) != 0;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.numel();
  return n;
}

void ParamStore::accumulate_grad(const std::string& name, const Tensor& g) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("ParamStore: gradient for unknown parameter " + name);
  }
  Entry& e = it->second;
  if (!g.same_shape(e.value)) {
    throw std::invalid_argument("ParamStore: gradient shape " + g.shape_str() +
                                " for parameter " + name + " of shape " +
                                e.value.shape_str());
  }
  for (std::size_t i = 0; i < g.numel(); ++i) e.grad(i) += g(i);
  e.has_grad = true;
}

bool ParamStore::has_grad(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("ParamStore: unknown parameter " + name);
  }
  return it->second.has_grad;
}

const Tensor& ParamStore::grad(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("ParamStore: unknown parameter " + name);
  }
  return it->second.grad;
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) {
    std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
    e.has_grad = false;
  }
}

void ParamStore::adam_step(const AdamConfig& cfg) {
  for (const auto& [name, e] : entries_) {
    if (!e.has_grad) {
      throw std::runtime_error("adam_step: no gradient for parameter " + name);
    }
  }
  ++step_;
  double t = static_cast<double>(step_);
  double bc1 = 1.0 - std::pow(cfg.beta1, t);
  double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, e] : entries_) {
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
      double g = e.grad(i);
      e.m(i) = cfg.beta1 * e.m(i) + (1.0 - cfg.beta1) * g;
      e.v(i) = cfg.beta2 * e.v(i) + (1.0 - cfg.beta2) * g * g;
      double mhat = e.m(i) / bc1;
      double vhat = e.v(i) / bc2;
      e.value(i) -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
    if (!e.value.all_finite()) {
      throw std::runtime_error("adam_step: non-finite update for parameter " +
                               name);
    }
    std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
    e.has_grad = false;
  }
}

nlohmann::json ParamStore::to_json() const {
  nlohmann::json j;
  j["step"] = step_;
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, e] : entries_) {
    params[name] = {{"shape", e.value.shape},
                    {"data", e.value.data},
                    {"m", e.m.data},
                    {"v", e.v.data}};
  }
  j["params"] = std::move(params);
  return j;
}

ParamStore ParamStore::from_json(const nlohmann::json& j) {
  ParamStore store;
  store.step_ = j.at("step").get<std::size_t>();
  for (const auto& [name, pj] : j.at("params").items()) {
    Tensor value(pj.at("shape").get<std::vector<std::size_t>>(),
                 pj.at("data").get<std::vector<double>>());
    Tensor& created = store.create(name, std::move(value));
    Entry& e = store.entries_.at(name);
    e.m.data = pj.at("m").get<std::vector<double>>();
    e.v.data = pj.at("v").get<std::vector<double>>();
    if (e.m.data.size() != created.numel() || e.v.data.size() != created.numel()) {
      throw std::invalid_argument(
          "ParamStore: moment size mismatch for parameter " + name);
    }
  }
  return store;
}

Tensor uniform_init(const std::vector<std::size_t>& shape, double lo, double hi,
                    std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data) v = dist(rng);
  return t;
}

Tensor normal_init(const std::vector<std::size_t>& shape, double mean,
                   double stddev, std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(shape);
  std::normal_distribution<double> dist(mean, stddev);
  for (double& v : t.data) v = dist(rng);
  return t;
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_init({fan_in, fan_out}, -bound, bound, rng);
}

}  // namespace raregan
