#include "raregan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace raregan {

namespace {

double eval_loss(const std::function<Var(Graph&)>& build) {
  Graph g;
  Var loss = build(g);
  if (loss.val().numel() != 1) {
    throw std::invalid_argument("grad_check: loss must be scalar");
  }
  return loss.val()(0);
}

}  // namespace

GradCheckReport grad_check(const std::function<Var(Graph&)>& build,
                           ParamStore& store, std::mt19937_64& rng,
                           std::size_t n_points, double epsilon) {
  store.zero_grad();
  std::map<std::string, Tensor> analytic;
  {
    Graph g;
    Var loss = build(g);
    if (loss.val().numel() != 1) {
      throw std::invalid_argument("grad_check: loss must be scalar");
    }
    g.backward(loss);
    for (const std::string& name : store.names()) {
      analytic.emplace(name, store.grad(name));
    }
  }
  store.zero_grad();

  // Flatten (param, element) coordinates and sample without replacement.
  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const std::string& name : store.names()) {
    std::size_t n = store.at(name).numel();
    for (std::size_t i = 0; i < n; ++i) coords.emplace_back(name, i);
  }
  if (coords.empty()) {
    throw std::invalid_argument("grad_check: store has no parameters");
  }
  std::vector<std::pair<std::string, std::size_t>> picked;
  if (n_points >= coords.size()) {
    picked = coords;
  } else {
    std::vector<std::size_t> order(coords.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < n_points; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
      picked.push_back(coords[order[i]]);
    }
  }

  GradCheckReport report;
  for (const auto& [name, elem] : picked) {
    Tensor& value = store.at(name);
    double saved = value(elem);
    value(elem) = saved + epsilon;
    double plus = eval_loss(build);
    value(elem) = saved - epsilon;
    double minus = eval_loss(build);
    value(elem) = saved;
    double numeric = (plus - minus) / (2.0 * epsilon);
    double a = analytic.at(name)(elem);
    double rel = std::abs(a - numeric) /
                 std::max({std::abs(a), std::abs(numeric), 1e-3});
    if (rel >= report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = name;
      report.worst_elem = elem;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace raregan
