#include "raregan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "raregan/graph.hpp"
#include "raregan/param_store.hpp"
#include "raregan/synthgen.hpp"

namespace raregan {

PrCurve pr_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("pr_curve: scores/labels size mismatch");
  if (scores.empty()) throw std::invalid_argument("pr_curve: empty input");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]))
      throw std::invalid_argument("pr_curve: non-finite score");
    if (labels[i] != 0 && labels[i] != 1)
      throw std::invalid_argument("pr_curve: labels must be 0 or 1");
    pos += static_cast<std::size_t>(labels[i]);
  }
  if (pos == 0 || pos == scores.size())
    throw std::invalid_argument("pr_curve: need both a positive and a negative label");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  PrCurve curve;
  curve.base_rate = static_cast<double>(pos) / static_cast<double>(scores.size());
  const double p_total = static_cast<double>(pos);
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    const double t = scores[order[i]];
    // Everything tied at this score enters the confusion matrix together.
    while (i < order.size() && scores[order[i]] == t) {
      if (labels[order[i]] == 1)
        ++tp;
      else
        ++fp;
      ++i;
    }
    PrPoint p;
    p.threshold = t;
    p.recall = static_cast<double>(tp) / p_total;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    curve.points.push_back(p);
  }
  PrPoint anchor;
  anchor.threshold = curve.points.front().threshold;
  anchor.recall = 0.0;
  anchor.precision = curve.points.front().precision;
  curve.points.insert(curve.points.begin(), anchor);
  return curve;
}

double pr_auc(const PrCurve& curve) {
  if (curve.points.size() < 2)
    throw std::invalid_argument("pr_auc: curve needs at least two points");
  double auc = 0.0;
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    const auto& a = curve.points[i];
    const auto& b = curve.points[i + 1];
    auc += (b.recall - a.recall) * (a.precision + b.precision) / 2.0;
  }
  return auc;
}

void write_pr_csv(std::ostream& os, const PrCurve& curve) {
  os << "threshold,recall,precision\n";
  char buf[96];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.threshold, p.recall,
                  p.precision);
    os << buf;
  }
}

void LogisticConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("logistic: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("logistic: batch_size must be >= 1");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("logistic: learning_rate must be > 0");
}

void to_json(nlohmann::json& j, const LogisticConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, LogisticConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
}

nlohmann::json LogisticModel::to_json() const {
  return nlohmann::json{{"w", w.data}, {"b", b}};
}

LogisticModel LogisticModel::from_json(const nlohmann::json& j) {
  LogisticModel m;
  const auto w = j.at("w").get<std::vector<double>>();
  m.w = Tensor::matrix(w.size(), 1, w);
  m.b = j.at("b").get<double>();
  return m;
}

namespace {

void check_binary_labels(const Tensor& features, const std::vector<int>& labels,
                         const char* who) {
  if (labels.size() != features.rows())
    throw std::invalid_argument(std::string(who) + ": labels/features size mismatch");
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1)
      throw std::invalid_argument(std::string(who) + ": labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  if (pos == 0 || pos == labels.size())
    throw std::invalid_argument(std::string(who) + ": need both classes present");
}

Tensor take_rows(const Tensor& src, const std::vector<std::size_t>& rows) {
  Tensor out = Tensor::zeros({rows.size(), src.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) out(i, j) = src(rows[i], j);
  return out;
}

}  // namespace

LogisticResult train_logistic_baseline(const Tensor& features,
                                       const std::vector<int>& labels,
                                       const LogisticConfig& cfg) {
  cfg.validate();
  check_binary_labels(features, labels, "train_logistic_baseline");

  ParamStore store;
  store.create("lr/w", Tensor::zeros({features.cols(), 1}));
  store.create("lr/b", Tensor::zeros({1}));
  AdamConfig adam;
  adam.lr = cfg.learning_rate;

  LogisticResult res;
  std::vector<std::size_t> order(features.rows());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x10B1 + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      std::vector<std::size_t> rows(order.begin() + lo, order.begin() + hi);
      Tensor y = Tensor::zeros({rows.size(), 1});
      for (std::size_t i = 0; i < rows.size(); ++i)
        y(i, 0) = static_cast<double>(labels[rows[i]]);
      Graph g;
      Var z = add_rowvec(matmul(g.constant(take_rows(features, rows)),
                                g.param(store, "lr/w")),
                         g.param(store, "lr/b"));
      Var loss = mean_all(sub(softplus(z), mul(g.constant(y), z)));
      g.backward(loss);
      store.adam_step(adam);
      loss_sum += loss.val().item() * static_cast<double>(rows.size());
    }
    res.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }
  res.model.w = store.at("lr/w");
  res.model.b = store.at("lr/b")(0);
  return res;
}

std::vector<double> predict_scores(const LogisticModel& model,
                                   const Tensor& features) {
  if (features.cols() != model.w.rows())
    throw std::invalid_argument("logistic predict: dimension mismatch");
  std::vector<double> scores;
  scores.reserve(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    double z = model.b;
    for (std::size_t j = 0; j < features.cols(); ++j)
      z += features(i, j) * model.w(j, 0);
    scores.push_back(z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                              : std::exp(z) / (1.0 + std::exp(z)));
  }
  return scores;
}

DnnResult train_dnn_baseline(const Tensor& features, const std::vector<int>& labels,
                             GanConfig cfg) {
  check_binary_labels(features, labels, "train_dnn_baseline");
  if (cfg.feature_dim == 0) cfg.feature_dim = features.cols();
  if (features.cols() != cfg.feature_dim)
    throw std::invalid_argument("train_dnn_baseline: feature dimension mismatch");
  cfg.validate();

  DnnResult res;
  res.model.cfg = cfg;
  std::mt19937_64 rng_init(derive_seed(cfg.seed, 0xD22));
  init_discriminator(res.model.d_params, cfg, rng_init);
  ParamStore& dp = res.model.d_params;
  AdamConfig adam;
  adam.lr = cfg.learning_rate;

  std::vector<std::size_t> order(features.rows());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xD33 + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      std::vector<std::size_t> rows(order.begin() + lo, order.begin() + hi);
      std::vector<std::size_t> y;
      y.reserve(rows.size());
      for (std::size_t r : rows) y.push_back(labels[r] == 1 ? 1 : 2);
      Graph g;
      DiscOut out = discriminator_forward(g, dp, g.constant(take_rows(features, rows)),
                                          cfg, true, true, rng);
      Var loss = loss_labeled(out.logits, y);
      g.backward(loss);
      dp.adam_step(adam);
      loss_sum += loss.val().item() * static_cast<double>(rows.size());
    }
    res.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }
  return res;
}

}  // namespace raregan
