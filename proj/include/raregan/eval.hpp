#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "raregan/ssgan.hpp"
#include "raregan/tensor.hpp"

namespace raregan {

struct PrPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

// Threshold sweep in descending score order with ties grouped; the first
// entry is the anchor (recall 0 at the precision of the highest threshold),
// so points.size() == distinct scores + 1 and recall is non-decreasing.
struct PrCurve {
  std::vector<PrPoint> points;
  double base_rate = 0.0;  // positive prevalence
};

// labels are {0, 1} with 1 = positive; needs both classes present.
PrCurve pr_curve(const std::vector<double>& scores, const std::vector<int>& labels);

// Trapezoidal integral of precision over recall.
double pr_auc(const PrCurve& curve);

// CSV "threshold,recall,precision", one row per point (anchor first).
void write_pr_csv(std::ostream& os, const PrCurve& curve);

// ---- baselines ----

struct LogisticConfig {
  std::size_t epochs = 60;
  double learning_rate = 0.01;
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const LogisticConfig& c);
void from_json(const nlohmann::json& j, LogisticConfig& c);

struct LogisticModel {
  Tensor w;  // d x 1
  double b = 0.0;

  nlohmann::json to_json() const;
  static LogisticModel from_json(const nlohmann::json& j);
};

struct LogisticResult {
  LogisticModel model;
  std::vector<double> epoch_loss;
};

LogisticResult train_logistic_baseline(const Tensor& features,
                                       const std::vector<int>& labels,
                                       const LogisticConfig& cfg);

std::vector<double> predict_scores(const LogisticModel& model,
                                   const Tensor& features);

// Supervised control: the discriminator architecture trained with the labeled
// cross-entropy term only, scored with the same exp(l_pos)/(Z+1) rule. The
// returned model's generator store is empty.
struct DnnResult {
  GanModel model;
  std::vector<double> epoch_loss;
};

DnnResult train_dnn_baseline(const Tensor& features, const std::vector<int>& labels,
                             GanConfig cfg);

}  // namespace raregan
