#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "raregan/graph.hpp"
#include "raregan/param_store.hpp"
#include "raregan/tensor.hpp"

namespace raregan {

// Semi-supervised GAN over fixed-width feature vectors. The discriminator
// emits K real-class logits (class 1 = positive, class 2 = negative); the
// implicit fake class is carried by an appended zero logit, so
// p(class k) = exp(l_k)/(Z+1) and p(fake) = 1/(Z+1) with Z = sum_k exp(l_k).
struct GanConfig {
  std::size_t feature_dim = 0;  // filled in from the data by train_gan
  std::size_t n_classes = 2;    // K
  std::vector<std::size_t> hidden_widths = {256, 128, 64, 32, 16};
  std::size_t noise_dim = 100;  // d_z
  double dropout = 0.3;         // discriminator hidden layers only
  double leak = 0.2;
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  double learning_rate = 0.001;
  // First-moment decay for the adversarial Adam steps only; the supervised
  // baseline keeps the stock 0.9. The low default tames oscillation between
  // the discriminator and generator updates.
  double adam_beta1 = 0.5;
  // +1 adds the conditional-entropy term as written (a negative quantity,
  // so minimization spreads the class-conditional toward uniform); -1 flips
  // it so minimization sharpens the conditional on unlabeled data, which is
  // what actually helps the classifier and is the default.
  double entropy_sign = -1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const GanConfig& c);
void from_json(const nlohmann::json& j, GanConfig& c);

// p(class k | x) for k = 1..K plus p(fake | x), overflow-safe.
struct ClassAndFake {
  std::vector<double> class_probs;
  double p_fake = 0.0;

  double d_of_x() const { return 1.0 - p_fake; }  // Z/(Z+1)
};
ClassAndFake class_and_fake_probs(const std::vector<double>& logits);

// ---- graph-side losses (batch logits are B x K) ----

// Mean cross-entropy over the K real classes; labels are 1-based in {1..K}.
Var loss_labeled(Var logits, const std::vector<std::size_t>& labels);
// Mean of -log(Z/(Z+1)): the cost of calling a real sample fake.
Var loss_unlabeled(Var logits);
// Mean of log(Z+1): the cost of calling a generated sample real.
Var loss_fake(Var logits);
// Mean of sum_k p(k|x) log p(k|x) over the K-class conditional; in [-ln K, 0].
Var loss_entropy(Var logits);
// Squared distance between mean feature activations of the two batches.
Var loss_feature_matching(Var real_features, Var fake_features);
// (1/(N(N-1))) * sum over ordered pairs i != j of cos^2(f_i, f_j); in [0, 1].
Var loss_pull_away(Var fake_features);

// ---- networks ----

// Creates weight-normalized hidden stacks plus a plain affine output layer.
// Parameter names are "<prefix>/h<i>/{v,g,b}" and "<prefix>/out/{w,b}".
void init_discriminator(ParamStore& store, const GanConfig& cfg,
                        std::mt19937_64& rng);
void init_generator(ParamStore& store, const GanConfig& cfg,
                    std::mt19937_64& rng);

struct DiscOut {
  Var logits;    // B x K
  Var features;  // B x last_hidden_width, pre-dropout activations
};

// bind_params = true routes gradients into `store`; false freezes the current
// values as constants (inference, or holding one side fixed during training).
DiscOut discriminator_forward(Graph& g, ParamStore& store, Var x,
                              const GanConfig& cfg, bool bind_params,
                              bool training, std::mt19937_64& rng);
// Hidden widths mirror the discriminator (reversed); tanh output in (-1, 1).
Var generator_forward(Graph& g, ParamStore& store, Var z, const GanConfig& cfg,
                      bool bind_params);

// ---- training ----

struct LossBreakdown {
  double labeled = 0.0;
  double unlabeled = 0.0;
  double fake = 0.0;
  double entropy = 0.0;  // signed term actually added to the total
  double feature_matching = 0.0;
  double pull_away = 0.0;
  double total_d = 0.0;
  double total_g = 0.0;
};

struct StepLoss {
  std::size_t epoch = 0;
  std::size_t step = 0;
  LossBreakdown losses;
};

struct GanModel {
  GanConfig cfg;
  ParamStore d_params;
  ParamStore g_params;

  nlohmann::json to_json() const;
  static GanModel from_json(const nlohmann::json& j);
};

struct GanTrainResult {
  GanModel model;
  std::vector<StepLoss> history;
};

// One discriminator step then one generator step per batch of unlabeled data;
// labeled batches cycle with reshuffling. Deterministic per seed.
GanTrainResult train_gan(const Tensor& labeled_features,
                         const std::vector<std::size_t>& labels,
                         const Tensor& unlabeled_features, GanConfig cfg);

// score = p(positive and real) = exp(l_1)/(Z+1); dropout disabled.
std::vector<double> predict_scores(const GanModel& model, const Tensor& features);

// Loss-history CSV: "epoch,step,L_labeled,L_unlabeled,L_fake,L_entropy,
// L_FM,L_PT,L_D,L_G".
void write_loss_history(std::ostream& os, const std::vector<StepLoss>& history);

}  // namespace raregan
