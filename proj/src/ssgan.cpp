#include "raregan/ssgan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "raregan/synthgen.hpp"

namespace raregan {

void GanConfig::validate() const {
  if (n_classes < 2) throw std::invalid_argument("gan: n_classes must be >= 2");
  if (batch_size < 2)
    throw std::invalid_argument("gan: batch_size must be >= 2 (pull-away needs pairs)");
  if (hidden_widths.empty()) throw std::invalid_argument("gan: hidden_widths empty");
  for (std::size_t w : hidden_widths)
    if (w == 0) throw std::invalid_argument("gan: zero hidden width");
  if (noise_dim == 0) throw std::invalid_argument("gan: noise_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw std::invalid_argument("gan: dropout must be in [0, 1)");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("gan: learning_rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0))
    throw std::invalid_argument("gan: adam_beta1 must be in [0, 1)");
  if (epochs == 0) throw std::invalid_argument("gan: epochs must be >= 1");
  if (entropy_sign != 1.0 && entropy_sign != -1.0)
    throw std::invalid_argument("gan: entropy_sign must be +1 or -1");
}

void to_json(nlohmann::json& j, const GanConfig& c) {
  j = nlohmann::json{{"feature_dim", c.feature_dim},
                     {"n_classes", c.n_classes},
                     {"hidden_widths", c.hidden_widths},
                     {"noise_dim", c.noise_dim},
                     {"dropout", c.dropout},
                     {"leak", c.leak},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"learning_rate", c.learning_rate},
                     {"adam_beta1", c.adam_beta1},
                     {"entropy_sign", c.entropy_sign},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, GanConfig& c) {
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.n_classes = j.value("n_classes", c.n_classes);
  c.hidden_widths = j.value("hidden_widths", c.hidden_widths);
  c.noise_dim = j.value("noise_dim", c.noise_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.leak = j.value("leak", c.leak);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.entropy_sign = j.value("entropy_sign", c.entropy_sign);
  c.seed = j.value("seed", c.seed);
}

ClassAndFake class_and_fake_probs(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("class_and_fake_probs: no logits");
  double m = 0.0;  // the implicit fake logit
  for (double l : logits) {
    if (!std::isfinite(l))
      throw std::invalid_argument("class_and_fake_probs: non-finite logit");
    m = std::max(m, l);
  }
  double denom = std::exp(-m);  // appended zero logit, shifted
  for (double l : logits) denom += std::exp(l - m);
  ClassAndFake out;
  out.class_probs.reserve(logits.size());
  for (double l : logits) out.class_probs.push_back(std::exp(l - m) / denom);
  out.p_fake = std::exp(-m) / denom;
  return out;
}

Var loss_labeled(Var logits, const std::vector<std::size_t>& labels) {
  const Tensor& l = logits.val();
  if (labels.size() != l.rows())
    throw std::invalid_argument("loss_labeled: labels/batch size mismatch");
  std::vector<std::size_t> cols(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || labels[i] > l.cols())
      throw std::invalid_argument("loss_labeled: label out of range 1..K");
    cols[i] = labels[i] - 1;
  }
  return mean_all(sub(logsumexp_rows(logits, false), pick_cols(logits, cols)));
}

Var loss_unlabeled(Var logits) {
  return mean_all(sub(logsumexp_rows(logits, true), logsumexp_rows(logits, false)));
}

Var loss_fake(Var logits) { return mean_all(logsumexp_rows(logits, true)); }

Var loss_entropy(Var logits) {
  // sum_k p log p written as p * (l - logsumexp) so vanishing probabilities
  // contribute 0 instead of 0 * log(0).
  Var centered = sub_colvec(logits, logsumexp_rows(logits, false));
  return mean_all(row_sum(mul(softmax_rows(logits), centered)));
}

Var loss_feature_matching(Var real_features, Var fake_features) {
  if (real_features.val().rows() == 0 || fake_features.val().rows() == 0)
    throw std::invalid_argument("loss_feature_matching: empty batch");
  return sum_sq(sub(mean_rows(fake_features), mean_rows(real_features)));
}

Var loss_pull_away(Var fake_features) {
  const Tensor& f = fake_features.val();
  const std::size_t n = f.rows();
  if (n < 2) throw std::invalid_argument("loss_pull_away: needs at least 2 rows");
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < f.cols(); ++j) ss += f(i, j) * f(i, j);
    if (ss == 0.0)
      throw std::invalid_argument("loss_pull_away: zero-norm feature row");
  }
  Var norms = sqrt(row_sum(mul(fake_features, fake_features)));
  Var u = div_colvec(fake_features, norms);
  Var cos = matmul_nt(u, u);  // N x N, diagonal identically 1
  Var off_diag = add_scalar(sum_all(mul(cos, cos)), -static_cast<double>(n));
  return scale(off_diag, 1.0 / (static_cast<double>(n) * static_cast<double>(n - 1)));
}

namespace {

// Weight-normalized affine layer on (prefix)/{v,g,b}; bind=false freezes the
// stored values as constants.
Var affine_wn(Graph& g, ParamStore& store, const std::string& prefix, Var x,
              bool bind) {
  auto P = [&](const std::string& name) {
    return bind ? g.param(store, name) : g.constant(store.at(name));
  };
  return add_rowvec(matmul(x, weight_norm(P(prefix + "/v"), P(prefix + "/g"))),
                    P(prefix + "/b"));
}

Var affine_plain(Graph& g, ParamStore& store, const std::string& prefix, Var x,
                 bool bind) {
  auto P = [&](const std::string& name) {
    return bind ? g.param(store, name) : g.constant(store.at(name));
  };
  return add_rowvec(matmul(x, P(prefix + "/w")), P(prefix + "/b"));
}

std::vector<double> column_norms(const Tensor& v) {
  std::vector<double> g(v.cols(), 0.0);
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) g[j] += v(i, j) * v(i, j);
  for (double& x : g) x = std::sqrt(x);
  return g;
}

// Hidden stack of weight-normalized layers plus a plain affine output layer.
// g is initialized to the column norms of v so the initial effective weights
// equal v itself.
void init_stack(ParamStore& store, const std::string& prefix, std::size_t in_dim,
                const std::vector<std::size_t>& widths, std::size_t out_dim,
                std::mt19937_64& rng) {
  std::size_t d = in_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    Tensor v = glorot_uniform(d, widths[i], rng);
    store.create(prefix + "/h" + std::to_string(i) + "/v", v);
    store.create(prefix + "/h" + std::to_string(i) + "/g",
                 Tensor::vec(column_norms(v)));
    store.create(prefix + "/h" + std::to_string(i) + "/b",
                 Tensor::zeros({widths[i]}));
    d = widths[i];
  }
  store.create(prefix + "/out/w", glorot_uniform(d, out_dim, rng));
  store.create(prefix + "/out/b", Tensor::zeros({out_dim}));
}

std::vector<std::size_t> mirrored(const std::vector<std::size_t>& widths) {
  return std::vector<std::size_t>(widths.rbegin(), widths.rend());
}

}  // namespace

void init_discriminator(ParamStore& store, const GanConfig& cfg,
                        std::mt19937_64& rng) {
  if (cfg.feature_dim == 0)
    throw std::invalid_argument("init_discriminator: feature_dim not set");
  init_stack(store, "d", cfg.feature_dim, cfg.hidden_widths, cfg.n_classes, rng);
}

void init_generator(ParamStore& store, const GanConfig& cfg,
                    std::mt19937_64& rng) {
  if (cfg.feature_dim == 0)
    throw std::invalid_argument("init_generator: feature_dim not set");
  init_stack(store, "g", cfg.noise_dim, mirrored(cfg.hidden_widths),
             cfg.feature_dim, rng);
}

DiscOut discriminator_forward(Graph& g, ParamStore& store, Var x,
                              const GanConfig& cfg, bool bind_params,
                              bool training, std::mt19937_64& rng) {
  Var h = x;
  Var features;
  for (std::size_t i = 0; i < cfg.hidden_widths.size(); ++i) {
    h = leaky_relu(affine_wn(g, store, "d/h" + std::to_string(i), h, bind_params),
                   cfg.leak);
    if (i + 1 == cfg.hidden_widths.size()) features = h;  // pre-dropout
    h = dropout(h, cfg.dropout, training, rng);
  }
  DiscOut out;
  out.logits = affine_plain(g, store, "d/out", h, bind_params);
  out.features = features;
  return out;
}

Var generator_forward(Graph& g, ParamStore& store, Var z, const GanConfig& cfg,
                      bool bind_params) {
  Var h = z;
  const auto widths = mirrored(cfg.hidden_widths);
  for (std::size_t i = 0; i < widths.size(); ++i)
    h = leaky_relu(affine_wn(g, store, "g/h" + std::to_string(i), h, bind_params),
                   cfg.leak);
  return tanh(affine_plain(g, store, "g/out", h, bind_params));
}

nlohmann::json GanModel::to_json() const {
  return nlohmann::json{{"config", cfg},
                        {"d_params", d_params.to_json()},
                        {"g_params", g_params.to_json()}};
}

GanModel GanModel::from_json(const nlohmann::json& j) {
  GanModel m;
  m.cfg = j.at("config").get<GanConfig>();
  m.d_params = ParamStore::from_json(j.at("d_params"));
  m.g_params = ParamStore::from_json(j.at("g_params"));
  return m;
}

namespace {

void fill_normal(Tensor& t, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& x : t.data) x = dist(rng);
}

Tensor gather_tensor_rows(const Tensor& src, const std::vector<std::size_t>& rows) {
  Tensor out = Tensor::zeros({rows.size(), src.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) out(i, j) = src(rows[i], j);
  return out;
}

}  // namespace

GanTrainResult train_gan(const Tensor& labeled_features,
                         const std::vector<std::size_t>& labels,
                         const Tensor& unlabeled_features, GanConfig cfg) {
  if (labeled_features.rows() == 0)
    throw std::invalid_argument("train_gan: no labeled examples");
  if (labels.size() != labeled_features.rows())
    throw std::invalid_argument("train_gan: labels/features size mismatch");
  if (cfg.feature_dim == 0) cfg.feature_dim = labeled_features.cols();
  if (labeled_features.cols() != cfg.feature_dim ||
      unlabeled_features.cols() != cfg.feature_dim)
    throw std::invalid_argument("train_gan: feature dimension mismatch");
  cfg.validate();
  std::vector<std::size_t> per_class(cfg.n_classes, 0);
  for (std::size_t y : labels) {
    if (y < 1 || y > cfg.n_classes)
      throw std::invalid_argument("train_gan: label out of range 1..K");
    ++per_class[y - 1];
  }
  for (std::size_t k = 0; k < cfg.n_classes; ++k)
    if (per_class[k] == 0)
      throw std::invalid_argument("train_gan: class " + std::to_string(k + 1) +
                                  " has no labeled examples");
  if (unlabeled_features.rows() < cfg.batch_size)
    throw std::invalid_argument("train_gan: fewer unlabeled examples than batch_size");

  GanTrainResult res;
  res.model.cfg = cfg;
  {
    std::mt19937_64 rng_d(derive_seed(cfg.seed, 0xD15C));
    init_discriminator(res.model.d_params, cfg, rng_d);
    std::mt19937_64 rng_g(derive_seed(cfg.seed, 0x6E4E));
    init_generator(res.model.g_params, cfg, rng_g);
  }
  ParamStore& dp = res.model.d_params;
  ParamStore& gp = res.model.g_params;
  AdamConfig adam;
  adam.lr = cfg.learning_rate;
  adam.beta1 = cfg.adam_beta1;

  const std::size_t batch = cfg.batch_size;
  const std::size_t steps_per_epoch = unlabeled_features.rows() / batch;
  std::vector<std::size_t> u_order(unlabeled_features.rows());
  std::iota(u_order.begin(), u_order.end(), 0);
  std::vector<std::size_t> l_order(labeled_features.rows());
  std::iota(l_order.begin(), l_order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xBA7C + epoch));
    std::shuffle(u_order.begin(), u_order.end(), rng);
    std::shuffle(l_order.begin(), l_order.end(), rng);
    std::size_t lptr = 0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      try {
        // Assemble the three equal-size batches.
        std::vector<std::size_t> l_rows;
        l_rows.reserve(batch);
        std::vector<std::size_t> y_batch;
        y_batch.reserve(batch);
        while (l_rows.size() < batch) {
          if (lptr == l_order.size()) {
            std::shuffle(l_order.begin(), l_order.end(), rng);
            lptr = 0;
          }
          l_rows.push_back(l_order[lptr]);
          y_batch.push_back(labels[l_order[lptr]]);
          ++lptr;
        }
        Tensor x_l = gather_tensor_rows(labeled_features, l_rows);
        std::vector<std::size_t> u_rows(u_order.begin() + step * batch,
                                        u_order.begin() + (step + 1) * batch);
        Tensor x_u = gather_tensor_rows(unlabeled_features, u_rows);
        Tensor z = Tensor::zeros({batch, cfg.noise_dim});
        fill_normal(z, rng);

        StepLoss rec;
        rec.epoch = epoch;
        rec.step = step;

        {  // discriminator update; generator held fixed
          Graph gr;
          Var fake = generator_forward(gr, gp, gr.constant(z), cfg, false);
          DiscOut dl = discriminator_forward(gr, dp, gr.constant(x_l), cfg, true,
                                             true, rng);
          DiscOut du = discriminator_forward(gr, dp, gr.constant(x_u), cfg, true,
                                             true, rng);
          DiscOut df = discriminator_forward(gr, dp, fake, cfg, true, true, rng);
          Var l_lab = loss_labeled(dl.logits, y_batch);
          Var l_unl = loss_unlabeled(du.logits);
          Var l_fak = loss_fake(df.logits);
          Var l_ent = scale(loss_entropy(du.logits), cfg.entropy_sign);
          Var l_d = add(add(add(l_lab, l_unl), l_fak), l_ent);
          gr.backward(l_d);
          dp.adam_step(adam);
          rec.losses.labeled = l_lab.val().item();
          rec.losses.unlabeled = l_unl.val().item();
          rec.losses.fake = l_fak.val().item();
          rec.losses.entropy = l_ent.val().item();
          rec.losses.total_d = l_d.val().item();
        }
        {  // generator update against the freshly stepped discriminator
          Tensor z2 = Tensor::zeros({batch, cfg.noise_dim});
          fill_normal(z2, rng);
          Graph gr;
          Var fake = generator_forward(gr, gp, gr.constant(z2), cfg, true);
          DiscOut df = discriminator_forward(gr, dp, fake, cfg, false, false, rng);
          DiscOut du = discriminator_forward(gr, dp, gr.constant(x_u), cfg, false,
                                             false, rng);
          Var l_fm = loss_feature_matching(du.features, df.features);
          Var l_pt = loss_pull_away(df.features);
          Var l_g = add(l_fm, l_pt);
          gr.backward(l_g);
          gp.adam_step(adam);
          rec.losses.feature_matching = l_fm.val().item();
          rec.losses.pull_away = l_pt.val().item();
          rec.losses.total_g = l_g.val().item();
        }
        res.history.push_back(rec);
      } catch (const std::exception& e) {
        throw std::runtime_error("train_gan: epoch " + std::to_string(epoch) +
                                 ", step " + std::to_string(step) + ": " +
                                 e.what());
      }
    }
  }
  return res;
}

std::vector<double> predict_scores(const GanModel& model, const Tensor& features) {
  if (features.cols() != model.cfg.feature_dim)
    throw std::invalid_argument("predict_scores: feature dimension mismatch");
  std::vector<double> scores;
  scores.reserve(features.rows());
  std::mt19937_64 rng(0);  // unused: inference runs with dropout disabled
  // bind_params=false only reads the store, so shedding const here is safe.
  ParamStore& dp = const_cast<ParamStore&>(model.d_params);
  const std::size_t chunk = 512;
  for (std::size_t lo = 0; lo < features.rows(); lo += chunk) {
    const std::size_t hi = std::min(features.rows(), lo + chunk);
    std::vector<std::size_t> rows(hi - lo);
    std::iota(rows.begin(), rows.end(), lo);
    Graph gr;
    DiscOut out = discriminator_forward(gr, dp, gr.constant(gather_tensor_rows(features, rows)),
                                        model.cfg, false, false, rng);
    const Tensor& l = out.logits.val();
    for (std::size_t i = 0; i < l.rows(); ++i) {
      double m = 0.0;
      for (std::size_t k = 0; k < l.cols(); ++k) m = std::max(m, l(i, k));
      double denom = std::exp(-m);
      for (std::size_t k = 0; k < l.cols(); ++k) denom += std::exp(l(i, k) - m);
      scores.push_back(std::exp(l(i, 0) - m) / denom);
    }
  }
  return scores;
}

void write_loss_history(std::ostream& os, const std::vector<StepLoss>& history) {
  os << "epoch,step,L_labeled,L_unlabeled,L_fake,L_entropy,L_FM,L_PT,L_D,L_G\n";
  char buf[64];
  for (const auto& s : history) {
    os << s.epoch << ',' << s.step;
    const double vals[] = {s.losses.labeled,  s.losses.unlabeled,
                           s.losses.fake,     s.losses.entropy,
                           s.losses.feature_matching, s.losses.pull_away,
                           s.losses.total_d,  s.losses.total_g};
    for (double v : vals) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace raregan
