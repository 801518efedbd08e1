#include "raregan/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "raregan/param_store.hpp"
#include "raregan/synthgen.hpp"

namespace raregan {

void EncoderConfig::validate() const {
  if (padded_len == 0) throw std::invalid_argument("encoder: padded_len must be >= 1");
  if (hidden_dim == 0) throw std::invalid_argument("encoder: hidden_dim must be >= 1");
  if (epochs == 0) throw std::invalid_argument("encoder: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("encoder: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("encoder: learning_rate must be > 0");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"padded_len", c.padded_len}, {"hidden_dim", c.hidden_dim},
                     {"epochs", c.epochs},         {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.padded_len = j.value("padded_len", c.padded_len);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
}

PaddedCodes pad_or_truncate(const std::vector<MedicalCode>& codes, std::size_t n) {
  if (codes.empty()) throw std::invalid_argument("pad_or_truncate: empty code sequence");
  if (n == 0) throw std::invalid_argument("pad_or_truncate: n must be >= 1");
  PaddedCodes out;
  out.codes.resize(n);
  out.mask.assign(n, 0);
  const std::size_t keep = std::min(codes.size(), n);
  const std::size_t start = codes.size() - keep;  // most recent history wins
  for (std::size_t t = 0; t < keep; ++t) {
    out.codes[t] = codes[start + t];
    out.mask[t] = 1;
  }
  return out;
}

nlohmann::json LstmCell::to_json() const {
  return nlohmann::json{{"input_dim", input_dim},
                        {"hidden_dim", hidden_dim},
                        {"W", W.data},
                        {"b", b.data}};
}

LstmCell LstmCell::from_json(const nlohmann::json& j) {
  LstmCell cell;
  cell.input_dim = j.at("input_dim").get<std::size_t>();
  cell.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  const auto w = j.at("W").get<std::vector<double>>();
  const auto b = j.at("b").get<std::vector<double>>();
  const std::size_t rows = cell.input_dim + cell.hidden_dim;
  const std::size_t cols = 4 * cell.hidden_dim;
  if (w.size() != rows * cols) throw std::invalid_argument("LstmCell: W size mismatch");
  if (b.size() != cols) throw std::invalid_argument("LstmCell: b size mismatch");
  cell.W = Tensor::matrix(rows, cols, w);
  cell.b = Tensor::vec(b);
  return cell;
}

Var lstm_pooled(Graph& g, Var emb_matrix, Var W, Var b, std::size_t hidden_dim,
                const std::vector<std::size_t>& rows, const Tensor& mask,
                std::size_t batch, std::size_t n_steps) {
  if (rows.size() != batch * n_steps)
    throw std::invalid_argument("lstm_pooled: rows size mismatch");
  if (mask.rows() != batch || mask.cols() != n_steps)
    throw std::invalid_argument("lstm_pooled: mask shape mismatch");
  const std::size_t dh = hidden_dim;
  Var h = g.constant(Tensor::zeros({batch, dh}));
  Var c = g.constant(Tensor::zeros({batch, dh}));
  std::vector<Var> hs;
  hs.reserve(n_steps);
  std::vector<std::size_t> idx(batch);
  for (std::size_t t = 0; t < n_steps; ++t) {
    for (std::size_t i = 0; i < batch; ++i) idx[i] = rows[i * n_steps + t];
    Var x = gather_rows(emb_matrix, idx);
    Var pre = add_rowvec(matmul(concat_cols(x, h), W), b);
    Var gi = sigmoid(slice_cols(pre, 0, dh));
    Var gf = sigmoid(slice_cols(pre, dh, 2 * dh));
    Var gc = tanh(slice_cols(pre, 2 * dh, 3 * dh));
    Var go = sigmoid(slice_cols(pre, 3 * dh, 4 * dh));
    c = add(mul(gf, c), mul(gi, gc));
    h = mul(go, tanh(c));
    hs.push_back(h);
  }
  return masked_max_time(hs, mask);
}

namespace {

struct SequenceBatch {
  std::vector<std::size_t> rows;  // batch x n_steps embedding-row ids
  Tensor mask;
  std::size_t batch = 0;
};

SequenceBatch make_batch(const std::vector<const PatientRecord*>& recs,
                         const Vocabulary& vocab, const EmbeddingMatrix& emb,
                         std::size_t padded_len) {
  SequenceBatch sb;
  sb.batch = recs.size();
  sb.rows.resize(sb.batch * padded_len, EmbeddingMatrix::kZeroRow);
  sb.mask = Tensor::zeros({sb.batch, padded_len});
  for (std::size_t i = 0; i < recs.size(); ++i) {
    PaddedCodes pc = pad_or_truncate(recs[i]->codes, padded_len);
    for (std::size_t t = 0; t < padded_len; ++t) {
      if (!pc.mask[t]) continue;
      sb.rows[i * padded_len + t] = emb.row_of(vocab.index_of(*pc.codes[t]));
      sb.mask(i, t) = 1.0;
    }
  }
  return sb;
}

}  // namespace

Tensor encode_raw(const std::vector<PatientRecord>& records,
                  const Vocabulary& vocab, const EmbeddingMatrix& emb,
                  const LstmCell& cell, std::size_t padded_len) {
  if (records.empty()) throw std::invalid_argument("encode_raw: no records");
  if (cell.input_dim != emb.dim)
    throw std::invalid_argument("encode_raw: cell/embedding dimension mismatch");
  const std::size_t dh = cell.hidden_dim;
  Tensor out = Tensor::zeros({records.size(), dh + 2});
  const std::size_t chunk = 512;
  for (std::size_t lo = 0; lo < records.size(); lo += chunk) {
    const std::size_t hi = std::min(records.size(), lo + chunk);
    std::vector<const PatientRecord*> recs;
    recs.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) recs.push_back(&records[i]);
    SequenceBatch sb = make_batch(recs, vocab, emb, padded_len);
    Graph g;
    Var pooled = lstm_pooled(g, g.constant(emb.center), g.constant(cell.W),
                             g.constant(cell.b), dh, sb.rows, sb.mask, sb.batch,
                             padded_len);
    const Tensor& p = g.value(pooled);
    for (std::size_t i = 0; i < sb.batch; ++i) {
      for (std::size_t d = 0; d < dh; ++d) out(lo + i, d) = p(i, d);
      out(lo + i, dh) = static_cast<double>(records[lo + i].age);
      out(lo + i, dh + 1) = static_cast<double>(records[lo + i].gender);
    }
  }
  return out;
}

FeatureScaler FeatureScaler::fit(const Tensor& features) {
  if (features.rows() == 0) throw std::invalid_argument("FeatureScaler: no rows");
  FeatureScaler s;
  const std::size_t d = features.cols();
  s.lo.assign(d, std::numeric_limits<double>::infinity());
  s.hi.assign(d, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      s.lo[j] = std::min(s.lo[j], features(i, j));
      s.hi[j] = std::max(s.hi[j], features(i, j));
    }
  }
  return s;
}

Tensor FeatureScaler::apply(const Tensor& features) const {
  if (features.cols() != lo.size())
    throw std::invalid_argument("FeatureScaler: dimension mismatch");
  Tensor out = features;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      const double span = hi[j] - lo[j];
      double v = span > 0.0 ? 2.0 * (features(i, j) - lo[j]) / span - 1.0 : 0.0;
      out(i, j) = std::clamp(v, -1.0, 1.0);
    }
  }
  return out;
}

nlohmann::json FeatureScaler::to_json() const {
  return nlohmann::json{{"lo", lo}, {"hi", hi}};
}

FeatureScaler FeatureScaler::from_json(const nlohmann::json& j) {
  FeatureScaler s;
  s.lo = j.at("lo").get<std::vector<double>>();
  s.hi = j.at("hi").get<std::vector<double>>();
  if (s.lo.size() != s.hi.size())
    throw std::invalid_argument("FeatureScaler: lo/hi size mismatch");
  return s;
}

std::vector<double> encode(const PatientRecord& rec, const Vocabulary& vocab,
                           const EmbeddingMatrix& emb, const LstmCell& cell,
                           std::size_t padded_len, const FeatureScaler& scaler) {
  Tensor raw = encode_raw({rec}, vocab, emb, cell, padded_len);
  Tensor scaled = scaler.apply(raw);
  return std::vector<double>(scaled.data.begin(), scaled.data.end());
}

EncoderResult train_encoder(const std::vector<PatientRecord>& records,
                            const Vocabulary& vocab, const EmbeddingMatrix& emb,
                            const EncoderConfig& cfg) {
  cfg.validate();
  if (emb.dim == 0) throw std::invalid_argument("train_encoder: empty embedding");

  std::vector<const PatientRecord*> labeled;
  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& r : records) {
    if (r.label == Label::Positive) {
      ++n_pos;
      labeled.push_back(&r);
    } else if (r.label == Label::Negative) {
      ++n_neg;
      labeled.push_back(&r);
    }
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument(
        "train_encoder: need at least one positive and one negative labeled record");

  const std::size_t d_in = emb.dim;
  const std::size_t dh = cfg.hidden_dim;
  ParamStore store;
  {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x10c0));
    store.create("lstm/W", glorot_uniform(d_in + dh, 4 * dh, rng));
    Tensor b = Tensor::zeros({4 * dh});
    for (std::size_t j = dh; j < 2 * dh; ++j) b(j) = 1.0;  // open forget gates
    store.create("lstm/b", b);
    store.create("head/w", glorot_uniform(dh, 1, rng));
    store.create("head/b", Tensor::zeros({1}));
  }

  AdamConfig adam;
  adam.lr = cfg.learning_rate;

  std::vector<double> epoch_loss;
  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xE50D + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      std::vector<const PatientRecord*> recs;
      Tensor y = Tensor::zeros({hi - lo, 1});
      for (std::size_t i = lo; i < hi; ++i) {
        recs.push_back(labeled[order[i]]);
        y(i - lo, 0) = recs.back()->label == Label::Positive ? 1.0 : 0.0;
      }
      SequenceBatch sb = make_batch(recs, vocab, emb, cfg.padded_len);
      Graph g;
      Var pooled = lstm_pooled(g, g.constant(emb.center), g.param(store, "lstm/W"),
                               g.param(store, "lstm/b"), dh, sb.rows, sb.mask,
                               sb.batch, cfg.padded_len);
      Var logits = add_rowvec(matmul(pooled, g.param(store, "head/w")),
                                g.param(store, "head/b"));
      Var loss = mean_all(
          sub(softplus(logits), mul(g.constant(y), logits)));
      g.backward(loss);
      store.adam_step(adam);
      loss_sum += g.value(loss).item() * static_cast<double>(hi - lo);
    }
    epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }

  EncoderResult res;
  res.cell.input_dim = d_in;
  res.cell.hidden_dim = dh;
  res.cell.W = store.at("lstm/W");
  res.cell.b = store.at("lstm/b");
  res.epoch_loss = std::move(epoch_loss);
  return res;
}

}  // namespace raregan
