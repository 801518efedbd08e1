#include "raregan/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "raregan/param_store.hpp"
#include "raregan/sampling.hpp"
#include "raregan/synthgen.hpp"

namespace raregan {

void SgnsConfig::validate() const {
  if (dim < 1) throw std::invalid_argument("skipgram: dim must be >= 1");
  if (window < 1) throw std::invalid_argument("skipgram: window must be >= 1");
  if (negatives < 1) throw std::invalid_argument("skipgram: negatives must be >= 1");
  if (epochs < 1) throw std::invalid_argument("skipgram: epochs must be >= 1");
  if (learning_rate <= 0.0) throw std::invalid_argument("skipgram: learning_rate <= 0");
  if (noise_exponent < 0.0) throw std::invalid_argument("skipgram: noise_exponent < 0");
  if (batch_pairs < 1) throw std::invalid_argument("skipgram: batch_pairs must be >= 1");
}

void to_json(nlohmann::json& j, const SgnsConfig& c) {
  j = nlohmann::json{{"dim", c.dim},
                     {"window", c.window},
                     {"negatives", c.negatives},
                     {"epochs", c.epochs},
                     {"learning_rate", c.learning_rate},
                     {"noise_exponent", c.noise_exponent},
                     {"batch_pairs", c.batch_pairs},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SgnsConfig& c) {
  SgnsConfig d;
  c.dim = j.value("dim", d.dim);
  c.window = j.value("window", d.window);
  c.negatives = j.value("negatives", d.negatives);
  c.epochs = j.value("epochs", d.epochs);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.noise_exponent = j.value("noise_exponent", d.noise_exponent);
  c.batch_pairs = j.value("batch_pairs", d.batch_pairs);
  c.seed = j.value("seed", d.seed);
}

std::vector<double> EmbeddingMatrix::vector_at(std::size_t vocab_index) const {
  std::size_t row = vocab_index + 1;
  if (row >= center.shape.at(0)) {
    throw std::out_of_range("embedding: vocab index " +
                            std::to_string(vocab_index) + " out of range");
  }
  std::vector<double> out(dim);
  for (std::size_t j = 0; j < dim; ++j) out[j] = center(row, j);
  return out;
}

void EmbeddingMatrix::write_csv(std::ostream& os, const Vocabulary& vocab) const {
  if (vocab.size() + 1 != center.shape.at(0)) {
    throw std::invalid_argument("embedding: vocabulary size mismatch");
  }
  os << "kind,id";
  for (std::size_t j = 0; j < dim; ++j) os << ",dim_" << j;
  os << "\n";
  char buf[40];
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const MedicalCode& code = vocab.code_at(i);
    os << to_string(code.kind) << "," << code.id;
    for (std::size_t j = 0; j < dim; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", center(i + 1, j));
      os << "," << buf;
    }
    os << "\n";
  }
}

EmbeddingMatrix EmbeddingMatrix::read_csv(std::istream& is,
                                          const Vocabulary& vocab) {
  std::string header;
  if (!std::getline(is, header)) {
    throw std::runtime_error("embedding csv: missing header");
  }
  std::size_t dim = 0;
  {
    std::stringstream hs(header);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(hs, col, ',')) cols.push_back(col);
    if (cols.size() < 3 || cols[0] != "kind" || cols[1] != "id") {
      throw std::runtime_error("embedding csv: unexpected header: " + header);
    }
    dim = cols.size() - 2;
  }
  EmbeddingMatrix emb;
  emb.dim = dim;
  emb.center = Tensor::zeros({vocab.size() + 1, dim});
  std::vector<char> seen(vocab.size(), 0);
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string kind_s, id_s, cell;
    if (!std::getline(ls, kind_s, ',') || !std::getline(ls, id_s, ',')) {
      throw std::runtime_error("embedding csv line " + std::to_string(lineno) +
                               ": malformed");
    }
    MedicalCode code{code_kind_from_string(kind_s), id_s};
    auto idx = vocab.index_of(code);
    if (!idx) {
      throw std::runtime_error("embedding csv line " + std::to_string(lineno) +
                               ": code " + id_s + " not in vocabulary");
    }
    for (std::size_t j = 0; j < dim; ++j) {
      if (!std::getline(ls, cell, ',')) {
        throw std::runtime_error("embedding csv line " +
                                 std::to_string(lineno) + ": too few columns");
      }
      emb.center(*idx + 1, j) = std::strtod(cell.c_str(), nullptr);
    }
    seen[*idx] = 1;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) {
      throw std::runtime_error("embedding csv: vocabulary code " +
                               vocab.code_at(i).id + " missing");
    }
  }
  return emb;
}

Var sgns_pair_loss(Var center, Var context, Var negatives) {
  Var pos = matmul_nt(context, center);       // 1 x 1
  Var neg = matmul_nt(negatives, center);     // k x 1
  return add(sum_all(softplus(scale(pos, -1.0))), sum_all(softplus(neg)));
}

double sgns_loss(const std::vector<double>& center,
                 const std::vector<double>& context,
                 const std::vector<std::vector<double>>& negatives) {
  Graph g;
  Var cen = g.constant(Tensor::matrix(1, center.size(), center));
  Var ctx = g.constant(Tensor::matrix(1, context.size(), context));
  std::vector<double> flat;
  for (const auto& n : negatives) {
    if (n.size() != center.size()) {
      throw std::invalid_argument("sgns_loss: negative vector dimension mismatch");
    }
    flat.insert(flat.end(), n.begin(), n.end());
  }
  Var negs = g.constant(Tensor::matrix(negatives.size(), center.size(), flat));
  return sgns_pair_loss(cen, ctx, negs).val().item();
}

namespace {

struct PairBatch {
  std::vector<std::size_t> centers;   // embedding-matrix rows (vocab idx + 1)
  std::vector<std::size_t> contexts;
  std::vector<std::size_t> negs;      // batch * k rows
  std::vector<std::size_t> centers_rep;

  void clear() {
    centers.clear();
    contexts.clear();
    negs.clear();
    centers_rep.clear();
  }
};

double sgns_batch_step(ParamStore& store, const PairBatch& batch,
                       const AdamConfig& adam, bool update) {
  std::size_t b = batch.centers.size();
  Graph g;
  Var center_mat = g.param(store, "center");
  Var context_mat = g.param(store, "context");
  Var cen = gather_rows(center_mat, batch.centers);
  Var ctx = gather_rows(context_mat, batch.contexts);
  Var pos_dots = row_sum(mul(cen, ctx));
  Var cen_rep = gather_rows(center_mat, batch.centers_rep);
  Var negs = gather_rows(context_mat, batch.negs);
  Var neg_dots = row_sum(mul(cen_rep, negs));
  Var loss = scale(add(sum_all(softplus(scale(pos_dots, -1.0))),
                       sum_all(softplus(neg_dots))),
                   1.0 / double(b));
  if (update) {
    g.backward(loss);
    store.adam_step(adam);
  }
  return loss.val().item();
}

}  // namespace

SgnsResult train_skipgram(const std::vector<PatientRecord>& records,
                          const Vocabulary& vocab, const SgnsConfig& cfg) {
  cfg.validate();
  if (vocab.size() == 0) {
    throw std::invalid_argument("train_skipgram: empty vocabulary");
  }

  // Sequences as embedding-matrix rows, dropped codes filtered out.
  std::vector<std::vector<std::size_t>> seqs;
  seqs.reserve(records.size());
  for (const PatientRecord& r : records) {
    std::vector<std::size_t> s;
    s.reserve(r.codes.size());
    for (const MedicalCode& c : r.codes) {
      if (auto idx = vocab.index_of(c)) s.push_back(*idx + 1);
    }
    if (s.size() >= 2) seqs.push_back(std::move(s));
  }
  if (seqs.empty()) {
    throw std::invalid_argument(
        "train_skipgram: corpus has no trainable sequences");
  }

  std::vector<double> noise_weights(vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    noise_weights[i] =
        std::pow(double(vocab.count_of(vocab.code_at(i))), cfg.noise_exponent);
  }
  DiscreteSampler noise(noise_weights);

  ParamStore store;
  {
    std::mt19937_64 init_rng(derive_seed(cfg.seed, 0xCE7E));
    double bound = 0.5 / double(cfg.dim);
    Tensor center = Tensor::zeros({vocab.size() + 1, cfg.dim});
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t r = 1; r < center.shape[0]; ++r) {
      for (std::size_t j = 0; j < cfg.dim; ++j) center(r, j) = dist(init_rng);
    }
    store.create("center", std::move(center));
    store.create("context", Tensor::zeros({vocab.size() + 1, cfg.dim}));
  }
  AdamConfig adam;
  adam.lr = cfg.learning_rate;

  SgnsResult result;
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);
  PairBatch batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xE90C + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t pair_count = 0;

    auto flush = [&]() {
      if (batch.centers.empty()) return;
      double mean_loss = sgns_batch_step(store, batch, adam, true);
      loss_sum += mean_loss * double(batch.centers.size());
      pair_count += batch.centers.size();
      batch.clear();
    };

    for (std::size_t si : order) {
      const std::vector<std::size_t>& s = seqs[si];
      for (std::size_t i = 0; i < s.size(); ++i) {
        std::size_t lo = i >= cfg.window ? i - cfg.window : 0;
        std::size_t hi = std::min(s.size() - 1, i + cfg.window);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          batch.centers.push_back(s[i]);
          batch.contexts.push_back(s[j]);
          for (std::size_t n = 0; n < cfg.negatives; ++n) {
            batch.centers_rep.push_back(s[i]);
            batch.negs.push_back(noise(rng) + 1);
          }
          if (batch.centers.size() >= cfg.batch_pairs) flush();
        }
      }
    }
    flush();
    if (pair_count == 0) {
      throw std::invalid_argument("train_skipgram: no training pairs");
    }
    result.epoch_mean_loss.push_back(loss_sum / double(pair_count));
  }

  result.embedding.dim = cfg.dim;
  result.embedding.center = store.at("center");
  return result;
}

ClusterSeparation cluster_separation(const EmbeddingMatrix& emb,
                                     const std::map<std::size_t, int>& groups) {
  std::map<int, std::size_t> group_sizes;
  for (const auto& [idx, g] : groups) ++group_sizes[g];
  if (group_sizes.size() < 2) {
    throw std::invalid_argument("cluster_separation: need at least 2 groups");
  }
  for (const auto& [g, n] : group_sizes) {
    if (n < 2) {
      throw std::invalid_argument("cluster_separation: group " +
                                  std::to_string(g) + " has fewer than 2 codes");
    }
  }
  struct Entry {
    int group;
    std::vector<double> unit;
  };
  std::vector<Entry> entries;
  entries.reserve(groups.size());
  for (const auto& [idx, g] : groups) {
    std::vector<double> v = emb.vector_at(idx);
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) {
      throw std::invalid_argument(
          "cluster_separation: zero embedding vector for code index " +
          std::to_string(idx));
    }
    for (double& x : v) x /= nrm;
    entries.push_back({g, std::move(v)});
  }
  double intra_sum = 0.0, inter_sum = 0.0;
  std::size_t intra_n = 0, inter_n = 0;
  for (std::size_t a = 0; a < entries.size(); ++a) {
    for (std::size_t b = a + 1; b < entries.size(); ++b) {
      double dot = 0.0;
      for (std::size_t j = 0; j < emb.dim; ++j) {
        dot += entries[a].unit[j] * entries[b].unit[j];
      }
      if (entries[a].group == entries[b].group) {
        intra_sum += dot;
        ++intra_n;
      } else {
        inter_sum += dot;
        ++inter_n;
      }
    }
  }
  return {intra_sum / double(intra_n), inter_sum / double(inter_n)};
}

}  // namespace raregan
