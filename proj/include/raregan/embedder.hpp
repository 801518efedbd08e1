#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

#include <json.hpp>

#include "raregan/graph.hpp"
#include "raregan/records.hpp"
#include "raregan/tensor.hpp"
#include "raregan/vocab.hpp"

namespace raregan {

struct SgnsConfig {
  std::size_t dim = 32;  // d_w
  std::size_t window = 5;
  std::size_t negatives = 5;  // k
  std::size_t epochs = 5;
  double learning_rate = 0.001;
  double noise_exponent = 0.75;  // unigram^exponent noise distribution
  std::size_t batch_pairs = 1024;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const SgnsConfig& c);
void from_json(const nlohmann::json& j, SgnsConfig& c);

// Trained center vectors. Stored as a (V+1) x dim matrix whose row 0 is the
// all-zero vector reserved for dropped/unknown codes and sequence padding;
// vocabulary index i lives at row i + 1.
struct EmbeddingMatrix {
  std::size_t dim = 0;
  Tensor center;  // (V+1) x dim

  static constexpr std::size_t kZeroRow = 0;

  std::size_t vocab_size() const { return center.shape.at(0) - 1; }
  std::size_t row_of(std::optional<std::size_t> vocab_index) const {
    return vocab_index ? *vocab_index + 1 : kZeroRow;
  }
  std::vector<double> vector_at(std::size_t vocab_index) const;

  // CSV with header "kind,id,dim_0,...": one row per kept code in index order.
  void write_csv(std::ostream& os, const Vocabulary& vocab) const;
  static EmbeddingMatrix read_csv(std::istream& is, const Vocabulary& vocab);
};

// One skip-gram/negative-sampling term on the graph:
//   -log sigma(ctx . cen) - sum_n log sigma(-neg_n . cen)
// expressed through softplus for stability. center/context are 1 x d rows,
// negatives is k x d.
Var sgns_pair_loss(Var center, Var context, Var negatives);

// Convenience scalar form over plain vectors.
double sgns_loss(const std::vector<double>& center,
                 const std::vector<double>& context,
                 const std::vector<std::vector<double>>& negatives);

struct SgnsResult {
  EmbeddingMatrix embedding;
  std::vector<double> epoch_mean_loss;
};

// Skip-gram training over the cohort's code sequences. Dropped codes are
// removed from the sequences before windowing, so they are never trained and
// the reserved zero row stays zero.
SgnsResult train_skipgram(const std::vector<PatientRecord>& records,
                          const Vocabulary& vocab, const SgnsConfig& cfg);

struct ClusterSeparation {
  double intra = 0.0;  // mean pairwise cosine within groups
  double inter = 0.0;  // mean pairwise cosine across groups
};

// groups: vocabulary index -> group id. Needs >= 2 groups with >= 2 codes
// each; vectors must be nonzero.
ClusterSeparation cluster_separation(const EmbeddingMatrix& emb,
                                     const std::map<std::size_t, int>& groups);

}  // namespace raregan
