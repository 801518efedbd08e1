#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "raregan/embedder.hpp"
#include "raregan/graph.hpp"
#include "raregan/records.hpp"
#include "raregan/tensor.hpp"
#include "raregan/vocab.hpp"

namespace raregan {

struct EncoderConfig {
  std::size_t padded_len = 60;  // N
  std::size_t hidden_dim = 32;  // d_S
  std::size_t epochs = 10;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

// Fixed-length view of a code sequence: longer inputs keep the LAST n codes
// (the most recent history), shorter ones are post-padded. mask[t] == 1 marks
// real positions; PAD slots hold nullopt.
struct PaddedCodes {
  std::vector<std::optional<MedicalCode>> codes;
  std::vector<char> mask;
};

PaddedCodes pad_or_truncate(const std::vector<MedicalCode>& codes, std::size_t n);

// Single-layer LSTM over embedded code sequences. Weights are fused over the
// concatenated [x, h] input; gate order along the columns is
// [input, forget, cell, output].
struct LstmCell {
  std::size_t input_dim = 0;   // d_w
  std::size_t hidden_dim = 0;  // d_S
  Tensor W;                    // (d_w + d_S) x 4*d_S
  Tensor b;                    // 4*d_S, forget slice initialized to +1

  nlohmann::json to_json() const;
  static LstmCell from_json(const nlohmann::json& j);
};

// Graph-side LSTM: runs the recurrence over `n_steps` and max-pools the
// hidden states over unmasked positions. `rows` is batch x n_steps (row-major)
// of embedding-matrix row ids; `mask` is batch x n_steps.
Var lstm_pooled(Graph& g, Var emb_matrix, Var W, Var b, std::size_t hidden_dim,
                const std::vector<std::size_t>& rows, const Tensor& mask,
                std::size_t batch, std::size_t n_steps);

// Unscaled features for a batch of records: pooled LSTM state, then age, then
// gender. Output is records.size() x (hidden_dim + 2). Pure eval mode.
Tensor encode_raw(const std::vector<PatientRecord>& records,
                  const Vocabulary& vocab, const EmbeddingMatrix& emb,
                  const LstmCell& cell, std::size_t padded_len);

// Per-dimension min-max map onto [-1, 1], fit on the training split; test
// values are clamped. Dimensions that were constant in training map to 0.
struct FeatureScaler {
  std::vector<double> lo;
  std::vector<double> hi;

  static FeatureScaler fit(const Tensor& features);
  Tensor apply(const Tensor& features) const;

  nlohmann::json to_json() const;
  static FeatureScaler from_json(const nlohmann::json& j);
};

// Scaled feature vector for one record; dimension hidden_dim + 2.
std::vector<double> encode(const PatientRecord& rec, const Vocabulary& vocab,
                           const EmbeddingMatrix& emb, const LstmCell& cell,
                           std::size_t padded_len, const FeatureScaler& scaler);

struct EncoderResult {
  LstmCell cell;
  std::vector<double> epoch_loss;
};

// Trains the LSTM with a throwaway logistic head (binary cross-entropy on the
// labeled records only); the head is discarded and the cell returned.
EncoderResult train_encoder(const std::vector<PatientRecord>& records,
                            const Vocabulary& vocab, const EmbeddingMatrix& emb,
                            const EncoderConfig& cfg);

}  // namespace raregan
