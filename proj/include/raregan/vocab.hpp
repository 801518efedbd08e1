#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "raregan/records.hpp"

namespace raregan {

// Frequency-filtered code vocabulary. Codes seen at least `min_count` times
// get a contiguous index in [0, V), ordered by descending count with
// lexicographic (id, kind) tie-breaks; everything else is dropped and maps to
// no index (downstream layers embed dropped codes as the zero vector).
// Immutable after build.
class Vocabulary {
 public:
  static Vocabulary build(const std::vector<PatientRecord>& records,
                          std::size_t min_count);

  std::size_t size() const { return kept_.size(); }
  bool contains(const MedicalCode& code) const;
  // Sparse one-hot: the index of the single hot coordinate, or nullopt for a
  // dropped/unknown code.
  std::optional<std::size_t> index_of(const MedicalCode& code) const;
  const MedicalCode& code_at(std::size_t index) const;
  std::size_t count_of(const MedicalCode& code) const;  // 0 if never seen

  std::size_t min_count() const { return min_count_; }
  std::size_t distinct_seen() const { return distinct_seen_; }
  std::size_t dropped_count() const { return distinct_seen_ - kept_.size(); }

  // Dense indicator over V; all zeros for dropped/unknown codes.
  std::vector<double> one_hot(const MedicalCode& code) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<MedicalCode> kept_;           // index -> code
  std::vector<std::size_t> kept_counts_;    // index -> count
  std::map<MedicalCode, std::size_t> index_;
  std::map<MedicalCode, std::size_t> counts_;  // all seen codes
  std::size_t min_count_ = 1;
  std::size_t distinct_seen_ = 0;
};

}  // namespace raregan
