#include "raregan/vocab.hpp"

#include <algorithm>
#include <stdexcept>

namespace raregan {

Vocabulary Vocabulary::build(const std::vector<PatientRecord>& records,
                             std::size_t min_count) {
  if (min_count < 1) {
    throw std::invalid_argument("build_vocabulary: min_count must be >= 1");
  }
  if (records.empty()) {
    throw std::invalid_argument("build_vocabulary: empty corpus");
  }
  Vocabulary v;
  v.min_count_ = min_count;
  for (const PatientRecord& r : records) {
    for (const MedicalCode& c : r.codes) {
      if (c.id.empty()) {
        throw std::invalid_argument("build_vocabulary: empty code id in " +
                                    r.patient_id);
      }
      ++v.counts_[c];
    }
  }
  v.distinct_seen_ = v.counts_.size();

  for (const auto& [code, count] : v.counts_) {
    if (count >= min_count) v.kept_.push_back(code);
  }
  std::sort(v.kept_.begin(), v.kept_.end(),
            [&](const MedicalCode& a, const MedicalCode& b) {
              std::size_t ca = v.counts_.at(a), cb = v.counts_.at(b);
              if (ca != cb) return ca > cb;
              return a < b;  // (id, kind) lexicographic
            });
  v.kept_counts_.reserve(v.kept_.size());
  for (std::size_t i = 0; i < v.kept_.size(); ++i) {
    v.index_[v.kept_[i]] = i;
    v.kept_counts_.push_back(v.counts_.at(v.kept_[i]));
  }
  return v;
}

bool Vocabulary::contains(const MedicalCode& code) const {
  return index_.count(code) != 0;
}

std::optional<std::size_t> Vocabulary::index_of(const MedicalCode& code) const {
  auto it = index_.find(code);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const MedicalCode& Vocabulary::code_at(std::size_t index) const {
  if (index >= kept_.size()) {
    throw std::out_of_range("Vocabulary: index " + std::to_string(index) +
                            " out of range for size " +
                            std::to_string(kept_.size()));
  }
  return kept_[index];
}

std::size_t Vocabulary::count_of(const MedicalCode& code) const {
  auto it = counts_.find(code);
  return it == counts_.end() ? 0 : it->second;
}

std::vector<double> Vocabulary::one_hot(const MedicalCode& code) const {
  std::vector<double> out(size(), 0.0);
  if (auto idx = index_of(code)) out[*idx] = 1.0;
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json codes = nlohmann::json::array();
  for (std::size_t i = 0; i < kept_.size(); ++i) {
    codes.push_back({{"kind", to_string(kept_[i].kind)},
                     {"id", kept_[i].id},
                     {"index", i},
                     {"count", kept_counts_[i]}});
  }
  return {{"min_count", min_count_},
          {"distinct_seen", distinct_seen_},
          {"codes", std::move(codes)}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  v.min_count_ = j.at("min_count").get<std::size_t>();
  v.distinct_seen_ = j.at("distinct_seen").get<std::size_t>();
  const auto& codes = j.at("codes");
  v.kept_.resize(codes.size());
  v.kept_counts_.resize(codes.size());
  for (const auto& cj : codes) {
    std::size_t idx = cj.at("index").get<std::size_t>();
    if (idx >= v.kept_.size()) {
      throw std::invalid_argument("Vocabulary: non-contiguous index " +
                                  std::to_string(idx));
    }
    MedicalCode code{code_kind_from_string(cj.at("kind").get<std::string>()),
                     cj.at("id").get<std::string>()};
    v.kept_[idx] = code;
    v.kept_counts_[idx] = cj.at("count").get<std::size_t>();
    v.counts_[code] = v.kept_counts_[idx];
    if (!v.index_.emplace(code, idx).second) {
      throw std::invalid_argument("Vocabulary: duplicate code " + code.id);
    }
  }
  if (v.index_.size() != v.kept_.size()) {
    throw std::invalid_argument("Vocabulary: duplicate index in serialized form");
  }
  return v;
}

}  // namespace raregan
