#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "raregan/records.hpp"

namespace raregan {

// Knobs for the synthetic claims cohort. The label arithmetic is:
//   n_positive  = floor(n_patients * prevalence)
//   n_negative  = floor(n_positive * labeled_negative_ratio)
//   n_unlabeled = the remainder
// and a latent floor(n_unlabeled * prevalence) of the unlabeled pool carries
// the disease signal without the label (undiagnosed patients).
struct CohortConfig {
  std::size_t n_patients = 10000;
  double prevalence = 0.016;
  double labeled_negative_ratio = 3.0;
  double unlabeled_fraction = 0.70;  // minimum share left unlabeled
  std::size_t vocab_size = 300;
  std::size_t n_therapeutic_areas = 4;
  double signal_strength = 0.18;  // per-position motif probability in carriers
  std::size_t min_seq_len = 10;
  std::size_t max_seq_len = 60;
  std::uint64_t seed = 1;
  // shape of the code distributions
  double ta_mix = 0.1;            // mass drawn uniformly across all areas
  std::size_t n_motif_codes = 6;  // marker codes reserved for the disease
  double zipf_exponent = 1.05;    // within-area rank decay

  void validate() const;
};

void to_json(nlohmann::json& j, const CohortConfig& c);
void from_json(const nlohmann::json& j, CohortConfig& c);

// Ground truth kept alongside the generated cohort for diagnostics: which
// therapeutic area produced each code/patient, which codes are disease
// markers, and which unlabeled patients are latent (undiagnosed) positives.
struct CohortMeta {
  std::vector<int> ta_of_code;          // per code index; -1 for motif codes
  std::vector<std::size_t> motif_codes; // global code indices
  std::vector<int> ta_of_patient;       // per patient, in cohort order
  std::vector<std::uint8_t> signal_carrier;  // per patient: has the motif process
};

struct Cohort {
  std::vector<PatientRecord> patients;
  CohortMeta meta;
};

// All codes in the universe, index -> token. Kind cycles Dx/Rx/Px.
MedicalCode code_token(std::size_t index);

Cohort generate_cohort(const CohortConfig& cfg);

struct CohortSplit {
  std::vector<PatientRecord> train;  // positives + labeled negatives + unlabeled
  std::vector<PatientRecord> test;   // positives + held-out pool as negatives
};

// Positives and the unlabeled pool are split by train_fraction; labeled
// negatives all stay in train. The held-out share of the unlabeled pool
// becomes the test negatives (undiagnosed patients, so a latent-positive
// sliver remains among them by construction).
CohortSplit split_cohort(const std::vector<PatientRecord>& cohort,
                         double train_fraction, std::uint64_t seed);

// Stable per-stream sub-seed derivation (splitmix64 over the pair).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace raregan
