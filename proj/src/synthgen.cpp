#include "raregan/synthgen.hpp"

#include "raregan/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

namespace raregan {

void CohortConfig::validate() const {
  if (n_patients < 1) throw std::invalid_argument("cohort: n_patients < 1");
  if (!(prevalence > 0.0 && prevalence < 1.0)) {
    throw std::invalid_argument("cohort: prevalence must be in (0,1)");
  }
  if (labeled_negative_ratio < 0.0) {
    throw std::invalid_argument("cohort: labeled_negative_ratio < 0");
  }
  if (unlabeled_fraction < 0.0 || unlabeled_fraction > 1.0 ||
      signal_strength < 0.0 || signal_strength > 1.0 || ta_mix < 0.0 ||
      ta_mix > 1.0) {
    throw std::invalid_argument("cohort: probabilities must be in [0,1]");
  }
  double labeled_share = prevalence * (1.0 + labeled_negative_ratio);
  if (labeled_share + unlabeled_fraction > 1.0) {
    throw std::invalid_argument(
        "cohort: prevalence*(1+ratio) + unlabeled_fraction exceeds 1");
  }
  if (min_seq_len < 1 || max_seq_len < min_seq_len) {
    throw std::invalid_argument("cohort: need 1 <= min_seq_len <= max_seq_len");
  }
  if (n_therapeutic_areas < 2) {
    throw std::invalid_argument("cohort: need at least 2 therapeutic areas");
  }
  if (vocab_size < n_motif_codes + n_therapeutic_areas) {
    throw std::invalid_argument(
        "cohort: vocab_size too small for the areas and motif codes");
  }
  if (zipf_exponent < 0.0) {
    throw std::invalid_argument("cohort: zipf_exponent < 0");
  }
}

void to_json(nlohmann::json& j, const CohortConfig& c) {
  j = nlohmann::json{{"n_patients", c.n_patients},
                     {"prevalence", c.prevalence},
                     {"labeled_negative_ratio", c.labeled_negative_ratio},
                     {"unlabeled_fraction", c.unlabeled_fraction},
                     {"vocab_size", c.vocab_size},
                     {"n_therapeutic_areas", c.n_therapeutic_areas},
                     {"signal_strength", c.signal_strength},
                     {"min_seq_len", c.min_seq_len},
                     {"max_seq_len", c.max_seq_len},
                     {"seed", c.seed},
                     {"ta_mix", c.ta_mix},
                     {"n_motif_codes", c.n_motif_codes},
                     {"zipf_exponent", c.zipf_exponent}};
}

void from_json(const nlohmann::json& j, CohortConfig& c) {
  CohortConfig defaults;
  c.n_patients = j.value("n_patients", defaults.n_patients);
  c.prevalence = j.value("prevalence", defaults.prevalence);
  c.labeled_negative_ratio =
      j.value("labeled_negative_ratio", defaults.labeled_negative_ratio);
  c.unlabeled_fraction = j.value("unlabeled_fraction", defaults.unlabeled_fraction);
  c.vocab_size = j.value("vocab_size", defaults.vocab_size);
  c.n_therapeutic_areas =
      j.value("n_therapeutic_areas", defaults.n_therapeutic_areas);
  c.signal_strength = j.value("signal_strength", defaults.signal_strength);
  c.min_seq_len = j.value("min_seq_len", defaults.min_seq_len);
  c.max_seq_len = j.value("max_seq_len", defaults.max_seq_len);
  c.seed = j.value("seed", defaults.seed);
  c.ta_mix = j.value("ta_mix", defaults.ta_mix);
  c.n_motif_codes = j.value("n_motif_codes", defaults.n_motif_codes);
  c.zipf_exponent = j.value("zipf_exponent", defaults.zipf_exponent);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 over the combined pair
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

MedicalCode code_token(std::size_t index) {
  static const CodeKind kinds[3] = {CodeKind::Dx, CodeKind::Rx, CodeKind::Px};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "C%05zu", index);
  return MedicalCode{kinds[index % 3], buf};
}

Cohort generate_cohort(const CohortConfig& cfg) {
  cfg.validate();

  std::size_t n = cfg.n_patients;
  auto n_pos = static_cast<std::size_t>(std::floor(double(n) * cfg.prevalence));
  auto n_neg = static_cast<std::size_t>(
      std::floor(double(n_pos) * cfg.labeled_negative_ratio));
  if (n_pos + n_neg > n) {
    throw std::invalid_argument("cohort: labeled classes exceed cohort size");
  }
  std::size_t n_unl = n - n_pos - n_neg;

  // Partition the non-motif code range into contiguous blocks per area.
  std::size_t n_ta = cfg.n_therapeutic_areas;
  std::size_t n_regular = cfg.vocab_size - cfg.n_motif_codes;
  Cohort cohort;
  cohort.meta.ta_of_code.assign(cfg.vocab_size, -1);
  std::vector<std::pair<std::size_t, std::size_t>> blocks(n_ta);
  for (std::size_t t = 0; t < n_ta; ++t) {
    std::size_t lo = t * n_regular / n_ta;
    std::size_t hi = (t + 1) * n_regular / n_ta;
    blocks[t] = {lo, hi};
    for (std::size_t c = lo; c < hi; ++c) {
      cohort.meta.ta_of_code[c] = static_cast<int>(t);
    }
  }
  for (std::size_t c = n_regular; c < cfg.vocab_size; ++c) {
    cohort.meta.motif_codes.push_back(c);
  }

  // Rank-decay topic distribution within each area block.
  std::vector<DiscreteSampler> topic;
  topic.reserve(n_ta);
  for (std::size_t t = 0; t < n_ta; ++t) {
    auto [lo, hi] = blocks[t];
    std::vector<double> w(hi - lo);
    for (std::size_t r = 0; r < w.size(); ++r) {
      w[r] = 1.0 / std::pow(double(r + 1), cfg.zipf_exponent);
    }
    topic.emplace_back(w);
  }

  // Latent positives hide inside the unlabeled pool.
  std::vector<std::uint8_t> latent(n_unl, 0);
  {
    auto n_latent =
        static_cast<std::size_t>(std::floor(double(n_unl) * cfg.prevalence));
    std::vector<std::size_t> order(n_unl);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xA11CE));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n_latent; ++i) latent[order[i]] = 1;
  }

  cohort.patients.reserve(n);
  cohort.meta.ta_of_patient.reserve(n);
  cohort.meta.signal_carrier.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Label label = i < n_pos              ? Label::Positive
                  : i < n_pos + n_neg    ? Label::Negative
                                         : Label::Unlabeled;
    bool carrier = label == Label::Positive ||
                   (label == Label::Unlabeled && latent[i - n_pos - n_neg]);

    std::mt19937_64 rng(derive_seed(cfg.seed, i + 1));
    std::uniform_int_distribution<std::size_t> ta_pick(0, n_ta - 1);
    std::size_t ta = ta_pick(rng);
    std::uniform_int_distribution<std::size_t> len_pick(cfg.min_seq_len,
                                                        cfg.max_seq_len);
    std::size_t len = len_pick(rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> any_code(0, n_regular - 1);
    std::uniform_int_distribution<std::size_t> any_motif(
        n_regular, cfg.vocab_size - 1);

    PatientRecord rec;
    char pid[24];
    std::snprintf(pid, sizeof(pid), "P%07zu", i);
    rec.patient_id = pid;
    std::uniform_int_distribution<int> age_pick(18, 90);
    rec.age = age_pick(rng);
    rec.gender = unit(rng) < 0.5 ? 0 : 1;
    rec.label = label;
    rec.codes.reserve(len);
    for (std::size_t p = 0; p < len; ++p) {
      std::size_t code_index;
      if (carrier && unit(rng) < cfg.signal_strength) {
        code_index = any_motif(rng);
      } else if (unit(rng) < cfg.ta_mix) {
        code_index = any_code(rng);
      } else {
        code_index = blocks[ta].first + topic[ta](rng);
      }
      rec.codes.push_back(code_token(code_index));
    }
    cohort.patients.push_back(std::move(rec));
    cohort.meta.ta_of_patient.push_back(static_cast<int>(ta));
    cohort.meta.signal_carrier.push_back(carrier ? 1 : 0);
  }
  return cohort;
}

CohortSplit split_cohort(const std::vector<PatientRecord>& cohort,
                         double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split_cohort: train_fraction must be in (0,1)");
  }
  std::vector<std::size_t> pos, neg, unl;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    switch (cohort[i].label) {
      case Label::Positive: pos.push_back(i); break;
      case Label::Negative: neg.push_back(i); break;
      case Label::Unlabeled: unl.push_back(i); break;
    }
  }
  auto n_train_pos =
      static_cast<std::size_t>(std::floor(double(pos.size()) * train_fraction));
  if (n_train_pos == 0 || n_train_pos == pos.size()) {
    throw std::invalid_argument(
        "split_cohort: too few positives to split at this fraction");
  }
  std::mt19937_64 pos_rng(derive_seed(seed, 1));
  std::shuffle(pos.begin(), pos.end(), pos_rng);
  std::mt19937_64 unl_rng(derive_seed(seed, 2));
  std::shuffle(unl.begin(), unl.end(), unl_rng);
  auto n_train_unl =
      static_cast<std::size_t>(std::floor(double(unl.size()) * train_fraction));

  CohortSplit split;
  for (std::size_t k = 0; k < n_train_pos; ++k) {
    split.train.push_back(cohort[pos[k]]);
  }
  for (std::size_t i : neg) split.train.push_back(cohort[i]);
  for (std::size_t k = 0; k < n_train_unl; ++k) {
    split.train.push_back(cohort[unl[k]]);
  }
  for (std::size_t k = n_train_pos; k < pos.size(); ++k) {
    split.test.push_back(cohort[pos[k]]);
  }
  for (std::size_t k = n_train_unl; k < unl.size(); ++k) {
    PatientRecord r = cohort[unl[k]];
    r.label = Label::Negative;  // held-out pool scores as undiagnosed
    split.test.push_back(std::move(r));
  }
  return split;
}

}  // namespace raregan
