#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "raregan/synthgen.hpp"
#include "raregan/vocab.hpp"

using namespace raregan;

namespace {

CohortConfig small_config() {
  CohortConfig cfg;
  cfg.n_patients = 1000;
  cfg.prevalence = 0.016;
  cfg.labeled_negative_ratio = 3.0;
  cfg.vocab_size = 60;
  cfg.n_therapeutic_areas = 3;
  cfg.min_seq_len = 5;
  cfg.max_seq_len = 20;
  cfg.seed = 99;
  return cfg;
}

std::size_t count_label(const std::vector<PatientRecord>& v, Label l) {
  std::size_t n = 0;
  for (const auto& r : v) n += r.label == l;
  return n;
}

}  // namespace

TEST_CASE("label arithmetic: floor counts, remainder unlabeled") {
  Cohort c = generate_cohort(small_config());
  REQUIRE(c.patients.size() == 1000);
  CHECK(count_label(c.patients, Label::Positive) == 16);   // floor(1000*0.016)
  CHECK(count_label(c.patients, Label::Negative) == 48);   // 16 * 3
  CHECK(count_label(c.patients, Label::Unlabeled) == 936); // remainder
}

TEST_CASE("same seed is byte-identical, different seed is not") {
  CohortConfig cfg = small_config();
  Cohort a = generate_cohort(cfg);
  Cohort b = generate_cohort(cfg);
  std::stringstream sa, sb;
  write_cohort_jsonl(sa, a.patients);
  write_cohort_jsonl(sb, b.patients);
  CHECK(sa.str() == sb.str());

  cfg.seed = 100;
  Cohort c = generate_cohort(cfg);
  std::stringstream sc;
  write_cohort_jsonl(sc, c.patients);
  CHECK(sa.str() != sc.str());
}

TEST_CASE("record invariants: codes non-empty, lengths and ages in range") {
  CohortConfig cfg = small_config();
  Cohort c = generate_cohort(cfg);
  std::set<std::string> ids;
  for (const auto& r : c.patients) {
    CHECK(r.codes.size() >= cfg.min_seq_len);
    CHECK(r.codes.size() <= cfg.max_seq_len);
    CHECK(r.age >= 0);
    CHECK(r.age <= 120);
    CHECK((r.gender == 0 || r.gender == 1));
    ids.insert(r.patient_id);
  }
  CHECK(ids.size() == c.patients.size());
}

TEST_CASE("motif codes appear in positives and never in labeled negatives") {
  CohortConfig cfg = small_config();
  cfg.signal_strength = 0.3;
  Cohort c = generate_cohort(cfg);
  std::set<MedicalCode> motifs;
  for (std::size_t idx : c.meta.motif_codes) motifs.insert(code_token(idx));
  REQUIRE(motifs.size() == cfg.n_motif_codes);

  std::size_t positives_with_motif = 0, positives = 0;
  for (const auto& r : c.patients) {
    bool has = false;
    for (const auto& code : r.codes) has = has || motifs.count(code);
    if (r.label == Label::Positive) {
      ++positives;
      positives_with_motif += has;
    }
    if (r.label == Label::Negative) CHECK_FALSE(has);
  }
  // at strength 0.3 over >=5 positions, nearly every positive carries a motif
  CHECK(positives_with_motif >= positives - 1);
}

TEST_CASE("zero signal strength plants nothing anywhere") {
  CohortConfig cfg = small_config();
  cfg.signal_strength = 0.0;
  Cohort c = generate_cohort(cfg);
  std::set<MedicalCode> motifs;
  for (std::size_t idx : c.meta.motif_codes) motifs.insert(code_token(idx));
  for (const auto& r : c.patients) {
    for (const auto& code : r.codes) CHECK_FALSE(motifs.count(code));
  }
}

TEST_CASE("latent positives: a prevalence-sized sliver of the unlabeled pool") {
  CohortConfig cfg = small_config();
  Cohort c = generate_cohort(cfg);
  std::size_t latent = 0;
  for (std::size_t i = 0; i < c.patients.size(); ++i) {
    if (c.patients[i].label == Label::Unlabeled &&
        c.meta.signal_carrier[i]) {
      ++latent;
    }
  }
  CHECK(latent == std::size_t(936 * 0.016));  // floor
}

TEST_CASE("therapeutic area blocks cover the regular codes exactly once") {
  CohortConfig cfg = small_config();
  Cohort c = generate_cohort(cfg);
  std::size_t regular = cfg.vocab_size - cfg.n_motif_codes;
  for (std::size_t i = 0; i < regular; ++i) {
    CHECK(c.meta.ta_of_code[i] >= 0);
    CHECK(c.meta.ta_of_code[i] < int(cfg.n_therapeutic_areas));
  }
  for (std::size_t i = regular; i < cfg.vocab_size; ++i) {
    CHECK(c.meta.ta_of_code[i] == -1);
  }
}

TEST_CASE("patients draw mostly from their own area's code block") {
  CohortConfig cfg = small_config();
  cfg.n_patients = 200;
  cfg.signal_strength = 0.0;
  Cohort c = generate_cohort(cfg);
  std::size_t own = 0, total = 0;
  for (std::size_t i = 0; i < c.patients.size(); ++i) {
    int ta = c.meta.ta_of_patient[i];
    for (const auto& code : c.patients[i].codes) {
      std::size_t ci = std::stoul(code.id.substr(1));
      own += c.meta.ta_of_code[ci] == ta;
      ++total;
    }
  }
  // ta_mix = 0.1 leaks about 6-7% to other blocks
  CHECK(double(own) / double(total) > 0.85);
}

TEST_CASE("config validation rejects inconsistent fractions") {
  CohortConfig cfg = small_config();
  cfg.prevalence = 0.2;
  cfg.labeled_negative_ratio = 3.0;
  cfg.unlabeled_fraction = 0.5;  // 0.2*4 + 0.5 = 1.3 > 1
  CHECK_THROWS_AS(generate_cohort(cfg), std::invalid_argument);

  cfg = small_config();
  cfg.min_seq_len = 0;
  CHECK_THROWS_AS(generate_cohort(cfg), std::invalid_argument);

  cfg = small_config();
  cfg.max_seq_len = cfg.min_seq_len - 1;
  CHECK_THROWS_AS(generate_cohort(cfg), std::invalid_argument);

  cfg = small_config();
  cfg.n_therapeutic_areas = 1;
  CHECK_THROWS_AS(generate_cohort(cfg), std::invalid_argument);

  cfg = small_config();
  cfg.vocab_size = cfg.n_motif_codes;  // no room for regular codes
  CHECK_THROWS_AS(generate_cohort(cfg), std::invalid_argument);
}

TEST_CASE("split: positive counts, disjointness, exhaustiveness") {
  CohortConfig cfg = small_config();
  Cohort c = generate_cohort(cfg);
  CohortSplit s = split_cohort(c.patients, 0.8, 7);

  // floor(16 * 0.8) = 12 train positives, 4 test positives
  CHECK(count_label(s.train, Label::Positive) == 12);
  CHECK(count_label(s.test, Label::Positive) == 4);
  // all labeled negatives stay in train
  CHECK(count_label(s.train, Label::Negative) == 48);
  // no unlabeled in test; held-out pool shows up as test negatives
  CHECK(count_label(s.test, Label::Unlabeled) == 0);
  CHECK(count_label(s.train, Label::Unlabeled) == std::size_t(936 * 0.8));
  CHECK(count_label(s.test, Label::Negative) == 936 - std::size_t(936 * 0.8));

  CHECK(s.train.size() + s.test.size() == c.patients.size());
  std::set<std::string> seen;
  for (const auto& r : s.train) seen.insert(r.patient_id);
  for (const auto& r : s.test) {
    CHECK(seen.insert(r.patient_id).second);  // no overlap
  }
  CHECK(seen.size() == c.patients.size());
}

TEST_CASE("split determinism and error on unsplittable positives") {
  CohortConfig cfg = small_config();
  Cohort c = generate_cohort(cfg);
  CohortSplit a = split_cohort(c.patients, 0.8, 7);
  CohortSplit b = split_cohort(c.patients, 0.8, 7);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].patient_id == b.train[i].patient_id);
  }

  cfg.n_patients = 70;  // floor(70*0.016) = 1 positive: cannot split
  Cohort tiny = generate_cohort(cfg);
  CHECK_THROWS_AS(split_cohort(tiny.patients, 0.8, 7), std::invalid_argument);
  CHECK_THROWS_AS(split_cohort(c.patients, 1.0, 7), std::invalid_argument);
}

TEST_CASE("cohort config JSON round-trip with defaults for missing keys") {
  CohortConfig cfg = small_config();
  nlohmann::json j = cfg;
  CohortConfig back = j.get<CohortConfig>();
  CHECK(back.n_patients == cfg.n_patients);
  CHECK(back.seed == cfg.seed);
  CHECK(back.vocab_size == cfg.vocab_size);

  CohortConfig sparse = nlohmann::json{{"n_patients", 123}}.get<CohortConfig>();
  CHECK(sparse.n_patients == 123);
  CHECK(sparse.prevalence == CohortConfig{}.prevalence);
}

TEST_CASE("generated corpus feeds the vocabulary with a dense head") {
  CohortConfig cfg = small_config();
  Cohort c = generate_cohort(cfg);
  Vocabulary v = Vocabulary::build(c.patients, 5);
  CHECK(v.size() > 0);
  CHECK(v.size() <= cfg.vocab_size);
  // frequency ordering holds
  for (std::size_t i = 1; i < v.size(); ++i) {
    CHECK(v.count_of(v.code_at(i - 1)) >= v.count_of(v.code_at(i)));
  }
}
