#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "raregan/embedder.hpp"
#include "raregan/encoder.hpp"
#include "raregan/eval.hpp"
#include "raregan/records.hpp"
#include "raregan/ssgan.hpp"
#include "raregan/synthgen.hpp"

namespace raregan {

// Whole-run configuration. One global seed drives everything: the per-stage
// seeds inside the sections are overwritten with values derived from it when
// the run context is created, so a config file never needs to spell them out.
struct PipelineConfig {
  CohortConfig cohort;
  std::size_t vocab_min_count = 5;
  SgnsConfig embedding;
  EncoderConfig encoder;
  GanConfig gan;
  LogisticConfig logistic;
  double train_fraction = 0.8;
  std::uint64_t seed = 1;

  // Stage seeds derived from the global seed; called by make_context.
  void normalize_seeds();
  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

// FNV-1a over the canonical JSON dump of the normalized config.
std::string config_hash(const PipelineConfig& cfg);

// Feature rows as persisted by encode-features:
// CSV "patient_id,label,f_0,...,f_{d-1}".
struct FeatureTable {
  std::vector<std::string> patient_ids;
  std::vector<Label> labels;
  Tensor features;
};

void write_feature_csv(std::ostream& os, const FeatureTable& table);
FeatureTable read_feature_csv(std::istream& is);

struct StageContext {
  PipelineConfig cfg;
  std::filesystem::path out;
  std::string hash;
};

// Normalizes seeds, validates, computes the config hash, creates `out`.
StageContext make_context(PipelineConfig cfg, const std::filesystem::path& out);

// Each stage reads its upstream artifacts (erroring with the prerequisite
// command name if missing or stale), writes its outputs plus a manifest line.
void stage_gen_data(const StageContext& ctx);
void stage_build_vocab(const StageContext& ctx);
void stage_train_embedding(const StageContext& ctx);
void stage_train_encoder(const StageContext& ctx);
void stage_encode_features(const StageContext& ctx);
void stage_train_gan(const StageContext& ctx);
void stage_train_baseline_lr(const StageContext& ctx);
void stage_train_baseline_dnn(const StageContext& ctx);

struct EvalReport {
  double base_rate = 0.0;
  std::map<std::string, double> pr_auc;  // keys: "sgan", "dnn", "lr"
};

EvalReport stage_evaluate(const StageContext& ctx);
void stage_export_pr(const StageContext& ctx);

// Chains every stage in order and returns the final evaluation.
EvalReport run_all(const StageContext& ctx);

}  // namespace raregan
