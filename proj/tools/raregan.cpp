// Stage-based command-line driver for the detection pipeline. Every stage
// reads/writes artifacts under --out; reruns are reproducible per seed.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "raregan/pipeline.hpp"

namespace {

raregan::PipelineConfig load_config(const std::string& path) {
  raregan::PipelineConfig cfg;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file " + path);
    nlohmann::json j;
    is >> j;
    j.get_to(cfg);
  }
  return cfg;
}

void print_report(const raregan::EvalReport& r) {
  std::cout << "base rate: " << r.base_rate << '\n';
  for (const auto& [name, auc] : r.pr_auc)
    std::cout << "PR-AUC " << name << ": " << auc << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rare-disease detection on synthetic medical-claims sequences"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  app.add_option("--config", config_path, "JSON config file (defaults when omitted)");
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "artifact directory (default: out)");

  auto* gen = app.add_subcommand("gen-data", "generate synthetic cohort + train/test split");
  auto* vocab = app.add_subcommand("build-vocab", "build the medical-code vocabulary");
  auto* emb = app.add_subcommand("train-embedding", "train skip-gram code embeddings");
  auto* enc = app.add_subcommand("train-encoder", "train the LSTM sequence encoder");
  auto* feats = app.add_subcommand("encode-features", "encode patients into feature vectors");
  auto* gan = app.add_subcommand("train-gan", "train the semi-supervised GAN classifier");
  auto* baseline = app.add_subcommand("train-baseline", "train a supervised baseline");
  std::string baseline_kind;
  baseline->add_option("kind", baseline_kind, "which baseline: lr or dnn")
      ->required()
      ->check(CLI::IsMember({"lr", "dnn"}));
  auto* eval = app.add_subcommand("evaluate", "score the test split, print PR-AUC per model");
  auto* expr = app.add_subcommand("export-pr", "write precision-recall curves to CSV");
  auto* all = app.add_subcommand("run-all", "run every stage in order");

  CLI11_PARSE(app, argc, argv);

  try {
    raregan::PipelineConfig cfg = load_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    raregan::StageContext ctx = raregan::make_context(cfg, out_dir);

    if (gen->parsed()) {
      raregan::stage_gen_data(ctx);
    } else if (vocab->parsed()) {
      raregan::stage_build_vocab(ctx);
    } else if (emb->parsed()) {
      raregan::stage_train_embedding(ctx);
    } else if (enc->parsed()) {
      raregan::stage_train_encoder(ctx);
    } else if (feats->parsed()) {
      raregan::stage_encode_features(ctx);
    } else if (gan->parsed()) {
      raregan::stage_train_gan(ctx);
    } else if (baseline->parsed()) {
      if (baseline_kind == "lr")
        raregan::stage_train_baseline_lr(ctx);
      else
        raregan::stage_train_baseline_dnn(ctx);
    } else if (eval->parsed()) {
      print_report(raregan::stage_evaluate(ctx));
    } else if (expr->parsed()) {
      raregan::stage_export_pr(ctx);
    } else if (all->parsed()) {
      print_report(raregan::run_all(ctx));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
