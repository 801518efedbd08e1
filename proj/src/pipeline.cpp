#include "raregan/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace raregan {

namespace fs = std::filesystem;

void PipelineConfig::normalize_seeds() {
  cohort.seed = derive_seed(seed, 11);
  embedding.seed = derive_seed(seed, 12);
  encoder.seed = derive_seed(seed, 13);
  gan.seed = derive_seed(seed, 14);
  logistic.seed = derive_seed(seed, 15);
}

void PipelineConfig::validate() const {
  cohort.validate();
  embedding.validate();
  encoder.validate();
  logistic.validate();
  // gan.feature_dim is only known after encoding; validate the rest.
  GanConfig g = gan;
  g.feature_dim = encoder.hidden_dim + 2;
  g.validate();
  if (vocab_min_count == 0)
    throw std::invalid_argument("pipeline: vocab min_count must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("pipeline: train_fraction must be in (0, 1)");
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"train_fraction", c.train_fraction},
                     {"cohort", c.cohort},
                     {"vocab", nlohmann::json{{"min_count", c.vocab_min_count}}},
                     {"embedding", c.embedding},
                     {"encoder", c.encoder},
                     {"gan", c.gan},
                     {"logistic", c.logistic}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  c.seed = j.value("seed", c.seed);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  if (j.contains("cohort")) j.at("cohort").get_to(c.cohort);
  if (j.contains("vocab"))
    c.vocab_min_count = j.at("vocab").value("min_count", c.vocab_min_count);
  if (j.contains("embedding")) j.at("embedding").get_to(c.embedding);
  if (j.contains("encoder")) j.at("encoder").get_to(c.encoder);
  if (j.contains("gan")) j.at("gan").get_to(c.gan);
  if (j.contains("logistic")) j.at("logistic").get_to(c.logistic);
}

std::string config_hash(const PipelineConfig& cfg) {
  const std::string dump = nlohmann::json(cfg).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

void write_feature_csv(std::ostream& os, const FeatureTable& table) {
  os << "patient_id,label";
  for (std::size_t j = 0; j < table.features.cols(); ++j) os << ",f_" << j;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < table.features.rows(); ++i) {
    os << table.patient_ids[i] << ',' << to_string(table.labels[i]);
    for (std::size_t j = 0; j < table.features.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", table.features(i, j));
      os << buf;
    }
    os << '\n';
  }
}

FeatureTable read_feature_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line))
    throw std::invalid_argument("feature csv: missing header");
  if (line.rfind("patient_id,label", 0) != 0)
    throw std::invalid_argument("feature csv: unexpected header: " + line);
  const std::size_t dims =
      static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
  FeatureTable t;
  std::vector<double> flat;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    t.patient_ids.push_back(cell);
    std::getline(ls, cell, ',');
    t.labels.push_back(label_from_string(cell));
    for (std::size_t j = 0; j < dims; ++j) {
      if (!std::getline(ls, cell, ','))
        throw std::invalid_argument("feature csv: short row " + std::to_string(rows + 2));
      flat.push_back(std::stod(cell));
    }
    ++rows;
  }
  if (rows == 0) throw std::invalid_argument("feature csv: no rows");
  t.features = Tensor::matrix(rows, dims, flat);
  return t;
}

StageContext make_context(PipelineConfig cfg, const fs::path& out) {
  cfg.normalize_seeds();
  cfg.validate();
  StageContext ctx;
  ctx.hash = config_hash(cfg);
  ctx.cfg = std::move(cfg);
  ctx.out = out;
  fs::create_directories(out);
  return ctx;
}

namespace {

struct StageTimer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start)
        .count();
  }
};

void append_manifest(const StageContext& ctx, const std::string& stage,
                     const StageTimer& timer,
                     const std::vector<std::string>& outputs) {
  nlohmann::json line{{"stage", stage},
                      {"config_hash", ctx.hash},
                      {"seed", ctx.cfg.seed},
                      {"wall_ms", timer.elapsed_ms()},
                      {"outputs", outputs}};
  std::ofstream os(ctx.out / "manifest.jsonl", std::ios::app);
  if (!os) throw std::runtime_error("cannot open manifest.jsonl for append");
  os << line.dump() << '\n';
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << body;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

[[noreturn]] void missing(const fs::path& path, const std::string& producer) {
  throw std::runtime_error(path.string() + " not found; run `raregan " +
                           producer + "` first");
}

void check_hash(const StageContext& ctx, const nlohmann::json& meta,
                const std::string& artifact, const std::string& producer) {
  const std::string got = meta.value("config_hash", std::string("<absent>"));
  if (got != ctx.hash)
    throw std::runtime_error("stale artifact " + artifact + ": config hash " +
                             got + " does not match current " + ctx.hash +
                             "; re-run `raregan " + producer + "`");
}

nlohmann::json load_json_artifact(const StageContext& ctx, const std::string& name,
                                  const std::string& producer) {
  const fs::path path = ctx.out / name;
  std::ifstream is(path);
  if (!is) missing(path, producer);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("cannot parse " + path.string() + ": " + e.what());
  }
  check_hash(ctx, j, name, producer);
  return j;
}

std::vector<PatientRecord> load_cohort(const StageContext& ctx,
                                       const std::string& name) {
  // cohort_meta.json carries the hash for both jsonl files.
  load_json_artifact(ctx, "cohort_meta.json", "gen-data");
  const fs::path path = ctx.out / name;
  if (!fs::exists(path)) missing(path, "gen-data");
  return read_cohort_jsonl(path.string());
}

Vocabulary load_vocab(const StageContext& ctx) {
  nlohmann::json j = load_json_artifact(ctx, "vocab.json", "build-vocab");
  return Vocabulary::from_json(j.at("vocab"));
}

EmbeddingMatrix load_embedding(const StageContext& ctx, const Vocabulary& vocab) {
  load_json_artifact(ctx, "embedding.meta.json", "train-embedding");
  const fs::path path = ctx.out / "embedding.csv";
  std::ifstream is(path);
  if (!is) missing(path, "train-embedding");
  return EmbeddingMatrix::read_csv(is, vocab);
}

struct EncoderArtifact {
  LstmCell cell;
  FeatureScaler scaler;
};

EncoderArtifact load_encoder(const StageContext& ctx) {
  nlohmann::json j = load_json_artifact(ctx, "encoder.json", "train-encoder");
  EncoderArtifact a;
  a.cell = LstmCell::from_json(j.at("cell"));
  a.scaler = FeatureScaler::from_json(j.at("scaler"));
  return a;
}

FeatureTable load_features(const StageContext& ctx, const std::string& name) {
  load_json_artifact(ctx, "features.meta.json", "encode-features");
  const fs::path path = ctx.out / name;
  std::ifstream is(path);
  if (!is) missing(path, "encode-features");
  return read_feature_csv(is);
}

// Labeled rows as 1-based GAN classes (1 = positive, 2 = negative) plus the
// unlabeled block.
struct GanInputs {
  Tensor labeled;
  std::vector<std::size_t> classes;
  Tensor unlabeled;
  std::vector<int> labels01;  // parallel to `labeled`
};

GanInputs split_features(const FeatureTable& t) {
  std::vector<std::size_t> lab_rows, unl_rows;
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    if (t.labels[i] == Label::Unlabeled)
      unl_rows.push_back(i);
    else
      lab_rows.push_back(i);
  }
  GanInputs in;
  in.labeled = Tensor::zeros({lab_rows.size(), t.features.cols()});
  for (std::size_t i = 0; i < lab_rows.size(); ++i) {
    for (std::size_t j = 0; j < t.features.cols(); ++j)
      in.labeled(i, j) = t.features(lab_rows[i], j);
    const bool pos = t.labels[lab_rows[i]] == Label::Positive;
    in.classes.push_back(pos ? 1 : 2);
    in.labels01.push_back(pos ? 1 : 0);
  }
  in.unlabeled = Tensor::zeros({unl_rows.size(), t.features.cols()});
  for (std::size_t i = 0; i < unl_rows.size(); ++i)
    for (std::size_t j = 0; j < t.features.cols(); ++j)
      in.unlabeled(i, j) = t.features(unl_rows[i], j);
  return in;
}

std::vector<int> test_labels01(const FeatureTable& t) {
  std::vector<int> y;
  y.reserve(t.labels.size());
  for (Label l : t.labels) {
    if (l == Label::Unlabeled)
      throw std::runtime_error("evaluate: test features contain unlabeled rows");
    y.push_back(l == Label::Positive ? 1 : 0);
  }
  return y;
}

struct Models {
  GanModel sgan;
  GanModel dnn;
  LogisticModel lr;
};

Models load_models(const StageContext& ctx) {
  Models m;
  m.sgan = GanModel::from_json(
      load_json_artifact(ctx, "gan.json", "train-gan").at("model"));
  m.dnn = GanModel::from_json(
      load_json_artifact(ctx, "baseline_dnn.json", "train-baseline dnn").at("model"));
  m.lr = LogisticModel::from_json(
      load_json_artifact(ctx, "baseline_lr.json", "train-baseline lr").at("model"));
  return m;
}

nlohmann::json meta_stub(const StageContext& ctx) {
  return nlohmann::json{{"config_hash", ctx.hash}, {"seed", ctx.cfg.seed}};
}

}  // namespace

void stage_gen_data(const StageContext& ctx) {
  StageTimer timer;
  Cohort cohort = generate_cohort(ctx.cfg.cohort);
  CohortSplit split = split_cohort(cohort.patients, ctx.cfg.train_fraction,
                                   derive_seed(ctx.cfg.seed, 17));
  write_cohort_jsonl((ctx.out / "cohort_train.jsonl").string(), split.train);
  write_cohort_jsonl((ctx.out / "cohort_test.jsonl").string(), split.test);
  nlohmann::json meta = meta_stub(ctx);
  meta["n_train"] = split.train.size();
  meta["n_test"] = split.test.size();
  meta["n_total"] = cohort.patients.size();
  write_json(ctx.out / "cohort_meta.json", meta);
  append_manifest(ctx, "gen-data", timer,
                  {"cohort_train.jsonl", "cohort_test.jsonl", "cohort_meta.json"});
}

void stage_build_vocab(const StageContext& ctx) {
  StageTimer timer;
  auto train = load_cohort(ctx, "cohort_train.jsonl");
  Vocabulary vocab = Vocabulary::build(train, ctx.cfg.vocab_min_count);
  nlohmann::json j = meta_stub(ctx);
  j["vocab"] = vocab.to_json();
  write_json(ctx.out / "vocab.json", j);
  append_manifest(ctx, "build-vocab", timer, {"vocab.json"});
}

void stage_train_embedding(const StageContext& ctx) {
  StageTimer timer;
  auto train = load_cohort(ctx, "cohort_train.jsonl");
  Vocabulary vocab = load_vocab(ctx);
  SgnsResult res = train_skipgram(train, vocab, ctx.cfg.embedding);
  {
    std::ofstream os(ctx.out / "embedding.csv");
    if (!os) throw std::runtime_error("cannot write embedding.csv");
    res.embedding.write_csv(os, vocab);
  }
  nlohmann::json meta = meta_stub(ctx);
  meta["epoch_loss"] = res.epoch_mean_loss;
  write_json(ctx.out / "embedding.meta.json", meta);
  append_manifest(ctx, "train-embedding", timer,
                  {"embedding.csv", "embedding.meta.json"});
}

void stage_train_encoder(const StageContext& ctx) {
  StageTimer timer;
  auto train = load_cohort(ctx, "cohort_train.jsonl");
  Vocabulary vocab = load_vocab(ctx);
  EmbeddingMatrix emb = load_embedding(ctx, vocab);
  EncoderResult res = train_encoder(train, vocab, emb, ctx.cfg.encoder);
  // The scaler is fit on the training cohort only; the test split reuses it.
  Tensor raw = encode_raw(train, vocab, emb, res.cell, ctx.cfg.encoder.padded_len);
  FeatureScaler scaler = FeatureScaler::fit(raw);
  nlohmann::json j = meta_stub(ctx);
  j["cell"] = res.cell.to_json();
  j["scaler"] = scaler.to_json();
  j["epoch_loss"] = res.epoch_loss;
  write_json(ctx.out / "encoder.json", j);
  append_manifest(ctx, "train-encoder", timer, {"encoder.json"});
}

void stage_encode_features(const StageContext& ctx) {
  StageTimer timer;
  Vocabulary vocab = load_vocab(ctx);
  EmbeddingMatrix emb = load_embedding(ctx, vocab);
  EncoderArtifact enc = load_encoder(ctx);
  auto emit = [&](const std::string& cohort_file, const std::string& out_file) {
    auto records = load_cohort(ctx, cohort_file);
    FeatureTable t;
    Tensor raw = encode_raw(records, vocab, emb, enc.cell, ctx.cfg.encoder.padded_len);
    t.features = enc.scaler.apply(raw);
    for (const auto& r : records) {
      t.patient_ids.push_back(r.patient_id);
      t.labels.push_back(r.label);
    }
    std::ofstream os(ctx.out / out_file);
    if (!os) throw std::runtime_error("cannot write " + out_file);
    write_feature_csv(os, t);
  };
  emit("cohort_train.jsonl", "features_train.csv");
  emit("cohort_test.jsonl", "features_test.csv");
  write_json(ctx.out / "features.meta.json", meta_stub(ctx));
  append_manifest(ctx, "encode-features", timer,
                  {"features_train.csv", "features_test.csv", "features.meta.json"});
}

void stage_train_gan(const StageContext& ctx) {
  StageTimer timer;
  FeatureTable t = load_features(ctx, "features_train.csv");
  GanInputs in = split_features(t);
  GanTrainResult res = train_gan(in.labeled, in.classes, in.unlabeled, ctx.cfg.gan);
  nlohmann::json j = meta_stub(ctx);
  j["model"] = res.model.to_json();
  write_json(ctx.out / "gan.json", j);
  {
    std::ofstream os(ctx.out / "gan_loss.csv");
    if (!os) throw std::runtime_error("cannot write gan_loss.csv");
    write_loss_history(os, res.history);
  }
  append_manifest(ctx, "train-gan", timer, {"gan.json", "gan_loss.csv"});
}

void stage_train_baseline_lr(const StageContext& ctx) {
  StageTimer timer;
  FeatureTable t = load_features(ctx, "features_train.csv");
  GanInputs in = split_features(t);
  LogisticResult res = train_logistic_baseline(in.labeled, in.labels01,
                                               ctx.cfg.logistic);
  nlohmann::json j = meta_stub(ctx);
  j["model"] = res.model.to_json();
  j["epoch_loss"] = res.epoch_loss;
  write_json(ctx.out / "baseline_lr.json", j);
  append_manifest(ctx, "train-baseline lr", timer, {"baseline_lr.json"});
}

void stage_train_baseline_dnn(const StageContext& ctx) {
  StageTimer timer;
  FeatureTable t = load_features(ctx, "features_train.csv");
  GanInputs in = split_features(t);
  GanConfig cfg = ctx.cfg.gan;
  cfg.seed = derive_seed(ctx.cfg.seed, 16);
  DnnResult res = train_dnn_baseline(in.labeled, in.labels01, cfg);
  nlohmann::json j = meta_stub(ctx);
  j["model"] = res.model.to_json();
  j["epoch_loss"] = res.epoch_loss;
  write_json(ctx.out / "baseline_dnn.json", j);
  append_manifest(ctx, "train-baseline dnn", timer, {"baseline_dnn.json"});
}

EvalReport stage_evaluate(const StageContext& ctx) {
  StageTimer timer;
  FeatureTable t = load_features(ctx, "features_test.csv");
  std::vector<int> y = test_labels01(t);
  Models m = load_models(ctx);

  EvalReport report;
  auto add = [&](const std::string& name, const std::vector<double>& scores) {
    PrCurve c = pr_curve(scores, y);
    report.base_rate = c.base_rate;
    report.pr_auc[name] = pr_auc(c);
  };
  add("sgan", predict_scores(m.sgan, t.features));
  add("dnn", predict_scores(m.dnn, t.features));
  add("lr", predict_scores(m.lr, t.features));

  std::ostringstream csv;
  csv << "model,pr_auc,base_rate\n";
  char buf[96];
  for (const auto& [name, auc] : report.pr_auc) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g\n", name.c_str(), auc,
                  report.base_rate);
    csv << buf;
  }
  write_text(ctx.out / "metrics.csv", csv.str());
  append_manifest(ctx, "evaluate", timer, {"metrics.csv"});
  return report;
}

void stage_export_pr(const StageContext& ctx) {
  StageTimer timer;
  FeatureTable t = load_features(ctx, "features_test.csv");
  std::vector<int> y = test_labels01(t);
  Models m = load_models(ctx);
  auto dump = [&](const std::string& name, const std::vector<double>& scores) {
    std::ofstream os(ctx.out / ("pr_" + name + ".csv"));
    if (!os) throw std::runtime_error("cannot write pr_" + name + ".csv");
    write_pr_csv(os, pr_curve(scores, y));
  };
  dump("sgan", predict_scores(m.sgan, t.features));
  dump("dnn", predict_scores(m.dnn, t.features));
  dump("lr", predict_scores(m.lr, t.features));
  append_manifest(ctx, "export-pr", timer,
                  {"pr_sgan.csv", "pr_dnn.csv", "pr_lr.csv"});
}

EvalReport run_all(const StageContext& ctx) {
  stage_gen_data(ctx);
  stage_build_vocab(ctx);
  stage_train_embedding(ctx);
  stage_train_encoder(ctx);
  stage_encode_features(ctx);
  stage_train_gan(ctx);
  stage_train_baseline_lr(ctx);
  stage_train_baseline_dnn(ctx);
  EvalReport report = stage_evaluate(ctx);
  stage_export_pr(ctx);
  return report;
}

}  // namespace raregan
