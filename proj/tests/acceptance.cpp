// Acceptance gate for the detection pipeline. Eight checks: probability
// identities, gradient correctness, closed-form loss oracles, exhaustive
// PR-AUC equivalence, embedding cluster structure, end-to-end detection
// ordering, null-signal sanity, and run-to-run determinism. One PASS/FAIL
// line per criterion; the process exits nonzero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "raregan/gradcheck.hpp"
#include "raregan/pipeline.hpp"

using namespace raregan;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("raregan_accept_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

// ---------------------------------------------------------------- criterion 1

Outcome check_reparameterization() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> logit(-30.0, 30.0);
  double max_dev = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> l = {logit(rng), logit(rng)};
    const ClassAndFake cf = class_and_fake_probs(l);

    // Independent reference: naive (K+1)-softmax over [l_1, l_2, 0]. Safe
    // without shifting because |l| <= 30 keeps exp() far from overflow.
    const double e0 = std::exp(l[0]), e1 = std::exp(l[1]);
    const double denom = e0 + e1 + 1.0;
    max_dev = std::max(max_dev, std::abs(cf.class_probs[0] - e0 / denom));
    max_dev = std::max(max_dev, std::abs(cf.class_probs[1] - e1 / denom));
    max_dev = std::max(max_dev, std::abs(cf.p_fake - 1.0 / denom));

    if (cf.d_of_x() != 1.0 - cf.p_fake)
      return {false, "D(x) != 1 - p_fake exactly"};
    const double z = e0 + e1;
    max_dev = std::max(max_dev, std::abs(cf.d_of_x() - z / (z + 1.0)));
  }
  return {max_dev <= 1e-12, "max deviation " + fmt("%.2e", max_dev)};
}

// ---------------------------------------------------------------- criterion 2

GanConfig small_gan_config() {
  GanConfig cfg;
  cfg.feature_dim = 4;
  cfg.n_classes = 2;
  cfg.hidden_widths = {6, 5};
  cfg.noise_dim = 3;
  cfg.dropout = 0.0;  // gradient checks run with dropout disabled
  return cfg;
}

double check_d_loss_grad(const std::function<Var(DiscOut)>& loss,
                         std::uint64_t seed) {
  GanConfig cfg = small_gan_config();
  std::mt19937_64 rng(seed);
  ParamStore store;
  init_discriminator(store, cfg, rng);
  const Tensor x = uniform_init({5, cfg.feature_dim}, -1.0, 1.0, rng);
  auto build = [&](Graph& g) {
    std::mt19937_64 unused(0);
    DiscOut out = discriminator_forward(g, store, g.constant(x), cfg,
                                        /*bind_params=*/true,
                                        /*training=*/false, unused);
    return loss(out);
  };
  return grad_check(build, store, rng, 10).max_rel_err;
}

double check_g_loss_grad(bool pull_away, std::uint64_t seed) {
  GanConfig cfg = small_gan_config();
  std::mt19937_64 rng(seed);
  ParamStore d_store, g_store;
  init_discriminator(d_store, cfg, rng);
  init_generator(g_store, cfg, rng);
  const Tensor z = normal_init({6, cfg.noise_dim}, 0.0, 1.0, rng);
  const Tensor x_real = uniform_init({6, cfg.feature_dim}, -1.0, 1.0, rng);
  auto build = [&](Graph& g) {
    std::mt19937_64 unused(0);
    Var fake = generator_forward(g, g_store, g.constant(z), cfg,
                                 /*bind_params=*/true);
    DiscOut df = discriminator_forward(g, d_store, fake, cfg, false, false,
                                       unused);
    if (pull_away) return loss_pull_away(df.features);
    DiscOut dr = discriminator_forward(g, d_store, g.constant(x_real), cfg,
                                       false, false, unused);
    return loss_feature_matching(dr.features, df.features);
  };
  return grad_check(build, g_store, rng, 10).max_rel_err;
}

double check_sgns_grad(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t dim = 7, k = 5;
  ParamStore store;
  store.create("cen", uniform_init({1, dim}, -0.8, 0.8, rng));
  store.create("ctx", uniform_init({1, dim}, -0.8, 0.8, rng));
  store.create("neg", uniform_init({k, dim}, -0.8, 0.8, rng));
  auto build = [&](Graph& g) {
    return sgns_pair_loss(g.param(store, "cen"), g.param(store, "ctx"),
                          g.param(store, "neg"));
  };
  return grad_check(build, store, rng, 10).max_rel_err;
}

double check_lstm_grad(std::uint64_t seed) {
  const std::size_t d_in = 3, dh = 2, batch = 2, steps = 3;
  std::mt19937_64 rng(seed);
  const Tensor emb = uniform_init({5, d_in}, -0.8, 0.8, rng);
  const Tensor mask = Tensor::matrix({{1.0, 1.0, 0.0}, {1.0, 1.0, 1.0}});
  const std::vector<std::size_t> rows = {1, 3, 0, 2, 4, 1};
  const Tensor y = Tensor::matrix({{1.0}, {0.0}});
  ParamStore store;
  store.create("lstm/W", uniform_init({d_in + dh, 4 * dh}, -0.6, 0.6, rng));
  store.create("lstm/b", uniform_init({4 * dh}, -0.3, 0.3, rng));
  store.create("head/w", uniform_init({dh, 1}, -0.9, 0.9, rng));
  store.create("head/b", uniform_init({1}, -0.2, 0.2, rng));
  auto build = [&](Graph& g) {
    Var pooled = lstm_pooled(g, g.constant(emb), g.param(store, "lstm/W"),
                             g.param(store, "lstm/b"), dh, rows, mask, batch,
                             steps);
    Var logits = add_rowvec(matmul(pooled, g.param(store, "head/w")),
                            g.param(store, "head/b"));
    return mean_all(sub(softplus(logits), mul(g.constant(y), logits)));
  };
  return grad_check(build, store, rng, 10).max_rel_err;
}

double check_logistic_grad(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Tensor x = uniform_init({6, 3}, -1.0, 1.0, rng);
  const Tensor y = Tensor::matrix({{1.0}, {0.0}, {1.0}, {0.0}, {0.0}, {1.0}});
  ParamStore store;
  store.create("w", uniform_init({3, 1}, -0.5, 0.5, rng));
  store.create("b", uniform_init({1}, -0.5, 0.5, rng));
  auto build = [&](Graph& g) {
    Var z = add_rowvec(matmul(g.constant(x), g.param(store, "w")),
                       g.param(store, "b"));
    return mean_all(sub(softplus(z), mul(g.constant(y), z)));
  };
  return grad_check(build, store, rng, 10).max_rel_err;
}

Outcome check_gradients() {
  const std::vector<std::size_t> labels = {1, 2, 1, 1, 2};
  struct Entry {
    const char* name;
    double err;
  };
  std::vector<Entry> errs = {
      {"L_labeled", check_d_loss_grad(
                        [&](DiscOut d) { return loss_labeled(d.logits, labels); },
                        201)},
      {"L_unlabeled", check_d_loss_grad(
                          [](DiscOut d) { return loss_unlabeled(d.logits); }, 202)},
      {"L_fake",
       check_d_loss_grad([](DiscOut d) { return loss_fake(d.logits); }, 203)},
      {"L_entropy", check_d_loss_grad(
                        [](DiscOut d) { return loss_entropy(d.logits); }, 204)},
      {"L_FM", check_g_loss_grad(false, 205)},
      {"L_PT", check_g_loss_grad(true, 206)},
      {"SGNS", check_sgns_grad(207)},
      {"LSTM", check_lstm_grad(208)},
      {"logistic", check_logistic_grad(209)},
  };
  double worst = 0.0;
  const char* worst_name = "";
  for (const auto& e : errs) {
    if (e.err > worst) {
      worst = e.err;
      worst_name = e.name;
    }
  }
  return {worst < 1e-4,
          "max rel err " + fmt("%.2e", worst) + " (" + worst_name + ")"};
}

// ---------------------------------------------------------------- criterion 3

Outcome check_loss_oracles() {
  struct Case {
    const char* name;
    double got;
    double want;
  };
  std::vector<Case> cases;

  Graph g;
  Var zeros = g.constant(Tensor::zeros({4, 2}));
  cases.push_back({"L_labeled(0)", loss_labeled(zeros, {1, 2, 1, 2}).val().item(),
                   -std::log(0.5)});
  cases.push_back({"L_unlabeled(0)", loss_unlabeled(zeros).val().item(),
                   -std::log(2.0 / 3.0)});
  cases.push_back({"L_fake(0)", loss_fake(zeros).val().item(), std::log(3.0)});
  cases.push_back({"L_entropy(0)", loss_entropy(zeros).val().item(),
                   -std::log(2.0)});

  // Pull-away enumerations: identical rows, orthogonal rows, and the
  // two-identical-plus-one-orthogonal three-sample case.
  Var same = g.constant(Tensor::matrix({{0.6, 0.0}, {0.6, 0.0}, {0.6, 0.0}}));
  cases.push_back({"L_PT(identical)", loss_pull_away(same).val().item(), 1.0});
  Var ortho = g.constant(Tensor::matrix({{0.9, 0.0}, {0.0, -0.4}}));
  cases.push_back({"L_PT(orthogonal)", loss_pull_away(ortho).val().item(), 0.0});
  Var mixed = g.constant(Tensor::matrix({{0.5, 0.0}, {1.5, 0.0}, {0.0, 2.0}}));
  cases.push_back({"L_PT(2+1)", loss_pull_away(mixed).val().item(), 1.0 / 3.0});

  // Skip-gram term with all-zero vectors and k = 5 negatives: six sigmoids
  // at zero, each contributing ln 2.
  const std::vector<double> zvec(8, 0.0);
  cases.push_back({"SGNS(0,k=5)",
                   sgns_loss(zvec, zvec, std::vector<std::vector<double>>(5, zvec)),
                   6.0 * std::log(2.0)});

  double worst = 0.0;
  const char* worst_name = "";
  for (const auto& c : cases) {
    const double dev = std::abs(c.got - c.want);
    if (dev > worst) {
      worst = dev;
      worst_name = c.name;
    }
  }
  return {worst <= 1e-12,
          "max deviation " + fmt("%.2e", worst) + " (" + worst_name + ")"};
}

// ---------------------------------------------------------------- criterion 4

// Independent oracle: recount the confusion matrix from scratch at every
// distinct threshold and integrate the same trapezoid.
double brute_force_pr_auc(const std::vector<double>& scores,
                          const std::vector<int>& labels) {
  std::set<double, std::greater<double>> thresholds(scores.begin(), scores.end());
  double total_pos = 0.0;
  for (int y : labels) total_pos += y;
  std::vector<std::pair<double, double>> rp;  // (recall, precision)
  for (double t : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (labels[i] == 1 ? tp : fp) += 1.0;
    }
    rp.emplace_back(tp / total_pos, tp / (tp + fp));
  }
  rp.insert(rp.begin(), {0.0, rp.front().second});
  double auc = 0.0;
  for (std::size_t i = 0; i + 1 < rp.size(); ++i)
    auc += (rp[i + 1].first - rp[i].first) * (rp[i].second + rp[i + 1].second) / 2.0;
  return auc;
}

Outcome check_pr_auc_oracle() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 8;

  std::vector<std::vector<double>> score_sets;
  for (int s = 0; s < 10; ++s) {
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    score_sets.push_back(v);
  }
  for (int s = 0; s < 10; ++s) {  // heavy ties
    std::vector<double> v(n);
    for (double& x : v) x = 0.25 * static_cast<double>(rng() % 5);
    score_sets.push_back(v);
  }

  std::size_t compared = 0;
  double max_dev = 0.0;
  for (const auto& scores : score_sets) {
    for (unsigned mask = 0; mask < 256; ++mask) {
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = (mask >> i) & 1u;
      if (mask == 0 || mask == 255) {
        // single-class labelings are undefined; both sides must refuse
        try {
          pr_curve(scores, labels);
          return {false, "pr_curve accepted a single-class labeling"};
        } catch (const std::invalid_argument&) {
        }
        continue;
      }
      const double got = pr_auc(pr_curve(scores, labels));
      const double want = brute_force_pr_auc(scores, labels);
      max_dev = std::max(max_dev, std::abs(got - want));
      ++compared;
    }
  }

  // Invariance under strictly monotone transforms (tie structure preserved).
  const std::vector<unsigned> masks = {0x0F, 0xAA, 0x40};
  const std::vector<std::function<double(double)>> transforms = {
      [](double x) { return 2.0 * x + 1.0; },
      [](double x) { return std::tanh(x); },
      [](double x) { return x * x * x; },
      [](double x) { return std::exp(x); }};
  double max_inv_dev = 0.0;
  for (const auto& scores : score_sets) {
    for (unsigned mask : masks) {
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = (mask >> i) & 1u;
      PrCurve base = pr_curve(scores, labels);
      for (const auto& f : transforms) {
        std::vector<double> warped(n);
        for (std::size_t i = 0; i < n; ++i) warped[i] = f(scores[i]);
        PrCurve alt = pr_curve(warped, labels);
        if (alt.points.size() != base.points.size())
          return {false, "monotone transform changed the curve shape"};
        for (std::size_t i = 0; i < base.points.size(); ++i) {
          max_inv_dev = std::max(
              max_inv_dev, std::abs(alt.points[i].recall - base.points[i].recall));
          max_inv_dev = std::max(max_inv_dev, std::abs(alt.points[i].precision -
                                                       base.points[i].precision));
        }
        max_inv_dev =
            std::max(max_inv_dev, std::abs(pr_auc(alt) - pr_auc(base)));
      }
    }
  }

  const bool pass = max_dev <= 1e-12 && max_inv_dev <= 1e-12;
  return {pass, std::to_string(compared) + " labelings, max dev " +
                    fmt("%.2e", max_dev) + ", transform dev " +
                    fmt("%.2e", max_inv_dev)};
}

// ---------------------------------------------------------------- criterion 5

Outcome check_embedding_structure() {
  std::vector<double> gaps;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CohortConfig cc;
    cc.n_patients = 1200;
    cc.vocab_size = 200;
    cc.n_therapeutic_areas = 4;
    cc.seed = seed;
    Cohort cohort = generate_cohort(cc);
    Vocabulary vocab = Vocabulary::build(cohort.patients, 5);

    SgnsConfig sc;
    sc.dim = 32;
    sc.seed = seed;
    SgnsResult res = train_skipgram(cohort.patients, vocab, sc);

    std::map<std::size_t, int> groups;
    for (std::size_t code = 0; code < cc.vocab_size; ++code) {
      const int ta = cohort.meta.ta_of_code[code];
      if (ta < 0) continue;  // disease markers belong to no single area
      if (auto idx = vocab.index_of(code_token(code))) groups[*idx] = ta;
    }
    ClusterSeparation s = cluster_separation(res.embedding, groups);
    gaps.push_back(s.intra - s.inter);
  }
  const double med = median(gaps);
  std::string detail = "median intra-inter gap " + fmt("%.3f", med) + " (seeds:";
  for (double gap : gaps) detail += " " + fmt("%.3f", gap);
  detail += ")";
  return {med >= 0.1, detail};
}

// ---------------------------------------------------------------- criterion 6

Outcome check_end_to_end() {
  std::vector<double> sgan, dnn, lr;
  double min_ratio = 1e300;
  std::string ratios;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TempDir dir("e2e_seed" + std::to_string(seed));
    PipelineConfig cfg;  // stock configuration
    cfg.seed = seed;
    EvalReport rep = run_all(make_context(cfg, dir.path));
    sgan.push_back(rep.pr_auc.at("sgan"));
    dnn.push_back(rep.pr_auc.at("dnn"));
    lr.push_back(rep.pr_auc.at("lr"));
    for (const auto& [name, auc] : rep.pr_auc)
      min_ratio = std::min(min_ratio, auc / rep.base_rate);
  }
  const double med_sgan = median(sgan), med_dnn = median(dnn);
  const bool beats_prevalence = min_ratio >= 5.0;
  const bool ordering = med_sgan >= med_dnn;
  std::string detail = "min auc/prevalence ratio " + fmt("%.1f", min_ratio) +
                       ", median sgan " + fmt("%.3f", med_sgan) + " vs dnn " +
                       fmt("%.3f", med_dnn) + " (lr " + fmt("%.3f", median(lr)) +
                       ")";
  return {beats_prevalence && ordering, detail};
}

// ---------------------------------------------------------------- criterion 7

Outcome check_null_signal() {
  std::mt19937_64 null_rng(777);
  double worst_z = 0.0;
  std::string worst_tag;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TempDir dir("null_seed" + std::to_string(seed));
    PipelineConfig cfg;
    cfg.seed = seed;
    cfg.cohort.n_patients = 2500;
    cfg.cohort.prevalence = 0.04;
    cfg.cohort.signal_strength = 0.0;
    cfg.embedding.epochs = 3;
    cfg.encoder.epochs = 5;
    cfg.gan.epochs = 10;
    EvalReport rep = run_all(make_context(cfg, dir.path));

    // Empirical null: PR-AUC of uniform random scores on this test split.
    std::ifstream is(dir.path / "features_test.csv");
    FeatureTable t = read_feature_csv(is);
    std::vector<int> y;
    for (Label l : t.labels) y.push_back(l == Label::Positive ? 1 : 0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> null_aucs;
    for (int draw = 0; draw < 200; ++draw) {
      std::vector<double> scores(y.size());
      for (double& s : scores) s = u(null_rng);
      null_aucs.push_back(pr_auc(pr_curve(scores, y)));
    }
    double mu = 0.0;
    for (double a : null_aucs) mu += a;
    mu /= null_aucs.size();
    double var = 0.0;
    for (double a : null_aucs) var += (a - mu) * (a - mu);
    const double sigma = std::sqrt(var / (null_aucs.size() - 1));

    for (const auto& [name, auc] : rep.pr_auc) {
      const double z = std::abs(auc - mu) / sigma;
      if (z > worst_z) {
        worst_z = z;
        worst_tag = name + " seed " + std::to_string(seed) + " auc " +
                    fmt("%.4f", auc) + " null " + fmt("%.4f", mu) + " +- " +
                    fmt("%.4f", sigma);
      }
    }
  }
  return {worst_z <= 3.0,
          "max |z| " + fmt("%.2f", worst_z) + " (" + worst_tag + ")"};
}

// ---------------------------------------------------------------- criterion 8

std::vector<std::vector<double>> parse_csv_numbers(const fs::path& path,
                                                   std::size_t skip_cols) {
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    for (std::size_t col = 0; std::getline(ls, cell, ','); ++col)
      if (col >= skip_cols) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

Outcome check_determinism() {
  PipelineConfig cfg;
  cfg.seed = 5;
  cfg.cohort.n_patients = 1500;
  cfg.cohort.prevalence = 0.04;
  cfg.embedding.epochs = 3;
  cfg.encoder.epochs = 5;
  cfg.gan.epochs = 5;

  TempDir a("det_a"), b("det_b");
  EvalReport ra = run_all(make_context(cfg, a.path));
  EvalReport rb = run_all(make_context(cfg, b.path));

  for (const auto& [name, auc] : ra.pr_auc)
    if (auc != rb.pr_auc.at(name))
      return {false, "PR-AUC for " + name + " differs between runs"};

  auto la = parse_csv_numbers(a.path / "gan_loss.csv", 0);
  auto lb = parse_csv_numbers(b.path / "gan_loss.csv", 0);
  if (la.size() != lb.size() || la.empty())
    return {false, "loss histories have different lengths"};
  double max_dev = 0.0;
  for (std::size_t i = 0; i < la.size(); ++i) {
    if (la[i].size() != lb[i].size())
      return {false, "loss history row width differs"};
    for (std::size_t j = 0; j < la[i].size(); ++j)
      max_dev = std::max(max_dev, std::abs(la[i][j] - lb[i][j]));
  }
  return {max_dev <= 1e-9, std::to_string(la.size()) + " loss rows, max dev " +
                               fmt("%.2e", max_dev) + ", identical PR-AUC"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_seconds;  // 0 = no stated bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"reparameterization identity", 1.0, check_reparameterization},
      {"gradient suite", 120.0, check_gradients},
      {"loss-value oracles", 0.0, check_loss_oracles},
      {"pr-auc oracle equivalence", 30.0, check_pr_auc_oracle},
      {"embedding cluster structure", 120.0, check_embedding_structure},
      {"end-to-end detection ordering", 600.0, check_end_to_end},
      {"null-signal sanity", 0.0, check_null_signal},
      {"run-to-run determinism", 0.0, check_determinism},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const double t0 = now_seconds();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = now_seconds() - t0;
    if (out.pass && c.budget_seconds > 0.0 && elapsed > c.budget_seconds) {
      out.pass = false;
      out.detail += " [exceeded " + fmt("%.0f", c.budget_seconds) + "s budget]";
    }
    failed += out.pass ? 0 : 1;
    std::printf("%s  %zu/8 %-32s (%7.2fs)  %s\n", out.pass ? "PASS" : "FAIL",
                i + 1, c.name, elapsed, out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/8 criteria passed\n", 8 - failed);
  return failed == 0 ? 0 : 1;
}
