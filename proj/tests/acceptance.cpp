// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmme/baum_welch.hpp"
#include "hmme/cluster.hpp"
#include "hmme/ensemble.hpp"
#include "hmme/eval.hpp"
#include "hmme/io.hpp"
#include "hmme/model_io.hpp"
#include "hmme/sample.hpp"
#include "hmme/seqconstruct.hpp"
#include "oracles.hpp"

using namespace hmme;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> sticky(std::size_t states, double stay) {
  std::vector<double> tr;
  for (std::size_t i = 0; i < states; ++i) {
    for (std::size_t j = 0; j < states; ++j) tr.push_back(i == j ? stay : (1.0 - stay) / static_cast<double>(states - 1));
  }
  return tr;
}

const std::vector<double> kUniform3{1.0 / 3, 1.0 / 3, 1.0 / 3};

Ensemble hand_built(std::vector<Hmm> pos, std::vector<Hmm> neg) {
  Ensemble ens;
  ens.config.n_pos = pos.size();
  ens.config.n_neg = neg.size();
  ens.pos_models = std::move(pos);
  ens.neg_models = std::move(neg);
  return ens;
}

// 1 -----------------------------------------------------------------------
Outcome forward_oracle() {
  Rng rng(101);
  double worst = 0.0;
  for (int c = 0; c < 200; ++c) {
    const std::size_t states = 1 + rng.below(3);
    const std::size_t length = 1 + rng.below(6);
    const bool discrete = c % 2 == 0;
    const Hmm model = discrete ? oracle::random_categorical(rng, states, 2 + rng.below(3))
                               : oracle::random_gaussian(rng, states, 1 + rng.below(3));
    const ActionSequence seq = discrete ? oracle::random_discrete(rng, length, model.emission_width())
                                        : oracle::random_continuous(rng, length, model.emission_width());
    const double got = forward_log_likelihood(model, seq);
    const double want = oracle::path_enumeration_log_likelihood(model, seq);
    worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
  }
  return {worst <= 1e-9, fmt("200 cases, max relative error %.2e (tolerance 1e-9)", worst)};
}

// 2 -----------------------------------------------------------------------
bool invariants_hold(const Hmm& m) {
  auto row_ok = [&](std::span<const double> row) {
    double sum = 0.0;
    for (double p : row) {
      if (p < m.prob_floor() * (1.0 - 1e-12)) return false;
      sum += p;
    }
    return std::abs(sum - 1.0) <= 1e-9;
  };
  const std::size_t s = m.num_states();
  if (!row_ok(m.initial())) return false;
  for (std::size_t i = 0; i < s; ++i) {
    if (!row_ok(std::span<const double>(m.transitions()).subspan(i * s, s))) return false;
  }
  if (m.is_categorical()) {
    const auto& e = m.categorical();
    for (std::size_t i = 0; i < s; ++i) {
      if (!row_ok(std::span<const double>(e.probs).subspan(i * e.alphabet_size, e.alphabet_size))) return false;
    }
  } else {
    for (double v : m.gaussian().variances) {
      if (!(v >= m.variance_floor())) return false;
    }
  }
  return true;
}

Outcome em_monotonicity() {
  Rng rng(202);
  double worst_drop = 0.0;
  std::size_t violations = 0, iterations = 0;
  for (int run = 0; run < 50; ++run) {
    const bool discrete = run % 2 == 0;
    const std::size_t n = 20 + rng.below(81);
    const Hmm generator = discrete ? oracle::random_categorical(rng, 3, 4) : oracle::random_gaussian(rng, 3, 2);
    std::vector<ActionSequence> corpus;
    for (std::size_t i = 0; i < n; ++i) corpus.push_back(sample(generator, 5 + rng.below(46), rng));
    TrainConfig cfg;
    cfg.num_states = 2 + rng.below(3);
    cfg.seed = rng.next_u64();
    cfg.convergence_tolerance = 1e-6;
    const auto fit = baum_welch_fit(corpus, cfg, [&](std::size_t, const Hmm& m) {
      ++iterations;
      if (!invariants_hold(m)) ++violations;
    });
    violations += !invariants_hold(fit.model);
    const auto& trace = fit.diagnostics.trace;
    for (std::size_t i = 1; i < trace.size(); ++i) worst_drop = std::max(worst_drop, trace[i - 1] - trace[i]);
  }
  return {worst_drop <= 1e-8 && violations == 0,
          fmt("50 runs, %zu EM iterations, largest decrease %.2e (tolerance 1e-8), %zu invariant violations",
              iterations, std::max(worst_drop, 0.0), violations)};
}

// 3 -----------------------------------------------------------------------
Outcome parameter_recovery() {
  const Hmm truth({0.6, 0.4}, {0.85, 0.15, 0.25, 0.75},
                  CategoricalEmissions{3, {0.75, 0.20, 0.05, 0.05, 0.25, 0.70}});
  Rng rng(303);
  std::vector<ActionSequence> corpus;
  for (int i = 0; i < 1000; ++i) corpus.push_back(sample(truth, 50, rng));
  TrainConfig cfg;
  cfg.num_states = 2;
  cfg.seed = 17;
  cfg.convergence_tolerance = 1e-7;
  cfg.max_iterations = 500;
  const auto fit = baum_welch_fit(corpus, cfg);
  const double err = oracle::permuted_max_error(fit.model, truth);
  return {err < 0.05, fmt("50000 observations, best-permutation max entry error %.4f (limit 0.05), %zu iterations", err,
                          fit.diagnostics.iterations)};
}

// 4 -----------------------------------------------------------------------
Outcome composite_identities() {
  Rng rng(404);
  std::vector<Hmm> pos, neg;
  for (int i = 0; i < 5; ++i) pos.push_back(oracle::random_categorical(rng, 3, 4));
  for (int i = 0; i < 7; ++i) neg.push_back(oracle::random_categorical(rng, 3, 4));
  const auto ens = hand_built(pos, neg);
  const auto swapped = hand_built(neg, pos);
  const Hmm shared = oracle::random_categorical(rng, 3, 4);
  const auto same = hand_built({shared, shared, shared}, {shared, shared, shared, shared});
  const auto single = hand_built({pos[0]}, {neg[0]});

  std::size_t bound = 0, identical = 0, antisym = 0, antisym_checked = 0, singleton = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto seq = oracle::random_discrete(rng, 1 + rng.below(30), 4);
    const auto s = composite_score(ens, seq);
    bound += s.value > s.max();
    identical += composite_score(same, seq).value != 0;
    const auto pl = log_likelihoods(ens.pos_models, seq);
    const auto nl = log_likelihoods(ens.neg_models, seq);
    bool tie = false;
    for (double a : pl) {
      for (double b : nl) tie = tie || a == b;
    }
    if (!tie) {
      ++antisym_checked;
      antisym += s.value + composite_score(swapped, seq).value != s.max();
    }
    singleton += classify_threshold(composite_score(single, seq), 1) != classify_singleton(pos[0], neg[0], seq);
  }
  return {bound + identical + antisym + singleton == 0,
          fmt("1000 sequences: bound violations %zu, identical-ensemble nonzero %zu, antisymmetry failures %zu of %zu "
              "tie-free, singleton disagreements %zu",
              bound, identical, antisym, antisym_checked, singleton)};
}

// 5 -----------------------------------------------------------------------
// Two 3-state diagonal Gaussian generators; the positive one has every
// state mean shifted by one unit.
SyntheticSpec benchmark_spec(std::uint64_t seed) {
  const Hmm neg(kUniform3, sticky(3, 0.85), DiagGaussianEmissions{2, {-2, 0, 0, 2, 2, 0}, {1, 1, 1, 1, 1, 1}});
  const Hmm pos(kUniform3, sticky(3, 0.85), DiagGaussianEmissions{2, {-1, 1, 0, 1, 2, 1}, {1, 1, 1, 1, 1, 1}});
  SyntheticSpec spec;
  spec.generators = {{neg, 0, 1.0}, {pos, 1, 1.0}};
  spec.num_sequences = 5100;
  spec.imbalance_ratio = 50.0;
  spec.min_length = 20;
  spec.max_length = 40;
  spec.seed = seed;
  return spec;
}

Outcome synthetic_benchmark(std::size_t workers) {
  const std::uint64_t seed = 1;
  const auto corpus = generate_synthetic_corpus(benchmark_spec(seed));
  std::vector<int> labels;
  for (const auto& s : corpus) labels.push_back(s.label);
  const std::vector<double> fractions{0.6, 0.2};
  const auto parts = stratified_split(labels, fractions, seed + 1);
  std::vector<ActionSequence> pos, neg;
  for (auto i : parts[0]) (corpus[i].label ? pos : neg).push_back(corpus[i].sequence);

  EnsembleConfig ec;  // N = M = 250, s = 0.01, 3 states
  ec.master_seed = seed + 2;
  const auto ens = train_ensemble(pos, neg, ec, workers);
  auto scored = [&](std::span<const std::size_t> idx) {
    std::vector<ActionSequence> seqs;
    for (auto i : idx) seqs.push_back(corpus[i].sequence);
    const auto batch = score_batch(ens, seqs, false, workers);
    LabeledScores out;
    for (std::size_t k = 0; k < idx.size(); ++k) out.push_back({static_cast<double>(batch[k].score.value), corpus[idx[k]].label});
    return out;
  };
  const auto validation = scored(parts[1]);
  const auto test = scored(parts[2]);
  const auto choice = sweep_threshold(validation, ens.max_score());
  const double auc = auc_roc(test);
  const double ba = balanced_accuracy(confusion_at(test, static_cast<double>(choice.threshold)));

  TrainConfig tc;
  tc.seed = seed + 3;
  const Hmm single_pos = baum_welch_fit(pos, tc).model;
  const Hmm single_neg = baum_welch_fit(neg, tc).model;
  LabeledScores single;
  for (auto i : parts[2]) {
    single.push_back({forward_log_likelihood(single_pos, corpus[i].sequence) -
                          forward_log_likelihood(single_neg, corpus[i].sequence),
                      corpus[i].label});
  }
  const double single_auc = auc_roc(single);
  return {auc >= 0.90 && ba >= 0.85 && auc > single_auc,
          fmt("5000 neg / 100 pos, test AUC %.4f (>= 0.90), balanced accuracy %.4f at k=%zu (>= 0.85), singleton AUC "
              "%.4f (ensemble must exceed)",
              auc, ba, choice.threshold, single_auc)};
}

// 6 -----------------------------------------------------------------------
Outcome unsampled_fraction(std::size_t workers) {
  const double expected = expected_unsampled_fraction(0.01, 250);
  double worst = 0.0;
  std::string realized;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(600 + seed);
    std::vector<ActionSequence> pos, neg;
    for (int i = 0; i < 1000; ++i) {
      pos.push_back(oracle::random_discrete(rng, 4, 2));
      neg.push_back(oracle::random_discrete(rng, 4, 2));
    }
    EnsembleConfig ec;
    ec.master_seed = seed;
    ec.base.max_iterations = 5;
    const auto ens = train_ensemble(pos, neg, ec, workers);
    for (const auto* members : {&ens.pos_members, &ens.neg_members}) {
      std::vector<bool> seen(1000, false);
      for (const auto& m : *members) {
        for (auto i : m.subset) seen[i] = true;
      }
      const double frac = static_cast<double>(std::count(seen.begin(), seen.end(), false)) / 1000.0;
      worst = std::max(worst, std::abs(frac - expected));
      if (realized.size() < 60) realized += fmt("%.3f ", frac);
    }
  }
  return {worst <= 0.03, fmt("expected %.5f, 10 seeds x 2 classes, max deviation %.4f (limit 0.03); first: %s", expected,
                             worst, realized.c_str())};
}

// 7 -----------------------------------------------------------------------
Outcome unsupervised_clustering(std::size_t workers) {
  auto em = [](std::vector<double> rows) { return CategoricalEmissions{4, std::move(rows)}; };
  SyntheticSpec spec;
  // Three regimes that favour different token pairs.
  spec.generators = {
      {Hmm(kUniform3, sticky(3, 0.8), em({0.7, 0.2, 0.05, 0.05, 0.2, 0.7, 0.05, 0.05, 0.4, 0.4, 0.1, 0.1})), 1, 1.0},
      {Hmm(kUniform3, sticky(3, 0.8), em({0.05, 0.05, 0.7, 0.2, 0.05, 0.05, 0.2, 0.7, 0.1, 0.1, 0.4, 0.4})), 1, 1.0},
      {Hmm(kUniform3, sticky(3, 0.8), em({0.7, 0.05, 0.2, 0.05, 0.05, 0.7, 0.05, 0.2, 0.2, 0.05, 0.7, 0.05})), 1, 1.0},
  };
  spec.num_sequences = 1500;
  spec.min_length = 20;
  spec.max_length = 40;
  spec.seed = 7;
  const auto corpus = generate_synthetic_corpus(spec);
  std::vector<ActionSequence> seqs;
  std::vector<std::size_t> truth;
  for (const auto& s : corpus) {
    seqs.push_back(s.sequence);
    truth.push_back(s.generator);
  }
  TrainConfig base;
  const auto ens = train_unsupervised_ensemble(seqs, 100, 0.01, base, 8, workers);
  const auto feats = feature_batch(ens.models, seqs, workers);
  const auto result = cluster_features(feats, KMeansOptions{.k = 3, .seed = 9});
  const double purity = majority_purity(result.assignments, truth);
  const double ari = adjusted_rand_index(result.assignments, truth);
  return {purity >= 0.8, fmt("1500 sequences, 100 models, k=3: purity %.4f (>= 0.8), adjusted Rand %.4f", purity, ari)};
}

// 8 -----------------------------------------------------------------------
EventRecord tok(long long sec, std::string t) {
  EventRecord e;
  e.agent_key = "a";
  e.timestamp = TimePoint(std::chrono::seconds(sec));
  e.payload = std::move(t);
  return e;
}

DailyRecord day(int d, std::vector<std::optional<double>> f) {
  using namespace std::chrono;
  return DailyRecord{"a", sys_days{year{2018} / 1 / 1} + days{d}, std::move(f), {}, {}};
}

Outcome seqconstruct_conformance() {
  std::vector<std::string> failed;
  auto check = [&](bool ok, const char* name) {
    if (!ok) failed.push_back(name);
  };
  SessionizeConfig sc;
  sc.wait_gap = std::chrono::seconds(60);
  sc.break_gap = std::chrono::seconds(300);

  {
    const std::vector<EventRecord> s{tok(0, "a"), tok(10, "b"), tok(20, "a")};
    const auto out = sessionize(s, Codebook::build(s), sc);
    check(out.size() == 1 && out[0].size() == 3, "no-gap session");
  }
  {
    const std::vector<EventRecord> s{tok(0, "e1"), tok(30, "e2"), tok(400, "e3"), tok(420, "e4")};
    const auto out = sessionize(s, Codebook::build(s), sc);
    check(out.size() == 2 && out[0] == ActionSequence::discrete({0, 1}) && out[1] == ActionSequence::discrete({2, 3}),
          "break split");
  }
  {
    const std::vector<EventRecord> s{tok(0, "e1"), tok(90, "e2")};
    const auto cb = Codebook::build(s);
    const auto out = sessionize(s, cb, sc);
    check(out.size() == 1 && out[0] == ActionSequence::discrete({0, cb.wait_id(), 1}), "wait insertion");
  }
  {
    const std::vector<EventRecord> s{tok(0, "click"), tok(1, "scroll"), tok(2, "click")};
    const auto cb = Codebook::build(s);
    check(cb.size() == 2 && tokenize(s, cb) == std::vector<Token>{0, 1, 0} && cb.id("hover") == cb.unk_id(), "codebook");
  }
  {
    const std::vector<DailyRecord> r{day(0, {1.0, std::nullopt, std::nullopt, std::nullopt}),
                                     day(1, {1.0, 2.0, std::nullopt, std::nullopt})};
    const auto out = impute_and_filter(r, 0.5);
    check(out.records.size() == 1 && out.records[0].day == r[1].day, "missing-fraction strict boundary");
  }
  {
    const std::vector<DailyRecord> r{day(0, {1.0}), day(1, {std::nullopt}), day(2, {3.0})};
    const auto out = impute_and_filter(r, 1.0);
    check(out.records.size() == 3 && *out.records[1].features[0] == 2.0, "median imputation");
  }
  {
    const std::vector<DailyRecord> r{day(0, {1.0, 5.0}), day(1, {2.0, 5.0}), day(2, {3.0, 5.0})};
    const auto out = normalize_features(r);
    const double z = std::sqrt(1.5);
    check(std::abs(*out[0].features[0] + z) < 1e-4 && std::abs(*out[1].features[0]) < 1e-12 &&
              std::abs(*out[2].features[0] - z) < 1e-4 && *out[0].features[1] == 0.0,
          "z-score normalization");
  }
  {
    std::vector<DailyRecord> r;
    for (int d = 0; d < 40; ++d) r.push_back(day(d, {static_cast<double>(d)}));
    r.back().label = 1;
    const WindowConfig wc{28, 7, AnchorMode::labeled_days};
    const auto w40 = window_sequences(r, wc);
    check(w40.size() == 1 && w40[0].sequence.size() == 28, "28-day window");
    std::vector<DailyRecord> ten(r.begin(), r.begin() + 10);
    ten.back().label = 0;
    const auto w10 = window_sequences(ten, wc);
    check(w10.size() == 1 && w10[0].sequence.size() == 10, "short history kept");
    std::vector<DailyRecord> five(r.begin(), r.begin() + 5);
    five.back().label = 0;
    check(window_sequences(five, wc).empty(), "below minimum history dropped");
  }
  std::string detail = "10 examples";
  if (!failed.empty()) {
    detail += ", failed:";
    for (const auto& f : failed) detail += " [" + f + "]";
  } else {
    detail += " match";
  }
  return {failed.empty(), detail};
}

// 9 -----------------------------------------------------------------------
Outcome metric_oracles() {
  Rng rng(909);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(15);
    LabeledScores s;
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = static_cast<double>(rng.below(5)) + (rng.uniform() < 0.5 ? 0.0 : rng.uniform());
      const int l = i == 0 ? 1 : (i == 1 ? 0 : static_cast<int>(rng.below(2)));
      s.push_back({v, l});
      scores.push_back(v);
      labels.push_back(l);
    }
    worst = std::max(worst, std::abs(auc_roc(s) - oracle::auc_by_pairs(scores, labels)));
  }
  double ba_worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Confusion c{1 + rng.below(50), rng.below(50), 1 + rng.below(50), rng.below(50)};
    const double direct = 0.5 * (static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) +
                                 static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp));
    ba_worst = std::max(ba_worst, std::abs(balanced_accuracy(c) - direct));
  }
  return {worst <= 1e-12 && ba_worst <= 1e-12,
          fmt("100 score sets, max AUC deviation %.2e; 100 confusions, max balanced-accuracy deviation %.2e (tolerance 1e-12)",
              worst, ba_worst)};
}

// 10 / 11 (through the command-line tool) ---------------------------------
int shell(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json categorical_generator(double stay, std::vector<std::vector<double>> rows) {
  const std::size_t s = rows.size();
  std::vector<std::vector<double>> tr(s, std::vector<double>(s, (1.0 - stay) / static_cast<double>(s - 1)));
  for (std::size_t i = 0; i < s; ++i) tr[i][i] = stay;
  return {{"format_version", 1}, {"kind", "categorical"}, {"num_states", s}, {"alphabet_size", rows[0].size()},
          {"initial", std::vector<double>(s, 1.0 / static_cast<double>(s))}, {"transitions", tr}, {"emissions", rows}};
}

// Runs simulate -> construct -> train -> score -> eval inside `dir`, with
// relative paths so the echoed configs do not depend on the location.
bool run_pipeline(const fs::path& dir, std::size_t workers) {
  fs::create_directories(dir);
  const std::string in = "cd " + dir.string() + " && " + HMME_CLI_PATH;
  const std::string w = " --workers " + std::to_string(workers);
  const std::string cfg = " --config ../run.json";
  return shell(in + " simulate --spec ../spec.json --events --seed 31" + w + " --out sim") == 0 &&
         shell(in + " construct" + cfg + w + " --input sim/events.csv --out con") == 0 &&
         shell(in + " train" + cfg + w + " --sequences con/sequences.jsonl --out ens") == 0 &&
         shell(in + " score" + cfg + w + " --features --ensemble ens --sequences con/sequences.jsonl --out score") == 0 &&
         shell(in + " eval" + cfg + w + " --sequences con/sequences.jsonl --out eval") == 0;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

Outcome pipeline_determinism(const fs::path& work) {
  json spec = {{"num_sequences", 400}, {"min_length", 20}, {"max_length", 40}, {"imbalance_ratio", 3.0},
               {"periods", {"2018", "2019", "2020", "2021"}}};
  spec["generators"] = {
      {{"label", 0}, {"model", categorical_generator(0.85, {{0.7, 0.2, 0.1}, {0.1, 0.3, 0.6}, {0.3, 0.4, 0.3}})}},
      {{"label", 1}, {"model", categorical_generator(0.5, {{0.2, 0.6, 0.2}, {0.5, 0.1, 0.4}, {0.3, 0.3, 0.4}})}}};
  std::ofstream(work / "spec.json") << spec.dump(2);
  std::ofstream(work / "run.json") << json{{"seed", 13},
                                           {"input", {{"token_column", "token"}, {"label_column", "label"}, {"period_column", "period"}}},
                                           {"ensemble", {{"n_pos", 25}, {"n_neg", 25}, {"subset_fraction", 0.05}, {"alphabet_size", 5}}}}
                                          .dump(2);
  const std::size_t many = std::max<std::size_t>(4, default_workers());
  if (!run_pipeline(work / "a", 1) || !run_pipeline(work / "b", 1) || !run_pipeline(work / "c", many)) {
    return {false, "a pipeline stage exited nonzero"};
  }
  const auto a = tree_contents(work / "a");
  const auto b = tree_contents(work / "b");
  const auto c = tree_contents(work / "c");
  const bool same_run = a == b;
  const bool same_workers = a == c;
  std::string differing;
  for (const auto& [name, text] : a) {
    if ((!b.contains(name) || b.at(name) != text || !c.contains(name) || c.at(name) != text) && differing.size() < 80) {
      differing += " " + name;
    }
  }
  return {same_run && same_workers && a.size() >= 15,
          fmt("%zu output files; rerun identical: %s; 1 vs %zu workers identical: %s%s%s", a.size(), same_run ? "yes" : "no",
              many, same_workers ? "yes" : "no", differing.empty() ? "" : "; differing:", differing.c_str())};
}

Outcome parameter_count_report(const fs::path& work) {
  json gen = {{"format_version", 1},
              {"kind", "diag_gaussian"},
              {"num_states", 3},
              {"num_features", 4},
              {"initial", kUniform3},
              {"transitions", {{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}}},
              {"means", {{0, 0, 0, 0}, {1, 1, 1, 1}, {-1, 0, 1, 0}}},
              {"variances", {{1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}}}};
  json spec = {{"num_sequences", 400}, {"min_length", 20}, {"max_length", 28}, {"imbalance_ratio", 1.0}, {"seed", 3}};
  spec["generators"] = {{{"label", 0}, {"model", gen}}, {{"label", 1}, {"model", gen}}};
  std::ofstream(work / "gauss_spec.json") << spec.dump();
  std::ofstream(work / "gauss_run.json") << json{{"ensemble", {{"n_pos", 125}, {"n_neg", 125}, {"subset_fraction", 0.05}}}}.dump();
  const std::string cli = HMME_CLI_PATH;
  if (shell(cli + " simulate --spec " + (work / "gauss_spec.json").string() + " --out " + (work / "g").string()) != 0 ||
      shell(cli + " train --config " + (work / "gauss_run.json").string() + " --sequences " +
            (work / "g" / "sequences.jsonl").string() + " --out " + (work / "gens").string()) != 0) {
    return {false, "training command failed"};
  }
  const auto log = json::parse(slurp(work / "gens" / "train_log.json"));
  std::set<std::size_t> counts;
  for (const auto& m : log["models"]) counts.insert(m["parameter_count"].get<std::size_t>());
  const auto total = log["total_parameter_count"].get<std::size_t>();
  const bool ok = counts == std::set<std::size_t>{24} && total == 6000 && log["models"].size() == 250;
  return {ok, fmt("per-model parameter count %s, %zu models, total %zu (expected 24 each, 6000 total)",
                  counts.size() == 1 ? std::to_string(*counts.begin()).c_str() : "mixed", log["models"].size(), total)};
}

}  // namespace

int main() {
  const std::size_t workers = default_workers();
  const fs::path work = fs::temp_directory_path() / "hmme_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "forward-oracle equivalence", forward_oracle},
      {2, "EM monotonicity and invariants", em_monotonicity},
      {3, "parameter recovery", parameter_recovery},
      {4, "composite-score identities", composite_identities},
      {5, "synthetic imbalanced benchmark", [&] { return synthetic_benchmark(workers); }},
      {6, "unsampled-fraction check", [&] { return unsampled_fraction(workers); }},
      {7, "unsupervised clustering", [&] { return unsupervised_clustering(workers); }},
      {8, "sequence-construction conformance", seqconstruct_conformance},
      {9, "metric oracles", metric_oracles},
      {10, "pipeline determinism", [&] { return pipeline_determinism(work); }},
      {11, "parameter-count report", [&] { return parameter_count_report(work); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s  %2d  %-34s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  fs::remove_all(work);
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}
