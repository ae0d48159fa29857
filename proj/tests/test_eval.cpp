#include <gtest/gtest.h>

#include <set>

#include "hmme/baum_welch.hpp"
#include "hmme/ensemble.hpp"
#include "hmme/eval.hpp"
#include "oracles.hpp"

using namespace hmme;

TEST(AucRoc, Examples) {
  const LabeledScores sep{{0.9, 1}, {0.8, 1}, {0.2, 0}, {0.1, 0}};
  EXPECT_EQ(auc_roc(sep), 1.0);
  const LabeledScores tied{{0.5, 1}, {0.5, 0}, {0.5, 1}, {0.5, 0}};
  EXPECT_EQ(auc_roc(tied), 0.5);
  const LabeledScores mixed{{0.9, 1}, {0.8, 0}, {0.7, 1}, {0.6, 0}};
  EXPECT_DOUBLE_EQ(auc_roc(mixed), 0.75);
  const LabeledScores one_class{{0.1, 1}, {0.2, 1}};
  EXPECT_THROW(auc_roc(one_class), InputError);
}

TEST(AucRoc, MatchesPairEnumeration) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    LabeledScores s;
    const std::size_t n = 2 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) s.push_back({static_cast<double>(rng.below(6)), static_cast<int>(rng.below(2))});
    s[0].label = 1;
    s[1].label = 0;
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& e : s) {
      scores.push_back(e.score);
      labels.push_back(e.label);
    }
    EXPECT_NEAR(auc_roc(s), oracle::auc_by_pairs(scores, labels), 1e-12);
  }
}

TEST(BalancedAccuracy, Examples) {
  EXPECT_DOUBLE_EQ(balanced_accuracy(Confusion{.tp = 8, .fp = 4, .tn = 6, .fn = 2}), 0.7);
  EXPECT_EQ(balanced_accuracy(Confusion{.tp = 5, .fp = 0, .tn = 3, .fn = 0}), 1.0);
  EXPECT_EQ(balanced_accuracy(Confusion{.tp = 5, .fp = 3, .tn = 0, .fn = 0}), 0.5);
  EXPECT_THROW(balanced_accuracy(Confusion{.tp = 5, .fp = 0, .tn = 0, .fn = 0}), InputError);
}

TEST(BalancedAccuracy, ConstantPredictorIsHalf) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> labels{0, 1};
    for (int i = 0; i < 20; ++i) labels.push_back(static_cast<int>(rng.below(2)));
    for (int constant : {0, 1}) {
      const std::vector<int> preds(labels.size(), constant);
      EXPECT_EQ(balanced_accuracy(confusion_from(preds, labels)), 0.5);
    }
  }
}

TEST(SweepThreshold, Examples) {
  const LabeledScores s{{5, 1}, {4, 1}, {3, 0}, {2, 0}};
  const auto best = sweep_threshold(s, 10);
  EXPECT_EQ(best.threshold, 4u);
  EXPECT_EQ(best.balanced_accuracy, 1.0);
  const LabeledScores flat{{3, 1}, {3, 0}, {3, 1}};
  EXPECT_EQ(sweep_threshold(flat, 5).balanced_accuracy, 0.5);
  EXPECT_THROW(sweep_threshold(LabeledScores{{1.5, 1}, {0, 0}}, 4), InputError);
}

TEST(SweepThreshold, MatchesExhaustiveSearch) {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    LabeledScores s{{static_cast<double>(rng.below(9)), 1}, {static_cast<double>(rng.below(9)), 0}};
    for (int i = 0; i < 15; ++i) s.push_back({static_cast<double>(rng.below(9)), static_cast<int>(rng.below(2))});
    double best = -1.0;
    std::size_t best_t = 0;
    for (std::size_t t = 0; t <= 9; ++t) {
      const double ba = balanced_accuracy(confusion_at(s, static_cast<double>(t)));
      if (ba > best) {
        best = ba;
        best_t = t;
      }
    }
    const auto got = sweep_threshold(s, 8);
    EXPECT_EQ(got.threshold, best_t);
    EXPECT_DOUBLE_EQ(got.balanced_accuracy, best);
  }
}

TEST(Folds, AllButOne) {
  std::map<std::string, std::vector<int>> periods{{"A", {1, 2}}, {"B", {3}}, {"C", {4, 5}}, {"D", {6}}};
  const auto folds = all_but_one_folds(periods);
  ASSERT_EQ(folds.size(), 4u);
  EXPECT_EQ(folds[0].held_out, "A");
  EXPECT_EQ(folds[0].train, (std::vector<int>{3, 4, 5, 6}));
  EXPECT_EQ(folds[0].test, (std::vector<int>{1, 2}));
  std::map<int, int> test_count, train_count;
  for (const auto& f : folds) {
    for (int x : f.test) ++test_count[x];
    for (int x : f.train) ++train_count[x];
  }
  for (int x = 1; x <= 6; ++x) {
    EXPECT_EQ(test_count[x], 1);
    EXPECT_EQ(train_count[x], 3);
  }
  const auto two = all_but_one_folds(std::map<std::string, std::vector<int>>{{"x", {1}}, {"y", {2}}});
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].train, two[1].test);
  EXPECT_THROW(all_but_one_folds(std::map<std::string, std::vector<int>>{{"x", {1}}}), InputError);
}

TEST(Summary, TableLayout) {
  std::vector<EvalReport> reports{{"2018", 0.6, 0.55, {1, 2, 3, 4}, 5}, {"2019", 0.8, 0.65, {4, 3, 2, 1}, 6}};
  const auto table = summary_table(reports);
  EXPECT_EQ(table.substr(0, table.find('\n')), "fold,auc,balanced_accuracy,tp,fp,tn,fn");
  EXPECT_NE(table.find("\n2018,"), std::string::npos);
  EXPECT_NE(table.find("\nmean,0.7"), std::string::npos);
  const std::vector<double> v{1.0, 3.0};
  EXPECT_DOUBLE_EQ(mean_std(v).std, 1.0);
  EXPECT_EQ(report_to_json(reports[0])["confusion"]["fn"], 4);
}

TEST(ClusterAgreement, PurityAndAri) {
  const std::vector<std::size_t> truth{0, 0, 0, 1, 1, 1};
  const std::vector<std::size_t> perm{2, 2, 2, 0, 0, 0};
  EXPECT_EQ(majority_purity(perm, truth), 1.0);
  EXPECT_NEAR(adjusted_rand_index(perm, truth), 1.0, 1e-12);
  const std::vector<std::size_t> one{0, 0, 0, 0, 0, 0};
  EXPECT_EQ(majority_purity(one, truth), 0.5);
  EXPECT_NEAR(adjusted_rand_index(one, truth), 0.0, 1e-12);
}

namespace {

Hmm coin(double p0) { return Hmm({1.0}, {{1.0}}, CategoricalEmissions{2, {{p0, 1.0 - p0}}}); }

}  // namespace

TEST(Synthetic, ImbalanceAndDeterminism) {
  SyntheticSpec spec;
  spec.generators = {{coin(0.9), 1, 1.0}, {coin(0.1), 0, 1.0}};
  spec.num_sequences = 1000;
  spec.imbalance_ratio = 9.0;
  spec.seed = 5;
  const auto corpus = generate_synthetic_corpus(spec);
  std::size_t pos = 0;
  for (const auto& s : corpus) {
    pos += s.label == 1;
    EXPECT_GE(s.sequence.size(), spec.min_length);
    EXPECT_LE(s.sequence.size(), spec.max_length);
  }
  EXPECT_EQ(pos, 100u);
  const auto again = generate_synthetic_corpus(spec);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(corpus[i].sequence, again[i].sequence);
    EXPECT_EQ(corpus[i].label, again[i].label);
  }
}

TEST(Synthetic, SingletonSeparatesCoins) {
  SyntheticSpec spec;
  spec.generators = {{coin(0.9), 1, 1.0}, {coin(0.1), 0, 1.0}};
  spec.num_sequences = 400;
  spec.min_length = 20;
  spec.max_length = 30;
  spec.seed = 9;
  const auto corpus = generate_synthetic_corpus(spec);
  std::vector<int> labels;
  for (const auto& s : corpus) labels.push_back(s.label);
  const std::vector<double> fractions{0.7};
  const auto parts = stratified_split(labels, fractions, 3);
  std::vector<ActionSequence> pos, neg;
  for (auto i : parts[0]) (corpus[i].label ? pos : neg).push_back(corpus[i].sequence);
  TrainConfig cfg;
  cfg.num_states = 1;
  const auto p = baum_welch_fit(pos, cfg).model;
  const auto n = baum_welch_fit(neg, cfg).model;
  std::vector<int> preds, truth;
  for (auto i : parts[1]) {
    preds.push_back(classify_singleton(p, n, corpus[i].sequence));
    truth.push_back(corpus[i].label);
  }
  EXPECT_GE(balanced_accuracy(confusion_from(preds, truth)), 0.95);
}

TEST(StratifiedSplit, PreservesProportionsAndCoversAll) {
  std::vector<int> labels(1000, 0);
  std::fill(labels.begin(), labels.begin() + 100, 1);
  const std::vector<double> fractions{0.6, 0.2};
  const auto parts = stratified_split(labels, fractions, 1);
  ASSERT_EQ(parts.size(), 3u);
  std::set<std::size_t> all;
  for (const auto& p : parts) all.insert(p.begin(), p.end());
  EXPECT_EQ(all.size(), 1000u);
  std::size_t pos0 = 0;
  for (auto i : parts[0]) pos0 += labels[i];
  EXPECT_EQ(parts[0].size(), 600u);
  EXPECT_EQ(pos0, 60u);
}
