#pragma once

// Metrics for imbalanced binary classification, all-but-one period folds,
// and a synthetic labeled-corpus generator.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmme/error.hpp"
#include "hmme/hmm.hpp"
#include "hmme/random.hpp"
#include "hmme/sample.hpp"
#include "hmme/sequence.hpp"

namespace hmme {

struct LabeledScore {
  double score = 0.0;
  int label = 0;
};

using LabeledScores = std::vector<LabeledScore>;

namespace detail {

inline void class_counts(std::span<const LabeledScore> scores, std::size_t& pos, std::size_t& neg) {
  pos = neg = 0;
  for (const auto& s : scores) {
    if (s.label == 1) {
      ++pos;
    } else if (s.label == 0) {
      ++neg;
    } else {
      throw InputError("labels must be 0 or 1");
    }
  }
  if (pos == 0 || neg == 0) throw InputError("both classes must be present");
}

}  // namespace detail

/// Area under the ROC curve as the Mann-Whitney statistic
/// P(score+ > score-) + 0.5 P(score+ = score-), from midranks.
inline double auc_roc(std::span<const LabeledScore> scores) {
  std::size_t n_pos = 0, n_neg = 0;
  detail::class_counts(scores, n_pos, n_neg);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a].score < scores[b].score; });

  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]].score == scores[order[i]].score) ++j;
    // Ranks i+1 .. j share the midrank.
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (scores[order[k]].label == 1) pos_rank_sum += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Mean of sensitivity and specificity; the positive class is label 1.
inline double balanced_accuracy(const Confusion& c) {
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) throw InputError("balanced accuracy needs both classes present");
  const double sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return 0.5 * (sensitivity + specificity);
}

inline Confusion confusion_from(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw InputError("prediction and label counts differ");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = predictions[i] == 1;
    if (labels[i] == 1) {
      predicted ? ++c.tp : ++c.fn;
    } else {
      predicted ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

/// Confusion of the rule "score >= threshold -> positive".
inline Confusion confusion_at(std::span<const LabeledScore> scores, double threshold) {
  Confusion c;
  for (const auto& s : scores) {
    const bool predicted = s.score >= threshold;
    if (s.label == 1) {
      predicted ? ++c.tp : ++c.fn;
    } else {
      predicted ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

struct ThresholdChoice {
  std::size_t threshold = 0;
  double balanced_accuracy = 0.0;
};

/// Tries every integer threshold 0 ..= max_score + 1 and keeps the one with
/// the highest balanced accuracy; ties go to the smaller threshold.
inline ThresholdChoice sweep_threshold(std::span<const LabeledScore> scores, std::size_t max_score) {
  std::size_t n_pos = 0, n_neg = 0;
  detail::class_counts(scores, n_pos, n_neg);
  // Histogram by integer score so the sweep is linear in max_score.
  std::vector<std::size_t> pos_at(max_score + 2, 0), neg_at(max_score + 2, 0);
  for (const auto& s : scores) {
    if (s.score < 0.0 || s.score > static_cast<double>(max_score) || s.score != std::floor(s.score)) {
      throw InputError("sweep_threshold expects integer scores in [0, max_score]");
    }
    const auto v = static_cast<std::size_t>(s.score);
    (s.label == 1 ? pos_at : neg_at)[v] += 1;
  }
  ThresholdChoice best{0, -1.0};
  // At threshold t, positives predicted = entries with score >= t.
  std::size_t tp = n_pos, fp = n_neg;
  for (std::size_t t = 0; t <= max_score + 1; ++t) {
    if (t > 0) {
      tp -= pos_at[t - 1];
      fp -= neg_at[t - 1];
    }
    const double ba = balanced_accuracy(Confusion{tp, fp, n_neg - fp, n_pos - tp});
    if (ba > best.balanced_accuracy) best = ThresholdChoice{t, ba};
  }
  return best;
}

template <typename T>
struct Fold {
  std::string held_out;
  std::vector<T> train;
  std::vector<T> test;
};

/// One fold per period: test on that period, train on the union of the rest.
template <typename T>
std::vector<Fold<T>> all_but_one_folds(const std::map<std::string, std::vector<T>>& periods) {
  if (periods.size() < 2) throw InputError("all-but-one validation needs at least 2 periods");
  std::vector<Fold<T>> folds;
  for (const auto& [held_out, test] : periods) {
    Fold<T> fold{held_out, {}, test};
    for (const auto& [id, corpus] : periods) {
      if (id != held_out) fold.train.insert(fold.train.end(), corpus.begin(), corpus.end());
    }
    folds.push_back(std::move(fold));
  }
  return folds;
}

struct EvalReport {
  std::string fold_id;
  double auc_roc = 0.0;
  double balanced_accuracy = 0.0;
  Confusion confusion;
  std::size_t threshold = 0;
};

inline nlohmann::json report_to_json(const EvalReport& r) {
  return nlohmann::json{{"fold_id", r.fold_id},
                        {"auc_roc", r.auc_roc},
                        {"balanced_accuracy", r.balanced_accuracy},
                        {"threshold", r.threshold},
                        {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}}};
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

inline MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

/// Per-fold rows followed by a mean and a std row:
/// fold,auc,balanced_accuracy,tp,fp,tn,fn
inline std::string summary_table(std::span<const EvalReport> reports) {
  std::string out = "fold,auc,balanced_accuracy,tp,fp,tn,fn\n";
  char buf[256];
  std::vector<double> aucs, bas;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%zu,%zu,%zu,%zu\n", r.fold_id.c_str(), r.auc_roc, r.balanced_accuracy,
                  r.confusion.tp, r.confusion.fp, r.confusion.tn, r.confusion.fn);
    out += buf;
    aucs.push_back(r.auc_roc);
    bas.push_back(r.balanced_accuracy);
  }
  const auto auc = mean_std(aucs);
  const auto ba = mean_std(bas);
  std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f,,,,\nstd,%.6f,%.6f,,,,\n", auc.mean, ba.mean, auc.std, ba.std);
  out += buf;
  return out;
}

// ---------------------------------------------------------------------------
// Clustering agreement

/// Fraction of points whose cluster's majority reference label matches theirs.
inline double majority_purity(std::span<const std::size_t> clusters, std::span<const std::size_t> reference) {
  if (clusters.size() != reference.size() || clusters.empty()) throw InputError("purity needs equal, non-empty labelings");
  std::map<std::size_t, std::map<std::size_t, std::size_t>> table;
  for (std::size_t i = 0; i < clusters.size(); ++i) ++table[clusters[i]][reference[i]];
  std::size_t agree = 0;
  for (const auto& [cluster, counts] : table) {
    std::size_t best = 0;
    for (const auto& [label, n] : counts) best = std::max(best, n);
    agree += best;
  }
  return static_cast<double>(agree) / static_cast<double>(clusters.size());
}

/// Adjusted Rand index; 0 is chance-level agreement, 1 identical partitions.
inline double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size() || a.empty()) throw InputError("ARI needs equal, non-empty labelings");
  auto choose2 = [](double n) { return n * (n - 1.0) / 2.0; };
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> joint;
  std::map<std::size_t, std::size_t> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++joint[{a[i], b[i]}];
    ++rows[a[i]];
    ++cols[b[i]];
  }
  double index = 0.0, row_sum = 0.0, col_sum = 0.0;
  for (const auto& [key, n] : joint) index += choose2(static_cast<double>(n));
  for (const auto& [key, n] : rows) row_sum += choose2(static_cast<double>(n));
  for (const auto& [key, n] : cols) col_sum += choose2(static_cast<double>(n));
  const double expected = row_sum * col_sum / choose2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (row_sum + col_sum);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Synthetic corpora

struct SyntheticGenerator {
  Hmm model;
  int label = 0;
  double weight = 1.0;
};

struct SyntheticSpec {
  std::vector<SyntheticGenerator> generators;
  std::size_t num_sequences = 1000;
  std::size_t min_length = 20;
  std::size_t max_length = 40;
  /// Negative-to-positive count ratio; ignored when only one class has generators.
  double imbalance_ratio = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (generators.empty()) throw InputError("synthetic spec needs at least one generator");
    if (num_sequences == 0) throw InputError("num_sequences must be >= 1");
    if (min_length == 0 || min_length > max_length) throw InputError("need 1 <= min_length <= max_length");
    if (!(imbalance_ratio > 0.0)) throw InputError("imbalance_ratio must be positive");
    const auto& first = generators.front().model;
    for (const auto& g : generators) {
      if (!(g.weight > 0.0)) throw InputError("generator weights must be positive");
      if (g.label != 0 && g.label != 1) throw InputError("generator labels must be 0 or 1");
      if (g.model.kind() != first.kind() || g.model.emission_width() != first.emission_width()) {
        throw InputError("generators differ in emission kind or width");
      }
    }
  }
};

struct SyntheticSequence {
  ActionSequence sequence;
  int label = 0;
  std::size_t generator = 0;
};

/// Positive count for a corpus of `total` with negative:positive = ratio.
inline std::size_t positive_count(std::size_t total, double imbalance_ratio) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(total) / (1.0 + imbalance_ratio)));
}

/// Labels are assigned in exact proportion, shuffled, then each sequence is
/// drawn from a weight-chosen generator of its class with a uniform length.
inline std::vector<SyntheticSequence> generate_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::size_t> by_class[2];
  std::vector<double> weights_by_class[2];
  for (std::size_t g = 0; g < spec.generators.size(); ++g) {
    const int c = spec.generators[g].label;
    by_class[c].push_back(g);
    weights_by_class[c].push_back(spec.generators[g].weight);
  }

  std::size_t n_pos = 0;
  if (by_class[0].empty()) {
    n_pos = spec.num_sequences;
  } else if (!by_class[1].empty()) {
    n_pos = positive_count(spec.num_sequences, spec.imbalance_ratio);
  }
  std::vector<int> labels(spec.num_sequences, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);

  Rng rng(spec.seed);
  rng.shuffle(labels);
  std::vector<SyntheticSequence> out;
  out.reserve(spec.num_sequences);
  for (int label : labels) {
    const std::size_t g = by_class[label][rng.categorical(weights_by_class[label])];
    const std::size_t length = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
    out.push_back(SyntheticSequence{sample(spec.generators[g].model, length, rng), label, g});
  }
  return out;
}

/// Deterministic stratified split into consecutive fractions (the last part
/// takes the remainder). Returns index lists.
inline std::vector<std::vector<std::size_t>> stratified_split(std::span<const int> labels,
                                                              std::span<const double> fractions, std::uint64_t seed) {
  if (fractions.empty()) throw InputError("split needs at least one fraction");
  std::vector<std::vector<std::size_t>> parts(fractions.size() + 1);
  Rng rng(seed);
  for (int c : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) idx.push_back(i);
    }
    rng.shuffle(idx);
    std::size_t begin = 0;
    for (std::size_t p = 0; p < fractions.size(); ++p) {
      const auto take = std::min(idx.size() - begin, static_cast<std::size_t>(std::llround(fractions[p] * static_cast<double>(idx.size()))));
      parts[p].insert(parts[p].end(), idx.begin() + static_cast<std::ptrdiff_t>(begin),
                      idx.begin() + static_cast<std::ptrdiff_t>(begin + take));
      begin += take;
    }
    parts.back().insert(parts.back().end(), idx.begin() + static_cast<std::ptrdiff_t>(begin), idx.end());
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

}  // namespace hmme
