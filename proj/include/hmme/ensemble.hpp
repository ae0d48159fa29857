#pragma once

// Per-class HMM ensembles trained on random subsets, the pairwise composite
// score, and likelihood feature vectors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include "hmme/baum_welch.hpp"
#include "hmme/error.hpp"
#include "hmme/hmm.hpp"
#include "hmme/parallel.hpp"
#include "hmme/random.hpp"
#include "hmme/sequence.hpp"

namespace hmme {

enum class ModelClass : std::uint64_t { positive = 1, negative = 2, unlabeled = 3 };

inline const char* class_tag(ModelClass c) {
  switch (c) {
    case ModelClass::positive: return "pos";
    case ModelClass::negative: return "neg";
    case ModelClass::unlabeled: return "u";
  }
  return "?";
}

struct EnsembleConfig {
  std::size_t n_pos = 250;
  std::size_t n_neg = 250;
  double subset_fraction = 0.01;
  TrainConfig base{};
  std::uint64_t master_seed = 0;

  void validate() const {
    if (n_pos == 0 || n_neg == 0) throw InputError("ensemble sizes must be >= 1");
    if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) {
      throw InputError("subset_fraction must lie in (0, 1]");
    }
    base.validate();
  }
};

/// Training outcome of one base learner.
struct MemberRecord {
  std::vector<std::size_t> subset;  // indices into the class corpus
  std::uint64_t seed = 0;           // seed handed to Baum-Welch
  FitDiagnostics diagnostics;
};

struct Ensemble {
  EnsembleConfig config;
  std::vector<Hmm> pos_models;
  std::vector<Hmm> neg_models;
  std::vector<MemberRecord> pos_members;
  std::vector<MemberRecord> neg_members;

  std::size_t max_score() const noexcept { return pos_models.size() * neg_models.size(); }

  /// Positive models followed by negative models, the feature-vector order.
  std::vector<const Hmm*> ordered_models() const {
    std::vector<const Hmm*> out;
    out.reserve(pos_models.size() + neg_models.size());
    for (const auto& m : pos_models) out.push_back(&m);
    for (const auto& m : neg_models) out.push_back(&m);
    return out;
  }
};

struct CompositeScore {
  std::size_t value = 0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;

  std::size_t max() const noexcept { return n_pos * n_neg; }
  friend bool operator==(const CompositeScore&, const CompositeScore&) = default;
};

/// Subset size max(1, round(s * corpus_size)), rounding halves away from zero.
inline std::size_t subset_size(double subset_fraction, std::size_t corpus_size) {
  const auto rounded = static_cast<std::size_t>(std::llround(subset_fraction * static_cast<double>(corpus_size)));
  return std::clamp<std::size_t>(rounded, 1, corpus_size);
}

/// Probability that a given training sequence lands in none of n subsets.
inline double expected_unsampled_fraction(double subset_fraction, std::size_t n) {
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) throw InputError("s must lie in (0, 1]");
  if (n == 0) throw InputError("n must be >= 1");
  return std::pow(1.0 - subset_fraction, static_cast<double>(n));
}

/// Seed used to draw member `index`'s subset.
inline std::uint64_t member_subset_seed(std::uint64_t master_seed, ModelClass c, std::size_t index) {
  return derive_seed(master_seed, static_cast<std::uint64_t>(c), index);
}

/// Seed handed to Baum-Welch for member `index`.
inline std::uint64_t member_train_seed(std::uint64_t master_seed, ModelClass c, std::size_t index) {
  return derive_seed(member_subset_seed(master_seed, c, index), 0x7472616eULL, 0);
}

namespace detail {

inline std::size_t shared_alphabet(std::span<const ActionSequence> a, std::span<const ActionSequence> b) {
  std::size_t alphabet = 0;
  for (const auto& seq : a) alphabet = std::max<std::size_t>(alphabet, seq.max_token() + 1);
  for (const auto& seq : b) alphabet = std::max<std::size_t>(alphabet, seq.max_token() + 1);
  return alphabet;
}

inline void check_same_shape(std::span<const ActionSequence> a, std::span<const ActionSequence> b) {
  const auto& x = a.front();
  const auto& y = b.front();
  if (x.kind() != y.kind() || x.dimension() != y.dimension()) {
    throw InputError("positive and negative corpora differ in kind or dimension");
  }
}

/// Trains `count` members of one class. Slot i is written only by task i.
inline void train_members(std::span<const ActionSequence> corpus, std::size_t count, ModelClass c,
                          double subset_fraction, const TrainConfig& base, std::uint64_t master_seed,
                          std::size_t workers, std::vector<std::optional<Hmm>>& models,
                          std::vector<MemberRecord>& records) {
  const std::size_t size = subset_size(subset_fraction, corpus.size());
  models.assign(count, std::nullopt);
  records.assign(count, MemberRecord{});
  parallel_for(count, workers, [&](std::size_t i) {
    Rng rng(member_subset_seed(master_seed, c, i));
    MemberRecord record;
    record.subset = rng.sample_without_replacement(corpus.size(), size);
    record.seed = member_train_seed(master_seed, c, i);
    TrainConfig config = base;
    config.seed = record.seed;
    try {
      auto fit = baum_welch_fit(corpus, record.subset, config);
      record.diagnostics = std::move(fit.diagnostics);
      models[i].emplace(std::move(fit.model));
    } catch (const DegenerateInputError& e) {
      throw EnsembleMemberError(class_tag(c), i, e.what());
    }
    records[i] = std::move(record);
  });
}

inline std::vector<Hmm> unwrap(std::vector<std::optional<Hmm>>&& models) {
  std::vector<Hmm> out;
  out.reserve(models.size());
  for (auto& m : models) out.push_back(std::move(*m));
  return out;
}

}  // namespace detail

/// Trains n_pos models on random subsets of `pos_corpus` and n_neg on subsets
/// of `neg_corpus`. Every subset and seed derives from config.master_seed, so
/// the result is identical for any worker count.
inline Ensemble train_ensemble(std::span<const ActionSequence> pos_corpus,
                               std::span<const ActionSequence> neg_corpus, const EnsembleConfig& config,
                               std::size_t workers = default_workers()) {
  config.validate();
  require_uniform(pos_corpus, "positive corpus");
  require_uniform(neg_corpus, "negative corpus");
  detail::check_same_shape(pos_corpus, neg_corpus);

  TrainConfig base = config.base;
  if (pos_corpus.front().is_discrete() && base.alphabet_size == 0) {
    base.alphabet_size = detail::shared_alphabet(pos_corpus, neg_corpus);
  }

  Ensemble ens;
  ens.config = config;
  ens.config.base = base;
  std::vector<std::optional<Hmm>> pos, neg;
  detail::train_members(pos_corpus, config.n_pos, ModelClass::positive, config.subset_fraction, base,
                        config.master_seed, workers, pos, ens.pos_members);
  detail::train_members(neg_corpus, config.n_neg, ModelClass::negative, config.subset_fraction, base,
                        config.master_seed, workers, neg, ens.neg_members);
  ens.pos_models = detail::unwrap(std::move(pos));
  ens.neg_models = detail::unwrap(std::move(neg));
  return ens;
}

struct UnsupervisedEnsemble {
  std::vector<Hmm> models;
  std::vector<MemberRecord> members;
};

/// Trains n models on random subsets of one unlabeled pool.
inline UnsupervisedEnsemble train_unsupervised_ensemble(std::span<const ActionSequence> corpus, std::size_t n,
                                                        double subset_fraction, TrainConfig base,
                                                        std::uint64_t master_seed,
                                                        std::size_t workers = default_workers()) {
  if (n == 0) throw InputError("ensemble size must be >= 1");
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) throw InputError("subset_fraction must lie in (0, 1]");
  base.validate();
  require_uniform(corpus, "corpus");
  if (corpus.front().is_discrete() && base.alphabet_size == 0) {
    base.alphabet_size = detail::shared_alphabet(corpus, {});
  }
  UnsupervisedEnsemble out;
  std::vector<std::optional<Hmm>> models;
  detail::train_members(corpus, n, ModelClass::unlabeled, subset_fraction, base, master_seed, workers, models,
                        out.members);
  out.models = detail::unwrap(std::move(models));
  return out;
}

/// Throws InputError unless every ensemble member accepts `seq`.
inline void check_compatible(const Ensemble& ens, const ActionSequence& seq) {
  for (const auto& m : ens.pos_models) m.check_compatible(seq);
  for (const auto& m : ens.neg_models) m.check_compatible(seq);
}

/// Counts (i, j) pairs whose positive-model log-likelihood strictly exceeds
/// the negative-model log-likelihood, given precomputed likelihoods.
inline std::size_t count_pairwise_wins(std::span<const double> pos_ll, std::span<const double> neg_ll) {
  std::vector<double> sorted(neg_ll.begin(), neg_ll.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t wins = 0;
  for (double p : pos_ll) {
    wins += static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), p) - sorted.begin());
  }
  return wins;
}

/// Likelihoods of `seq` under every model, in model order.
inline std::vector<double> log_likelihoods(std::span<const Hmm> models, const ActionSequence& seq) {
  std::vector<double> out;
  out.reserve(models.size());
  for (const auto& m : models) out.push_back(forward_log_likelihood(m, seq));
  return out;
}

inline CompositeScore composite_score_from(std::span<const double> pos_ll, std::span<const double> neg_ll) {
  return CompositeScore{count_pairwise_wins(pos_ll, neg_ll), pos_ll.size(), neg_ll.size()};
}

inline CompositeScore composite_score(const Ensemble& ens, const ActionSequence& seq) {
  const auto pos_ll = log_likelihoods(ens.pos_models, seq);
  const auto neg_ll = log_likelihoods(ens.neg_models, seq);
  return composite_score_from(pos_ll, neg_ll);
}

/// 1 iff log p(seq | pos) > log p(seq | neg); ties go to 0.
inline int classify_singleton(const Hmm& pos, const Hmm& neg, const ActionSequence& seq) {
  return forward_log_likelihood(pos, seq) > forward_log_likelihood(neg, seq) ? 1 : 0;
}

/// 1 iff score >= threshold. Valid thresholds are 0 ..= max + 1.
inline int classify_threshold(const CompositeScore& score, std::size_t threshold) {
  if (threshold > score.max() + 1) {
    throw InputError("threshold " + std::to_string(threshold) + " exceeds N*M + 1 = " +
                     std::to_string(score.max() + 1));
  }
  return score.value >= threshold ? 1 : 0;
}

/// What each feature entry holds before L2 normalization.
enum class FeatureDomain {
  log_likelihood,             // log p(O | model)
  per_observation_log,        // log p(O | model) / T
  likelihood,                 // p(O | model), computed relative to the largest entry
};

struct LikelihoodFeatures {
  std::vector<double> values;
};

/// Scales a raw vector to unit Euclidean norm. Throws std::logic_error on an
/// all-zero vector, which the probability floors rule out.
inline LikelihoodFeatures unit_normalize(std::vector<double> raw) {
  double sq = 0.0;
  for (double v : raw) sq += v * v;
  if (!(sq > 0.0) || !std::isfinite(sq)) throw std::logic_error("feature vector has zero or non-finite norm");
  const double norm = std::sqrt(sq);
  for (double& v : raw) v /= norm;
  return LikelihoodFeatures{std::move(raw)};
}

inline LikelihoodFeatures features_from_log_likelihoods(std::vector<double> ll, std::size_t length,
                                                        FeatureDomain domain = FeatureDomain::log_likelihood) {
  switch (domain) {
    case FeatureDomain::log_likelihood:
      break;
    case FeatureDomain::per_observation_log:
      for (double& v : ll) v /= static_cast<double>(length);
      break;
    case FeatureDomain::likelihood: {
      // Normalization is scale invariant, so exp(ll - max) gives the same unit
      // vector as the raw likelihoods without underflow.
      const double peak = *std::max_element(ll.begin(), ll.end());
      for (double& v : ll) v = std::exp(v - peak);
      break;
    }
  }
  return unit_normalize(std::move(ll));
}

/// Unit-norm vector of per-model likelihood scores of `seq`, in model order.
inline LikelihoodFeatures feature_vector(std::span<const Hmm* const> models, const ActionSequence& seq,
                                         FeatureDomain domain = FeatureDomain::log_likelihood) {
  if (models.empty()) throw InputError("feature_vector needs at least one model");
  std::vector<double> ll;
  ll.reserve(models.size());
  for (const Hmm* m : models) ll.push_back(forward_log_likelihood(*m, seq));
  return features_from_log_likelihoods(std::move(ll), seq.size(), domain);
}

inline LikelihoodFeatures feature_vector(std::span<const Hmm> models, const ActionSequence& seq,
                                         FeatureDomain domain = FeatureDomain::log_likelihood) {
  std::vector<const Hmm*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  return feature_vector(std::span<const Hmm* const>(ptrs), seq, domain);
}

inline LikelihoodFeatures feature_vector(const Ensemble& ens, const ActionSequence& seq,
                                         FeatureDomain domain = FeatureDomain::log_likelihood) {
  const auto ptrs = ens.ordered_models();
  return feature_vector(std::span<const Hmm* const>(ptrs), seq, domain);
}

struct ScoredSequence {
  CompositeScore score;
  std::vector<double> features;  // empty unless requested
};

/// Scores a batch; each sequence's N+M likelihoods are computed once and
/// shared between the composite score and the optional features.
inline std::vector<ScoredSequence> score_batch(const Ensemble& ens, std::span<const ActionSequence> seqs,
                                               bool with_features, std::size_t workers = default_workers(),
                                               FeatureDomain domain = FeatureDomain::log_likelihood) {
  std::vector<ScoredSequence> out(seqs.size());
  parallel_for(seqs.size(), workers, [&](std::size_t k) {
    const auto& seq = seqs[k];
    try {
      check_compatible(ens, seq);
    } catch (const InputError& e) {
      throw InputError("sequence " + std::to_string(k) + ": " + e.what());
    }
    auto pos_ll = log_likelihoods(ens.pos_models, seq);
    auto neg_ll = log_likelihoods(ens.neg_models, seq);
    out[k].score = composite_score_from(pos_ll, neg_ll);
    if (with_features) {
      pos_ll.insert(pos_ll.end(), neg_ll.begin(), neg_ll.end());
      out[k].features = features_from_log_likelihoods(std::move(pos_ll), seq.size(), domain).values;
    }
  });
  return out;
}

/// Feature vectors for a batch under an arbitrary ordered model list.
inline std::vector<LikelihoodFeatures> feature_batch(std::span<const Hmm> models,
                                                     std::span<const ActionSequence> seqs,
                                                     std::size_t workers = default_workers(),
                                                     FeatureDomain domain = FeatureDomain::log_likelihood) {
  std::vector<LikelihoodFeatures> out(seqs.size());
  parallel_for(seqs.size(), workers, [&](std::size_t k) {
    try {
      for (const auto& m : models) m.check_compatible(seqs[k]);
    } catch (const InputError& e) {
      throw InputError("sequence " + std::to_string(k) + ": " + e.what());
    }
    out[k] = feature_vector(models, seqs[k], domain);
  });
  return out;
}

}  // namespace hmme
