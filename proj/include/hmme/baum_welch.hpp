#pragma once

// Multi-sequence Baum-Welch training.
//
// The E-step runs a scaled forward-backward pass per sequence: emission
// likelihoods at each step are divided by their per-step maximum and the
// forward variables are renormalized, so the log-likelihood is recovered as
// the sum of log scale factors. Expected sufficient statistics are pooled
// over the whole corpus before each M-step.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hmme/error.hpp"
#include "hmme/hmm.hpp"
#include "hmme/random.hpp"
#include "hmme/sequence.hpp"

namespace hmme {

struct TrainConfig {
  std::size_t num_states = 3;
  std::size_t max_iterations = 100;
  /// Stop once mean per-observation log-likelihood improves by less than this.
  double convergence_tolerance = 1e-4;
  std::uint64_t seed = 0;
  double prob_floor = kDefaultProbFloor;
  double variance_floor = kDefaultVarianceFloor;
  /// Categorical alphabet size; 0 infers max token + 1 from the corpus.
  std::size_t alphabet_size = 0;

  void validate() const {
    if (num_states == 0) throw InputError("num_states must be >= 1");
    if (max_iterations == 0) throw InputError("max_iterations must be >= 1");
    if (!(convergence_tolerance > 0.0)) throw InputError("convergence_tolerance must be > 0");
    if (!(prob_floor > 0.0) || !(variance_floor > 0.0)) throw InputError("floors must be > 0");
  }
};

struct FitDiagnostics {
  std::size_t iterations = 0;
  double final_mean_log_likelihood = 0.0;
  bool converged = false;
  /// Mean per-observation log-likelihood of every evaluated model, in order.
  std::vector<double> trace;
};

struct FitResult {
  Hmm model;
  FitDiagnostics diagnostics;
};

/// Called after each M-step with the iteration number (1-based) and new model.
using FitObserver = std::function<void(std::size_t, const Hmm&)>;

namespace detail {

using CorpusView = std::vector<const ActionSequence*>;

inline CorpusView view_of(std::span<const ActionSequence> corpus) {
  CorpusView view;
  view.reserve(corpus.size());
  for (const auto& seq : corpus) view.push_back(&seq);
  return view;
}

inline std::size_t total_observations(const CorpusView& corpus) {
  std::size_t n = 0;
  for (const auto* seq : corpus) n += seq->size();
  return n;
}

inline ObservationKind check_corpus(const CorpusView& corpus) {
  if (corpus.empty()) throw InputError("training corpus is empty");
  const auto* first = corpus.front();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto* seq = corpus[i];
    if (seq->empty()) throw InputError("training sequence " + std::to_string(i) + " is empty");
    if (seq->kind() != first->kind() || seq->dimension() != first->dimension()) {
      throw InputError("training sequence " + std::to_string(i) +
                       " differs in kind or dimension from sequence 0");
    }
  }
  return first->kind();
}

inline Hmm initial_model(const CorpusView& corpus, const TrainConfig& config) {
  const std::size_t s = config.num_states;
  Rng rng(config.seed);

  std::vector<double> initial = rng.flat_dirichlet(s);
  std::vector<double> transitions;
  transitions.reserve(s * s);
  for (std::size_t i = 0; i < s; ++i) {
    const auto row = rng.flat_dirichlet(s);
    transitions.insert(transitions.end(), row.begin(), row.end());
  }

  if (corpus.front()->is_discrete()) {
    std::size_t alphabet = config.alphabet_size;
    if (alphabet == 0) {
      for (const auto* seq : corpus) alphabet = std::max<std::size_t>(alphabet, seq->max_token() + 1);
    }
    CategoricalEmissions cat{alphabet, {}};
    cat.probs.reserve(s * alphabet);
    for (std::size_t i = 0; i < s; ++i) {
      const auto row = rng.flat_dirichlet(alphabet);
      cat.probs.insert(cat.probs.end(), row.begin(), row.end());
    }
    return Hmm(std::move(initial), std::move(transitions), std::move(cat), config.seed,
               config.prob_floor, config.variance_floor);
  }

  const std::size_t d = corpus.front()->dimension();
  const std::size_t total = total_observations(corpus);
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (const auto* seq : corpus) {
    for (std::size_t t = 0; t < seq->size(); ++t) {
      const auto x = seq->vector(t);
      for (std::size_t f = 0; f < d; ++f) mean[f] += x[f];
    }
  }
  for (double& m : mean) m /= static_cast<double>(total);
  for (const auto* seq : corpus) {
    for (std::size_t t = 0; t < seq->size(); ++t) {
      const auto x = seq->vector(t);
      for (std::size_t f = 0; f < d; ++f) var[f] += (x[f] - mean[f]) * (x[f] - mean[f]);
    }
  }
  for (double& v : var) v = std::max(v / static_cast<double>(total), config.variance_floor);

  // Means start at distinct randomly chosen training observations.
  const auto picks = rng.sample_without_replacement(total, std::min(s, total));
  DiagGaussianEmissions g{d, {}, {}};
  g.means.reserve(s * d);
  g.variances.reserve(s * d);
  for (std::size_t i = 0; i < s; ++i) {
    std::size_t flat = picks[i % picks.size()];
    for (const auto* seq : corpus) {
      if (flat < seq->size()) {
        const auto x = seq->vector(flat);
        g.means.insert(g.means.end(), x.begin(), x.end());
        break;
      }
      flat -= seq->size();
    }
    g.variances.insert(g.variances.end(), var.begin(), var.end());
  }
  return Hmm(std::move(initial), std::move(transitions), std::move(g), config.seed, config.prob_floor,
             config.variance_floor);
}

/// Expected sufficient statistics pooled across sequences.
struct Accumulator {
  std::size_t states;
  std::size_t width;
  std::vector<double> initial;
  std::vector<double> transitions;
  std::vector<double> transition_occupancy;  // gamma summed over t < T
  std::vector<double> occupancy;             // gamma summed over all t
  std::vector<double> emission_sum;          // counts (categorical) or sum x (Gaussian)
  std::vector<double> emission_sq_sum;       // sum x^2 (Gaussian only)
  double log_likelihood = 0.0;
  std::size_t sequences = 0;
  std::size_t observations = 0;

  Accumulator(std::size_t s, std::size_t w)
      : states(s),
        width(w),
        initial(s, 0.0),
        transitions(s * s, 0.0),
        transition_occupancy(s, 0.0),
        occupancy(s, 0.0),
        emission_sum(s * w, 0.0),
        emission_sq_sum(s * w, 0.0) {}
};

inline void accumulate(const Hmm& model, const ActionSequence& seq, Accumulator& acc) {
  const std::size_t s = model.num_states();
  const std::size_t len = seq.size();

  std::vector<double> b(len * s);
  double log_likelihood = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    double peak = kNegInf;
    for (std::size_t i = 0; i < s; ++i) {
      b[t * s + i] = log_emission_density(model, i, seq, t);
      peak = std::max(peak, b[t * s + i]);
    }
    for (std::size_t i = 0; i < s; ++i) b[t * s + i] = std::exp(b[t * s + i] - peak);
    log_likelihood += peak;
  }

  const auto pi = model.initial();
  const auto a = model.transitions();
  std::vector<double> alpha(len * s), beta(len * s), scale(len);

  for (std::size_t t = 0; t < len; ++t) {
    double c = 0.0;
    for (std::size_t j = 0; j < s; ++j) {
      double v = 0.0;
      if (t == 0) {
        v = pi[j];
      } else {
        for (std::size_t i = 0; i < s; ++i) v += alpha[(t - 1) * s + i] * a[i * s + j];
      }
      v *= b[t * s + j];
      alpha[t * s + j] = v;
      c += v;
    }
    scale[t] = c;
    for (std::size_t j = 0; j < s; ++j) alpha[t * s + j] /= c;
    log_likelihood += std::log(c);
  }

  for (std::size_t i = 0; i < s; ++i) beta[(len - 1) * s + i] = 1.0;
  for (std::size_t t = len - 1; t-- > 0;) {
    for (std::size_t i = 0; i < s; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < s; ++j) v += a[i * s + j] * b[(t + 1) * s + j] * beta[(t + 1) * s + j];
      beta[t * s + i] = v / scale[t + 1];
    }
  }

  for (std::size_t t = 0; t < len; ++t) {
    double norm = 0.0;
    for (std::size_t i = 0; i < s; ++i) norm += alpha[t * s + i] * beta[t * s + i];
    for (std::size_t i = 0; i < s; ++i) {
      const double gamma = alpha[t * s + i] * beta[t * s + i] / norm;
      if (t == 0) acc.initial[i] += gamma;
      if (t + 1 < len) acc.transition_occupancy[i] += gamma;
      acc.occupancy[i] += gamma;
      if (seq.is_discrete()) {
        acc.emission_sum[i * acc.width + seq.token(t)] += gamma;
      } else {
        const auto x = seq.vector(t);
        for (std::size_t f = 0; f < acc.width; ++f) {
          acc.emission_sum[i * acc.width + f] += gamma * x[f];
          acc.emission_sq_sum[i * acc.width + f] += gamma * x[f] * x[f];
        }
      }
    }
    if (t + 1 < len) {
      for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
          acc.transitions[i * s + j] += alpha[t * s + i] * a[i * s + j] * b[(t + 1) * s + j] *
                                        beta[(t + 1) * s + j] / scale[t + 1];
        }
      }
    }
  }

  acc.log_likelihood += log_likelihood;
  acc.sequences += 1;
  acc.observations += len;
}

inline Accumulator expectation(const Hmm& model, const CorpusView& corpus) {
  Accumulator acc(model.num_states(), model.emission_width());
  for (const auto* seq : corpus) accumulate(model, *seq, acc);
  return acc;
}

inline Hmm maximization(const Hmm& previous, const Accumulator& acc) {
  const std::size_t s = acc.states;
  const std::size_t w = acc.width;
  constexpr double kMinOccupancy = 1e-300;

  std::vector<double> initial(s);
  for (std::size_t i = 0; i < s; ++i) initial[i] = acc.initial[i] / static_cast<double>(acc.sequences);

  std::vector<double> transitions(previous.transitions().begin(), previous.transitions().end());
  for (std::size_t i = 0; i < s; ++i) {
    if (acc.transition_occupancy[i] <= kMinOccupancy) continue;
    double row_sum = 0.0;
    for (std::size_t j = 0; j < s; ++j) row_sum += acc.transitions[i * s + j];
    for (std::size_t j = 0; j < s; ++j) transitions[i * s + j] = acc.transitions[i * s + j] / row_sum;
  }

  // Renormalize exactly before flooring; the accumulated sums agree with
  // their occupancies only up to rounding.
  auto normalize = [](std::span<double> row) {
    double sum = 0.0;
    for (double v : row) sum += v;
    for (double& v : row) v /= sum;
  };
  normalize(initial);
  floor_and_normalize(initial, previous.prob_floor());
  for (std::size_t i = 0; i < s; ++i) {
    auto row = std::span<double>(transitions).subspan(i * s, s);
    normalize(row);
    floor_and_normalize(row, previous.prob_floor());
  }

  if (previous.is_categorical()) {
    CategoricalEmissions cat = previous.categorical();
    for (std::size_t i = 0; i < s; ++i) {
      auto row = std::span<double>(cat.probs).subspan(i * w, w);
      if (acc.occupancy[i] > kMinOccupancy) {
        for (std::size_t k = 0; k < w; ++k) row[k] = acc.emission_sum[i * w + k];
        normalize(row);
      }
      floor_and_normalize(row, previous.prob_floor());
    }
    return Hmm(std::move(initial), std::move(transitions), std::move(cat), previous.seed(),
               previous.prob_floor(), previous.variance_floor());
  }

  DiagGaussianEmissions g = previous.gaussian();
  for (std::size_t i = 0; i < s; ++i) {
    if (acc.occupancy[i] <= kMinOccupancy) continue;
    for (std::size_t f = 0; f < w; ++f) {
      const double mean = acc.emission_sum[i * w + f] / acc.occupancy[i];
      const double second = acc.emission_sq_sum[i * w + f] / acc.occupancy[i];
      g.means[i * w + f] = mean;
      g.variances[i * w + f] = std::max(second - mean * mean, previous.variance_floor());
    }
  }
  return Hmm(std::move(initial), std::move(transitions), std::move(g), previous.seed(),
             previous.prob_floor(), previous.variance_floor());
}

inline FitResult fit(const CorpusView& corpus, const TrainConfig& config, const FitObserver& observer) {
  config.validate();
  check_corpus(corpus);
  const std::size_t total = total_observations(corpus);
  if (total < config.num_states) {
    throw DegenerateInputError("corpus has " + std::to_string(total) + " observations, fewer than " +
                               std::to_string(config.num_states) + " states");
  }

  Hmm model = initial_model(corpus, config);
  for (const auto* seq : corpus) model.check_compatible(*seq);
  FitDiagnostics diag;
  for (;;) {
    const Accumulator acc = expectation(model, corpus);
    const double mean_ll = acc.log_likelihood / static_cast<double>(acc.observations);
    diag.trace.push_back(mean_ll);
    diag.final_mean_log_likelihood = mean_ll;
    if (diag.trace.size() >= 2 && mean_ll - diag.trace[diag.trace.size() - 2] < config.convergence_tolerance) {
      diag.converged = true;
      break;
    }
    if (diag.iterations == config.max_iterations) break;
    model = maximization(model, acc);
    ++diag.iterations;
    if (observer) observer(diag.iterations, model);
  }
  return FitResult{std::move(model), std::move(diag)};
}

}  // namespace detail

/// Fits one HMM to `corpus` by Baum-Welch, starting from a seeded random
/// initialization. The returned model is the last one whose likelihood was
/// evaluated; its mean per-observation log-likelihood is the trace's last
/// entry.
inline FitResult baum_welch_fit(std::span<const ActionSequence> corpus, const TrainConfig& config,
                                const FitObserver& observer = {}) {
  return detail::fit(detail::view_of(corpus), config, observer);
}

/// Same as above over a subset given by indices into `corpus`.
inline FitResult baum_welch_fit(std::span<const ActionSequence> corpus, std::span<const std::size_t> subset,
                                const TrainConfig& config, const FitObserver& observer = {}) {
  detail::CorpusView view;
  view.reserve(subset.size());
  for (std::size_t idx : subset) {
    if (idx >= corpus.size()) throw InputError("subset index out of range");
    view.push_back(&corpus[idx]);
  }
  return detail::fit(view, config, observer);
}

/// Builds the seeded starting point Baum-Welch would use for `corpus`.
inline Hmm initial_model(std::span<const ActionSequence> corpus, const TrainConfig& config) {
  config.validate();
  const auto view = detail::view_of(corpus);
  detail::check_corpus(view);
  return detail::initial_model(view, config);
}

}  // namespace hmme
