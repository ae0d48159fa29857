#pragma once

// Hidden Markov model types, emission densities and the log-space forward
// recursion.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hmme/error.hpp"
#include "hmme/numeric.hpp"
#include "hmme/sequence.hpp"

namespace hmme {

inline constexpr double kDefaultProbFloor = 1e-10;
inline constexpr double kDefaultVarianceFloor = 1e-6;
inline constexpr double kStochasticTolerance = 1e-9;

/// Row-stochastic matrix num_states x alphabet_size, row-major.
struct CategoricalEmissions {
  std::size_t alphabet_size = 0;
  std::vector<double> probs;

  friend bool operator==(const CategoricalEmissions&, const CategoricalEmissions&) = default;
};

/// Per-state means and variances, each num_states x num_features, row-major.
struct DiagGaussianEmissions {
  std::size_t num_features = 0;
  std::vector<double> means;
  std::vector<double> variances;

  friend bool operator==(const DiagGaussianEmissions&, const DiagGaussianEmissions&) = default;
};

using Emissions = std::variant<CategoricalEmissions, DiagGaussianEmissions>;

namespace detail {

inline void check_distribution(std::span<const double> row, const std::string& what) {
  double sum = 0.0;
  for (double p : row) {
    if (!std::isfinite(p) || p < 0.0) throw InputError(what + " has a negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kStochasticTolerance) {
    throw InputError(what + " sums to " + std::to_string(sum) + ", expected 1");
  }
}

}  // namespace detail

/// Raises entries below `floor` to `floor` and rescales the rest so the row
/// still sums to one. Rows already at or above the floor are left untouched.
inline void floor_and_normalize(std::span<double> row, double floor) {
  const std::size_t n = row.size();
  if (n == 0) return;
  if (floor * static_cast<double>(n) >= 1.0) {
    throw InputError("probability floor too large for a row of size " + std::to_string(n));
  }
  bool needs_floor = false;
  for (double p : row) needs_floor |= (p < floor);
  if (!needs_floor) return;

  std::vector<bool> pinned(n, false);
  for (;;) {
    std::size_t pinned_count = 0;
    double free_mass = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (row[k] < floor) pinned[k] = true;
      if (pinned[k]) {
        ++pinned_count;
      } else {
        free_mass += row[k];
      }
    }
    const double target = 1.0 - floor * static_cast<double>(pinned_count);
    bool changed = false;
    for (std::size_t k = 0; k < n; ++k) {
      if (pinned[k]) {
        row[k] = floor;
      } else {
        row[k] *= target / free_mass;
        changed |= (row[k] < floor);
      }
    }
    if (!changed) break;
  }
}

/// One hidden Markov model. Immutable after construction; safe to share
/// across threads for evaluation.
class Hmm {
 public:
  /// Validates shapes and stochasticity (rows within 1e-9 of one), then
  /// applies the floors. Throws InputError on any violation.
  Hmm(std::vector<double> initial, std::vector<double> transitions, Emissions emissions,
      std::uint64_t seed = 0, double prob_floor = kDefaultProbFloor,
      double variance_floor = kDefaultVarianceFloor)
      : initial_(std::move(initial)),
        transitions_(std::move(transitions)),
        emissions_(std::move(emissions)),
        seed_(seed),
        prob_floor_(prob_floor),
        variance_floor_(variance_floor) {
    validate_and_floor();
    build_log_tables();
  }

  std::size_t num_states() const noexcept { return initial_.size(); }
  ObservationKind kind() const noexcept {
    return std::holds_alternative<CategoricalEmissions>(emissions_) ? ObservationKind::discrete
                                                                    : ObservationKind::continuous;
  }
  bool is_categorical() const noexcept { return kind() == ObservationKind::discrete; }

  /// Alphabet size for categorical models, feature count for Gaussian ones.
  std::size_t emission_width() const noexcept {
    if (const auto* c = std::get_if<CategoricalEmissions>(&emissions_)) return c->alphabet_size;
    return std::get<DiagGaussianEmissions>(emissions_).num_features;
  }

  std::span<const double> initial() const noexcept { return initial_; }
  std::span<const double> transitions() const noexcept { return transitions_; }
  double transition(std::size_t from, std::size_t to) const {
    return transitions_[from * num_states() + to];
  }
  const Emissions& emissions() const noexcept { return emissions_; }
  const CategoricalEmissions& categorical() const { return std::get<CategoricalEmissions>(emissions_); }
  const DiagGaussianEmissions& gaussian() const { return std::get<DiagGaussianEmissions>(emissions_); }

  std::uint64_t seed() const noexcept { return seed_; }
  double prob_floor() const noexcept { return prob_floor_; }
  double variance_floor() const noexcept { return variance_floor_; }

  /// Learned parameter count as states + states^2 + states * width, the
  /// convention used when reporting ensemble size (3 states, 4 features -> 24).
  std::size_t parameter_count() const noexcept {
    const std::size_t s = num_states();
    return s + s * s + s * emission_width();
  }

  double log_initial(std::size_t state) const { return log_initial_[state]; }
  double log_transition(std::size_t from, std::size_t to) const {
    return log_transitions_[from * num_states() + to];
  }

  /// Log-probability of `token` in `state`.
  double log_emission(std::size_t state, Token token) const {
    const auto& cat = categorical();
    if (state >= num_states()) throw InputError("state index out of range");
    if (token >= cat.alphabet_size) {
      throw InputError("token " + std::to_string(token) + " outside alphabet of size " +
                       std::to_string(cat.alphabet_size));
    }
    return log_emissions_[state * cat.alphabet_size + token];
  }

  /// Diagonal-Gaussian log-density of `obs` in `state`.
  double log_emission(std::size_t state, std::span<const double> obs) const {
    const auto& g = gaussian();
    if (state >= num_states()) throw InputError("state index out of range");
    if (obs.size() != g.num_features) {
      throw InputError("observation dimension " + std::to_string(obs.size()) +
                       " does not match model dimension " + std::to_string(g.num_features));
    }
    const std::size_t d = g.num_features;
    double logp = gaussian_log_norm_[state];
    for (std::size_t f = 0; f < d; ++f) {
      const double diff = obs[f] - g.means[state * d + f];
      logp -= 0.5 * diff * diff / g.variances[state * d + f];
    }
    return logp;
  }

  /// Throws InputError unless `seq` is non-empty and matches this model's
  /// emission kind, dimension and alphabet.
  void check_compatible(const ActionSequence& seq) const {
    if (seq.empty()) throw InputError("sequence is empty");
    if (seq.kind() != kind()) {
      throw InputError(std::string("sequence kind ") + to_string(seq.kind()) +
                       " does not match model kind " + to_string(kind()));
    }
    if (is_categorical()) {
      if (seq.max_token() >= emission_width()) {
        throw InputError("token " + std::to_string(seq.max_token()) + " outside alphabet of size " +
                         std::to_string(emission_width()));
      }
    } else if (seq.dimension() != emission_width()) {
      throw InputError("sequence dimension " + std::to_string(seq.dimension()) +
                       " does not match model dimension " + std::to_string(emission_width()));
    }
  }

  friend bool operator==(const Hmm& a, const Hmm& b) {
    return a.initial_ == b.initial_ && a.transitions_ == b.transitions_ &&
           a.emissions_ == b.emissions_ && a.seed_ == b.seed_ && a.prob_floor_ == b.prob_floor_ &&
           a.variance_floor_ == b.variance_floor_;
  }

 private:
  void validate_and_floor() {
    const std::size_t s = initial_.size();
    if (s == 0) throw InputError("model needs at least one state");
    if (!(prob_floor_ > 0.0) || !(variance_floor_ > 0.0)) throw InputError("floors must be positive");
    if (transitions_.size() != s * s) throw InputError("transition matrix is not num_states x num_states");

    detail::check_distribution(initial_, "initial distribution");
    for (std::size_t i = 0; i < s; ++i) {
      detail::check_distribution(std::span<const double>(transitions_).subspan(i * s, s),
                                 "transition row " + std::to_string(i));
    }
    floor_and_normalize(initial_, prob_floor_);
    for (std::size_t i = 0; i < s; ++i) {
      floor_and_normalize(std::span<double>(transitions_).subspan(i * s, s), prob_floor_);
    }

    if (auto* cat = std::get_if<CategoricalEmissions>(&emissions_)) {
      const std::size_t k = cat->alphabet_size;
      if (k == 0) throw InputError("alphabet_size must be positive");
      if (cat->probs.size() != s * k) throw InputError("emission matrix is not num_states x alphabet_size");
      for (std::size_t i = 0; i < s; ++i) {
        detail::check_distribution(std::span<const double>(cat->probs).subspan(i * k, k),
                                   "emission row " + std::to_string(i));
        floor_and_normalize(std::span<double>(cat->probs).subspan(i * k, k), prob_floor_);
      }
    } else {
      auto& g = std::get<DiagGaussianEmissions>(emissions_);
      const std::size_t d = g.num_features;
      if (d == 0) throw InputError("num_features must be positive");
      if (g.means.size() != s * d || g.variances.size() != s * d) {
        throw InputError("Gaussian parameters are not num_states x num_features");
      }
      for (double m : g.means) {
        if (!std::isfinite(m)) throw InputError("Gaussian mean is not finite");
      }
      for (double& v : g.variances) {
        if (!std::isfinite(v) || v <= 0.0) throw InputError("Gaussian variance must be positive and finite");
        if (v < variance_floor_) v = variance_floor_;
      }
    }
  }

  void build_log_tables() {
    const std::size_t s = num_states();
    log_initial_.resize(s);
    for (std::size_t i = 0; i < s; ++i) log_initial_[i] = std::log(initial_[i]);
    log_transitions_.resize(s * s);
    for (std::size_t i = 0; i < s * s; ++i) log_transitions_[i] = std::log(transitions_[i]);
    if (const auto* cat = std::get_if<CategoricalEmissions>(&emissions_)) {
      log_emissions_.resize(cat->probs.size());
      for (std::size_t i = 0; i < cat->probs.size(); ++i) log_emissions_[i] = std::log(cat->probs[i]);
    } else {
      const auto& g = std::get<DiagGaussianEmissions>(emissions_);
      gaussian_log_norm_.assign(s, 0.0);
      for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t f = 0; f < g.num_features; ++f) {
          gaussian_log_norm_[i] -= 0.5 * (kLogTwoPi + std::log(g.variances[i * g.num_features + f]));
        }
      }
    }
  }

  std::vector<double> initial_;
  std::vector<double> transitions_;
  Emissions emissions_;
  std::uint64_t seed_;
  double prob_floor_;
  double variance_floor_;

  std::vector<double> log_initial_;
  std::vector<double> log_transitions_;
  std::vector<double> log_emissions_;
  std::vector<double> gaussian_log_norm_;
};

/// Per-state log emission density of observation t of `seq`.
inline double log_emission_density(const Hmm& model, std::size_t state, const ActionSequence& seq,
                                   std::size_t t) {
  return seq.is_discrete() ? model.log_emission(state, seq.token(t))
                           : model.log_emission(state, seq.vector(t));
}

inline double log_emission_density(const Hmm& model, std::size_t state, Token token) {
  return model.log_emission(state, token);
}

inline double log_emission_density(const Hmm& model, std::size_t state, std::span<const double> obs) {
  return model.log_emission(state, obs);
}

/// Natural-log likelihood log p(seq | model) by the forward recursion carried
/// out entirely in log space.
inline double forward_log_likelihood(const Hmm& model, const ActionSequence& seq) {
  model.check_compatible(seq);
  const std::size_t s = model.num_states();
  std::vector<double> alpha(s), next(s), terms(s);
  for (std::size_t i = 0; i < s; ++i) {
    alpha[i] = model.log_initial(i) + log_emission_density(model, i, seq, 0);
  }
  for (std::size_t t = 1; t < seq.size(); ++t) {
    for (std::size_t j = 0; j < s; ++j) {
      for (std::size_t i = 0; i < s; ++i) terms[i] = alpha[i] + model.log_transition(i, j);
      next[j] = log_sum_exp(terms) + log_emission_density(model, j, seq, t);
    }
    alpha.swap(next);
  }
  return log_sum_exp(alpha);
}

}  // namespace hmme
