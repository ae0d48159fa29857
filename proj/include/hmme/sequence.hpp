#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hmme/error.hpp"

namespace hmme {

enum class ObservationKind { discrete, continuous };

inline const char* to_string(ObservationKind kind) {
  return kind == ObservationKind::discrete ? "discrete" : "continuous";
}

using Token = std::uint32_t;

/// An ordered run of observations: either tokens from a finite alphabet or
/// fixed-dimension real vectors (stored row-major, one row per time step).
class ActionSequence {
 public:
  ActionSequence() = default;

  static ActionSequence discrete(std::vector<Token> tokens) {
    ActionSequence seq;
    seq.kind_ = ObservationKind::discrete;
    seq.tokens_ = std::move(tokens);
    return seq;
  }

  static ActionSequence continuous(std::size_t dimension, std::vector<double> values) {
    if (dimension == 0) throw InputError("continuous sequence needs dimension >= 1");
    if (values.size() % dimension != 0) {
      throw InputError("continuous sequence value count is not a multiple of its dimension");
    }
    ActionSequence seq;
    seq.kind_ = ObservationKind::continuous;
    seq.dimension_ = dimension;
    seq.values_ = std::move(values);
    return seq;
  }

  static ActionSequence continuous(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw InputError("continuous sequence from rows needs at least one row");
    const std::size_t dim = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * dim);
    for (const auto& row : rows) {
      if (row.size() != dim) throw InputError("continuous observations differ in dimension");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return continuous(dim, std::move(flat));
  }

  ObservationKind kind() const noexcept { return kind_; }
  bool is_discrete() const noexcept { return kind_ == ObservationKind::discrete; }

  std::size_t size() const noexcept {
    return is_discrete() ? tokens_.size() : values_.size() / dimension_;
  }
  bool empty() const noexcept { return size() == 0; }

  /// Feature dimension; 0 for discrete sequences.
  std::size_t dimension() const noexcept { return dimension_; }

  std::span<const Token> tokens() const noexcept { return tokens_; }
  Token token(std::size_t t) const { return tokens_[t]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> vector(std::size_t t) const {
    return std::span<const double>(values_).subspan(t * dimension_, dimension_);
  }

  Token max_token() const noexcept {
    Token m = 0;
    for (Token t : tokens_) m = std::max(m, t);
    return m;
  }

  friend bool operator==(const ActionSequence&, const ActionSequence&) = default;

 private:
  ObservationKind kind_ = ObservationKind::discrete;
  std::size_t dimension_ = 0;
  std::vector<Token> tokens_;
  std::vector<double> values_;
};

/// Checks every sequence shares one kind (and dimension). Returns the kind.
inline ObservationKind require_uniform(std::span<const ActionSequence> corpus, const char* what) {
  if (corpus.empty()) throw InputError(std::string(what) + " is empty");
  const auto& first = corpus.front();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].kind() != first.kind() || corpus[i].dimension() != first.dimension()) {
      throw InputError(std::string(what) + ": sequence " + std::to_string(i) +
                       " differs in kind or dimension from sequence 0");
    }
  }
  return first.kind();
}

}  // namespace hmme
