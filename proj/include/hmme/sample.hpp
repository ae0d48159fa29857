#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hmme/error.hpp"
#include "hmme/hmm.hpp"
#include "hmme/random.hpp"
#include "hmme/sequence.hpp"

namespace hmme {

/// Draws `length` observations from the model's generative process using a
/// caller-owned generator.
inline ActionSequence sample(const Hmm& model, std::size_t length, Rng& rng) {
  if (length == 0) throw InputError("sample length must be >= 1");
  const std::size_t s = model.num_states();
  std::size_t state = rng.categorical(model.initial());

  if (model.is_categorical()) {
    const auto& cat = model.categorical();
    const std::span<const double> probs(cat.probs);
    std::vector<Token> tokens(length);
    for (std::size_t t = 0; t < length; ++t) {
      if (t > 0) state = rng.categorical(model.transitions().subspan(state * s, s));
      tokens[t] = static_cast<Token>(rng.categorical(probs.subspan(state * cat.alphabet_size, cat.alphabet_size)));
    }
    return ActionSequence::discrete(std::move(tokens));
  }

  const auto& g = model.gaussian();
  const std::size_t d = g.num_features;
  std::vector<double> values(length * d);
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) state = rng.categorical(model.transitions().subspan(state * s, s));
    for (std::size_t f = 0; f < d; ++f) {
      values[t * d + f] = g.means[state * d + f] + std::sqrt(g.variances[state * d + f]) * rng.normal();
    }
  }
  return ActionSequence::continuous(d, std::move(values));
}

inline ActionSequence sample(const Hmm& model, std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  return sample(model, length, rng);
}

}  // namespace hmme
