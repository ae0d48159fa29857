#pragma once

// Sequence construction: raw events -> per-agent streams -> observation
// sequences. Two pipelines share the stream partitioning step:
//   tokens: sessionize timestamped token events at idle gaps;
//   daily:  filter/impute/normalize daily feature records, then cut trailing
//           windows of daily vectors.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "hmme/error.hpp"
#include "hmme/numeric.hpp"
#include "hmme/sequence.hpp"

namespace hmme {

using Duration = std::chrono::milliseconds;
using TimePoint = std::chrono::sys_time<Duration>;
using Day = std::chrono::sys_days;

/// Named-by-position measurements; the column order comes from the schema.
using Measurements = std::vector<std::optional<double>>;

struct EventRecord {
  std::string agent_key;
  std::optional<std::string> secondary_key;
  TimePoint timestamp{};
  std::variant<std::string, Measurements> payload;
  std::optional<int> label;
  std::optional<std::string> period;

  bool has_token() const noexcept { return std::holds_alternative<std::string>(payload); }
  const std::string& token() const { return std::get<std::string>(payload); }
  const Measurements& measurements() const { return std::get<Measurements>(payload); }
};

struct StreamKey {
  std::string agent;
  std::optional<std::string> secondary;

  friend auto operator<=>(const StreamKey&, const StreamKey&) = default;
  friend bool operator==(const StreamKey&, const StreamKey&) = default;

  std::string to_string() const { return secondary ? agent + "/" + *secondary : agent; }
};

struct StreamSet {
  std::map<StreamKey, std::vector<EventRecord>> streams;

  /// H, the number of non-empty streams.
  std::size_t num_streams() const noexcept { return streams.size(); }
  std::size_t num_events() const noexcept {
    std::size_t n = 0;
    for (const auto& [key, events] : streams) n += events.size();
    return n;
  }
};

/// Groups events by agent (and secondary key when requested); each stream is
/// sorted by timestamp, equal timestamps keeping input order.
inline StreamSet partition_streams(std::span<const EventRecord> events, bool group_by_secondary) {
  StreamSet set;
  for (const auto& e : events) {
    if (e.agent_key.empty()) throw InputError("event has an empty agent key");
    StreamKey key{e.agent_key, group_by_secondary ? e.secondary_key : std::nullopt};
    set.streams[std::move(key)].push_back(e);
  }
  for (auto& [key, stream] : set.streams) {
    std::stable_sort(stream.begin(), stream.end(),
                     [](const EventRecord& a, const EventRecord& b) { return a.timestamp < b.timestamp; });
  }
  return set;
}

/// Dense ids for token payloads in first-appearance order. Ids [0, K) are
/// known tokens, K is the unknown-token id and K + 1 the wait token.
class Codebook {
 public:
  Codebook() = default;
  explicit Codebook(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], static_cast<Token>(i)).second) {
        throw InputError("duplicate codebook token '" + tokens_[i] + "'");
      }
    }
  }

  static Codebook build(std::span<const EventRecord> events) {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, Token> seen;
    for (const auto& e : events) {
      if (!e.has_token()) throw InputError("codebook needs token payloads");
      if (seen.emplace(e.token(), static_cast<Token>(tokens.size())).second) tokens.push_back(e.token());
    }
    return Codebook(std::move(tokens));
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  Token unk_id() const noexcept { return static_cast<Token>(tokens_.size()); }
  Token wait_id() const noexcept { return static_cast<Token>(tokens_.size() + 1); }
  /// Alphabet including the unknown and wait ids.
  std::size_t alphabet_size() const noexcept { return tokens_.size() + 2; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  Token id(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? unk_id() : it->second;
  }

  std::string name(Token id) const {
    if (id < tokens_.size()) return tokens_[id];
    if (id == unk_id()) return "<unk>";
    if (id == wait_id()) return "<wait>";
    throw InputError("token id " + std::to_string(id) + " outside codebook");
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, Token> index_;
};

inline std::vector<Token> tokenize(std::span<const EventRecord> stream, const Codebook& codebook) {
  std::vector<Token> out;
  out.reserve(stream.size());
  for (const auto& e : stream) {
    if (!e.has_token()) throw InputError("tokenize needs token payloads");
    out.push_back(codebook.id(e.token()));
  }
  return out;
}

inline std::vector<std::string> detokenize(std::span<const Token> ids, const Codebook& codebook) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (Token id : ids) out.push_back(codebook.name(id));
  return out;
}

struct SessionizeConfig {
  Duration wait_gap{std::chrono::seconds(60)};
  Duration break_gap{std::chrono::seconds(1800)};
  /// Token inserted at wait gaps; defaults to the codebook's wait id.
  std::optional<Token> wait_token;
  std::size_t min_sequence_length = 1;

  void validate() const {
    if (wait_gap <= Duration::zero()) throw InputError("wait_gap must be positive");
    if (break_gap < wait_gap) throw InputError("break_gap must be >= wait_gap");
    if (min_sequence_length == 0) throw InputError("min_sequence_length must be >= 1");
  }
};

/// One sessionized sequence and the stream events it came from.
struct Session {
  ActionSequence sequence;
  std::size_t first_event = 0;  // index into the stream
  std::size_t last_event = 0;   // inclusive
};

/// Splits a time-ordered token stream at gaps >= break_gap and inserts one
/// wait token at each gap in [wait_gap, break_gap). Sessions with fewer than
/// min_sequence_length observations (wait tokens included) are dropped.
inline std::vector<Session> sessionize_spans(std::span<const EventRecord> stream, const Codebook& codebook,
                                             const SessionizeConfig& cfg) {
  cfg.validate();
  const Token wait = cfg.wait_token.value_or(codebook.wait_id());
  std::vector<Session> out;
  if (stream.empty()) return out;

  std::vector<Token> current;
  std::size_t first = 0;
  auto flush = [&](std::size_t last) {
    if (current.size() >= cfg.min_sequence_length) {
      out.push_back(Session{ActionSequence::discrete(std::move(current)), first, last});
    }
    current.clear();
  };

  for (std::size_t i = 0; i < stream.size(); ++i) {
    if (!stream[i].has_token()) throw InputError("sessionize needs token payloads");
    if (i > 0) {
      const Duration gap = stream[i].timestamp - stream[i - 1].timestamp;
      if (gap < Duration::zero()) {
        throw InputError("stream is not time-ordered at event " + std::to_string(i));
      }
      if (gap >= cfg.break_gap) {
        flush(i - 1);
        first = i;
      } else if (gap >= cfg.wait_gap) {
        current.push_back(wait);
      }
    }
    current.push_back(codebook.id(stream[i].token()));
  }
  flush(stream.size() - 1);
  return out;
}

inline std::vector<ActionSequence> sessionize(std::span<const EventRecord> stream, const Codebook& codebook,
                                              const SessionizeConfig& cfg) {
  std::vector<ActionSequence> out;
  for (auto& s : sessionize_spans(stream, codebook, cfg)) out.push_back(std::move(s.sequence));
  return out;
}

// ---------------------------------------------------------------------------
// Daily feature records

struct DailyRecord {
  std::string agent_key;
  Day day{};
  std::vector<std::optional<double>> features;
  std::optional<int> label;
  std::optional<std::string> period;

  std::size_t missing_count() const noexcept {
    return static_cast<std::size_t>(std::count(features.begin(), features.end(), std::nullopt));
  }
};

struct ImputeResult {
  std::vector<DailyRecord> records;    // sorted by agent, then day
  std::vector<std::string> dropped_agents;  // every day filtered out
};

namespace detail {

inline std::map<std::string, std::vector<DailyRecord>> group_by_agent(std::span<const DailyRecord> records) {
  std::map<std::string, std::vector<DailyRecord>> by_agent;
  for (const auto& r : records) by_agent[r.agent_key].push_back(r);
  for (auto& [agent, days] : by_agent) {
    std::stable_sort(days.begin(), days.end(), [](const DailyRecord& a, const DailyRecord& b) { return a.day < b.day; });
  }
  return by_agent;
}

inline std::size_t common_arity(std::span<const DailyRecord> records) {
  if (records.empty()) return 0;
  const std::size_t arity = records.front().features.size();
  for (const auto& r : records) {
    if (r.features.size() != arity) throw InputError("daily records differ in feature count");
  }
  return arity;
}

}  // namespace detail

/// Drops days whose missing fraction is strictly above `max_missing_frac`,
/// then fills gaps with the agent's per-feature median over surviving days.
/// A feature missing on all of an agent's surviving days takes the median of
/// that feature's observed values across all agents (0 if none exist).
inline ImputeResult impute_and_filter(std::span<const DailyRecord> records, double max_missing_frac = 0.5) {
  if (!(max_missing_frac >= 0.0 && max_missing_frac <= 1.0)) throw InputError("max_missing_frac must lie in [0, 1]");
  const std::size_t arity = detail::common_arity(records);

  auto by_agent = detail::group_by_agent(records);
  ImputeResult result;
  std::vector<std::vector<double>> global_values(arity);
  for (auto it = by_agent.begin(); it != by_agent.end();) {
    auto& days = it->second;
    std::erase_if(days, [&](const DailyRecord& r) {
      return arity > 0 &&
             static_cast<double>(r.missing_count()) / static_cast<double>(arity) > max_missing_frac;
    });
    if (days.empty()) {
      result.dropped_agents.push_back(it->first);
      it = by_agent.erase(it);
      continue;
    }
    for (const auto& r : days) {
      for (std::size_t f = 0; f < arity; ++f) {
        if (r.features[f]) global_values[f].push_back(*r.features[f]);
      }
    }
    ++it;
  }

  std::vector<double> global_median(arity, 0.0);
  for (std::size_t f = 0; f < arity; ++f) {
    if (!global_values[f].empty()) global_median[f] = median_inplace(global_values[f]);
  }

  for (auto& [agent, days] : by_agent) {
    for (std::size_t f = 0; f < arity; ++f) {
      std::vector<double> observed;
      for (const auto& r : days) {
        if (r.features[f]) observed.push_back(*r.features[f]);
      }
      const double fill = observed.empty() ? global_median[f] : median_inplace(observed);
      for (auto& r : days) {
        if (!r.features[f]) r.features[f] = fill;
      }
    }
    for (auto& r : days) result.records.push_back(std::move(r));
  }
  return result;
}

/// Per-agent, per-feature z-scores with the population standard deviation.
/// Constant features map to zeros. Records must have no missing values.
inline std::vector<DailyRecord> normalize_features(std::span<const DailyRecord> records) {
  const std::size_t arity = detail::common_arity(records);
  for (const auto& r : records) {
    if (r.missing_count() > 0) throw InputError("normalize_features needs imputed records");
  }
  constexpr double kStdFloor = 1e-12;
  auto by_agent = detail::group_by_agent(records);
  std::vector<DailyRecord> out;
  out.reserve(records.size());
  for (auto& [agent, days] : by_agent) {
    const double n = static_cast<double>(days.size());
    for (std::size_t f = 0; f < arity; ++f) {
      double mean = 0.0;
      for (const auto& r : days) mean += *r.features[f];
      mean /= n;
      double var = 0.0;
      for (const auto& r : days) var += (*r.features[f] - mean) * (*r.features[f] - mean);
      const double sd = std::sqrt(var / n);
      for (auto& r : days) r.features[f] = sd < kStdFloor ? 0.0 : (*r.features[f] - mean) / sd;
    }
    for (auto& r : days) out.push_back(std::move(r));
  }
  return out;
}

enum class AnchorMode { labeled_days, every_day };

struct WindowConfig {
  std::size_t window_days = 28;
  std::size_t min_history_days = 7;
  AnchorMode anchors = AnchorMode::labeled_days;
};

struct WindowedSequence {
  std::string agent_key;
  Day anchor{};
  ActionSequence sequence;
  std::optional<int> label;
  std::optional<std::string> period;
};

/// For each anchor day, the agent's surviving days in the calendar window
/// (anchor - window_days, anchor], in day order, as one continuous sequence.
/// Missing calendar days inside the window are skipped, not filled. Windows
/// with fewer than min_history_days vectors are dropped.
inline std::vector<WindowedSequence> window_sequences(std::span<const DailyRecord> records, const WindowConfig& cfg) {
  if (cfg.window_days == 0) throw InputError("window_days must be >= 1");
  if (cfg.min_history_days == 0) throw InputError("min_history_days must be >= 1");
  const std::size_t arity = detail::common_arity(records);
  for (const auto& r : records) {
    if (r.missing_count() > 0) throw InputError("window_sequences needs imputed records");
  }
  std::vector<WindowedSequence> out;
  const auto by_agent = detail::group_by_agent(records);
  const std::chrono::days span_days(static_cast<long>(cfg.window_days));
  for (const auto& [agent, days] : by_agent) {
    for (std::size_t i = 1; i < days.size(); ++i) {
      if (days[i].day == days[i - 1].day) throw InputError("agent '" + agent + "' has duplicate days");
    }
    std::size_t start = 0;
    for (std::size_t end = 0; end < days.size(); ++end) {
      const auto& anchor = days[end];
      while (days[start].day <= anchor.day - span_days) ++start;
      if (cfg.anchors == AnchorMode::labeled_days && !anchor.label) continue;
      const std::size_t length = end - start + 1;
      if (length < cfg.min_history_days) continue;
      std::vector<double> values;
      values.reserve(length * arity);
      for (std::size_t k = start; k <= end; ++k) {
        for (const auto& v : days[k].features) values.push_back(*v);
      }
      out.push_back(WindowedSequence{agent, anchor.day, ActionSequence::continuous(arity, std::move(values)),
                                     anchor.label, anchor.period});
    }
  }
  return out;
}

}  // namespace hmme
