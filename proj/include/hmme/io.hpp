#pragma once

// File formats: line-delimited JSON sequence records, delimited or
// line-delimited event tables, and timestamp parsing.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmme/error.hpp"
#include "hmme/seqconstruct.hpp"
#include "hmme/sequence.hpp"

namespace hmme {

// ---------------------------------------------------------------------------
// Timestamps

namespace detail {

inline bool parse_int(std::string_view s, long long& out) {
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

inline int parse_fixed(std::string_view s, std::size_t pos, std::size_t len, std::string_view whole) {
  long long v = 0;
  if (pos + len > s.size() || !parse_int(s.substr(pos, len), v)) {
    throw InputError("malformed timestamp '" + std::string(whole) + "'");
  }
  return static_cast<int>(v);
}

}  // namespace detail

/// Accepts epoch seconds (integer or decimal), RFC 3339 date-times
/// (YYYY-MM-DDTHH:MM:SS[.fff](Z|+HH:MM|-HH:MM), 'T' or space separator) and
/// bare YYYY-MM-DD dates (midnight UTC).
inline TimePoint parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  const std::string whole(text);
  if (text.empty()) throw InputError("empty timestamp");

  if (text.size() < 10 || text[4] != '-') {
    double seconds = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, seconds);
    if (ec != std::errc() || ptr != end || !std::isfinite(seconds)) {
      throw InputError("malformed timestamp '" + whole + "'");
    }
    return TimePoint(Duration(static_cast<long long>(std::llround(seconds * 1000.0))));
  }

  const int y = detail::parse_fixed(text, 0, 4, text);
  const int mo = detail::parse_fixed(text, 5, 2, text);
  const int d = detail::parse_fixed(text, 8, 2, text);
  if (text[7] != '-') throw InputError("malformed timestamp '" + whole + "'");
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw InputError("invalid calendar date in timestamp '" + whole + "'");
  TimePoint tp = time_point_cast<Duration>(sys_days{ymd});
  if (text.size() == 10) return tp;

  if ((text[10] != 'T' && text[10] != 't' && text[10] != ' ') || text.size() < 19 || text[13] != ':' ||
      text[16] != ':') {
    throw InputError("malformed timestamp '" + whole + "'");
  }
  const int hh = detail::parse_fixed(text, 11, 2, text);
  const int mm = detail::parse_fixed(text, 14, 2, text);
  const int ss = detail::parse_fixed(text, 17, 2, text);
  if (hh > 23 || mm > 59 || ss > 60) throw InputError("time out of range in '" + whole + "'");
  tp += hours(hh) + minutes(mm) + seconds(ss);

  std::size_t pos = 19;
  if (pos < text.size() && text[pos] == '.') {
    std::size_t end = pos + 1;
    while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
    if (end == pos + 1) throw InputError("malformed fractional seconds in '" + whole + "'");
    std::string frac(text.substr(pos + 1, std::min<std::size_t>(3, end - pos - 1)));
    while (frac.size() < 3) frac += '0';
    tp += milliseconds(std::stoi(frac));
    pos = end;
  }
  if (pos == text.size()) throw InputError("timestamp '" + whole + "' lacks a UTC offset");
  if (text[pos] == 'Z' || text[pos] == 'z') {
    if (pos + 1 != text.size()) throw InputError("malformed timestamp '" + whole + "'");
    return tp;
  }
  if ((text[pos] != '+' && text[pos] != '-') || text.size() != pos + 6 || text[pos + 3] != ':') {
    throw InputError("malformed UTC offset in '" + whole + "'");
  }
  const int oh = detail::parse_fixed(text, pos + 1, 2, text);
  const int om = detail::parse_fixed(text, pos + 4, 2, text);
  const auto offset = hours(oh) + minutes(om);
  return text[pos] == '+' ? tp - offset : tp + offset;
}

inline std::string format_day(Day day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

// ---------------------------------------------------------------------------
// Sequence records

struct SequenceRecord {
  std::string sequence_id;
  std::string agent;
  ActionSequence sequence;
  std::optional<int> label;
  std::optional<std::string> period;
  std::optional<std::size_t> generator;
};

inline nlohmann::json sequence_to_json(const SequenceRecord& r) {
  nlohmann::json j;
  j["sequence_id"] = r.sequence_id;
  j["agent"] = r.agent;
  j["kind"] = to_string(r.sequence.kind());
  if (r.sequence.is_discrete()) {
    j["observations"] = std::vector<Token>(r.sequence.tokens().begin(), r.sequence.tokens().end());
  } else {
    auto rows = nlohmann::json::array();
    for (std::size_t t = 0; t < r.sequence.size(); ++t) {
      const auto v = r.sequence.vector(t);
      rows.push_back(std::vector<double>(v.begin(), v.end()));
    }
    j["observations"] = std::move(rows);
  }
  if (r.label) j["label"] = *r.label;
  if (r.period) j["period"] = *r.period;
  if (r.generator) j["generator"] = *r.generator;
  return j;
}

inline SequenceRecord sequence_from_json(const nlohmann::json& j) {
  try {
    SequenceRecord r;
    r.sequence_id = j.at("sequence_id").get<std::string>();
    r.agent = j.value("agent", std::string{});
    const auto kind = j.at("kind").get<std::string>();
    const auto& obs = j.at("observations");
    if (kind == "discrete") {
      r.sequence = ActionSequence::discrete(obs.get<std::vector<Token>>());
    } else if (kind == "continuous") {
      r.sequence = ActionSequence::continuous(obs.get<std::vector<std::vector<double>>>());
    } else {
      throw FormatError("unknown sequence kind '" + kind + "'");
    }
    if (r.sequence.empty()) throw FormatError("sequence '" + r.sequence_id + "' has no observations");
    if (j.contains("label") && !j["label"].is_null()) {
      r.label = j["label"].get<int>();
      if (*r.label != 0 && *r.label != 1) throw FormatError("label must be 0 or 1");
    }
    if (j.contains("period") && !j["period"].is_null()) {
      r.period = j["period"].is_string() ? j["period"].get<std::string>() : j["period"].dump();
    }
    if (j.contains("generator") && !j["generator"].is_null()) r.generator = j["generator"].get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed sequence record: ") + e.what());
  } catch (const InputError& e) {
    throw FormatError(std::string("malformed sequence record: ") + e.what());
  }
}

inline std::vector<SequenceRecord> read_sequence_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open sequence file '" + path.string() + "'");
  std::vector<SequenceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sequence_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void write_sequence_file(const std::filesystem::path& path, std::span<const SequenceRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  for (const auto& r : records) out << sequence_to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Event tables

using Row = std::unordered_map<std::string, std::optional<std::string>>;

struct Table {
  std::vector<std::string> columns;  // header order; for JSONL, union of keys in first-seen order
  std::vector<Row> rows;
};

/// Splits one CSV line, honoring double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw FormatError("unterminated quoted field");
  fields.push_back(std::move(field));
  return fields;
}

inline Table read_csv(std::istream& in) {
  Table table;
  std::string line;
  if (!std::getline(in, line)) return table;
  table.columns = split_csv_line(line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != table.columns.size()) {
      throw FormatError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                        " fields, header has " + std::to_string(table.columns.size()));
    }
    Row row;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      row[table.columns[c]] = fields[c].empty() ? std::nullopt : std::optional<std::string>(fields[c]);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline Table read_jsonl(std::istream& in) {
  Table table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError("line " + std::to_string(line_no) + " is not an object");
    Row row;
    for (const auto& [key, value] : j.items()) {
      if (std::find(table.columns.begin(), table.columns.end(), key) == table.columns.end()) table.columns.push_back(key);
      if (value.is_null()) {
        row[key] = std::nullopt;
      } else {
        row[key] = value.is_string() ? value.get<std::string>() : value.dump();
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline Table read_table(const std::filesystem::path& path, std::string format = "auto") {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open input '" + path.string() + "'");
  if (format == "auto") {
    const auto ext = path.extension().string();
    format = (ext == ".jsonl" || ext == ".ndjson" || ext == ".json") ? "jsonl" : "csv";
  }
  try {
    if (format == "csv") return read_csv(in);
    if (format == "jsonl") return read_jsonl(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  throw InputError("unknown input format '" + format + "'");
}

/// Declares which columns carry which event fields.
struct InputSchema {
  std::string path;
  std::string format = "auto";
  std::string agent_column = "agent";
  std::optional<std::string> secondary_column;
  std::string timestamp_column = "timestamp";
  std::optional<std::string> token_column;
  std::vector<std::string> feature_columns;
  std::optional<std::string> label_column;
  std::optional<std::string> period_column;

  void validate() const {
    if (token_column.has_value() == !feature_columns.empty()) {
      throw InputError("schema must declare exactly one of token_column or feature_columns");
    }
  }
};

/// Converts table rows to events. Every declared column must exist in the
/// table header (an empty table with no header is accepted as zero events).
inline std::vector<EventRecord> events_from_table(const Table& table, const InputSchema& schema) {
  schema.validate();
  if (table.columns.empty() && table.rows.empty()) return {};
  std::vector<std::string> declared{schema.agent_column, schema.timestamp_column};
  if (schema.secondary_column) declared.push_back(*schema.secondary_column);
  if (schema.token_column) declared.push_back(*schema.token_column);
  if (schema.label_column) declared.push_back(*schema.label_column);
  if (schema.period_column) declared.push_back(*schema.period_column);
  declared.insert(declared.end(), schema.feature_columns.begin(), schema.feature_columns.end());
  for (const auto& col : declared) {
    if (std::find(table.columns.begin(), table.columns.end(), col) == table.columns.end()) {
      throw InputError("missing declared column '" + col + "'");
    }
  }

  auto cell = [](const Row& row, const std::string& col) -> std::optional<std::string> {
    const auto it = row.find(col);
    return it == row.end() ? std::nullopt : it->second;
  };
  auto required = [&](const Row& row, const std::string& col, std::size_t i) {
    auto v = cell(row, col);
    if (!v) throw InputError("row " + std::to_string(i + 1) + ": column '" + col + "' is empty");
    return *v;
  };

  std::vector<EventRecord> events;
  events.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    EventRecord e;
    e.agent_key = required(row, schema.agent_column, i);
    if (schema.secondary_column) e.secondary_key = cell(row, *schema.secondary_column);
    try {
      e.timestamp = parse_timestamp(required(row, schema.timestamp_column, i));
    } catch (const InputError& err) {
      throw InputError("row " + std::to_string(i + 1) + ": " + err.what());
    }
    if (schema.token_column) {
      e.payload = required(row, *schema.token_column, i);
    } else {
      Measurements m;
      for (const auto& col : schema.feature_columns) {
        const auto v = cell(row, col);
        if (!v || *v == "nan" || *v == "NaN" || *v == "NA") {
          m.push_back(std::nullopt);
          continue;
        }
        double x = 0.0;
        const auto* end = v->data() + v->size();
        auto [ptr, ec] = std::from_chars(v->data(), end, x);
        if (ec != std::errc() || ptr != end) {
          throw InputError("row " + std::to_string(i + 1) + ": column '" + col + "' is not a number");
        }
        m.push_back(x);
      }
      e.payload = std::move(m);
    }
    if (schema.label_column) {
      if (const auto v = cell(row, *schema.label_column)) {
        long long label = 0;
        if (!detail::parse_int(*v, label) || (label != 0 && label != 1)) {
          throw InputError("row " + std::to_string(i + 1) + ": label must be 0 or 1");
        }
        e.label = static_cast<int>(label);
      }
    }
    if (schema.period_column) e.period = cell(row, *schema.period_column);
    events.push_back(std::move(e));
  }
  return events;
}

/// Daily records from measurement events; the event's UTC calendar day is the record day.
inline std::vector<DailyRecord> daily_records_from_events(std::span<const EventRecord> events) {
  std::vector<DailyRecord> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    if (e.has_token()) throw InputError("daily pipeline needs feature columns, not tokens");
    out.push_back(DailyRecord{e.agent_key, std::chrono::floor<std::chrono::days>(e.timestamp), e.measurements(),
                              e.label, e.period});
  }
  return out;
}

/// %.17g, enough digits to round-trip a double.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace hmme
