// hmme: command-line driver for sequence construction, ensemble training,
// scoring, clustering, evaluation and synthetic corpus generation.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hmme/cluster.hpp"
#include "hmme/ensemble.hpp"
#include "hmme/ensemble_io.hpp"
#include "hmme/eval.hpp"
#include "hmme/io.hpp"
#include "hmme/model_io.hpp"
#include "hmme/seqconstruct.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hmme;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitInternal = 3;

// ---------------------------------------------------------------------------
// Run configuration

struct PipelineConfig {
  std::string mode = "tokens";  // tokens | daily
  bool group_by_secondary = false;
  double wait_gap_seconds = 60.0;
  double break_gap_seconds = 1800.0;
  std::size_t min_sequence_length = 1;
  std::size_t window_days = 28;
  std::size_t min_history_days = 7;
  std::string anchors = "labeled_days";
  double max_missing_frac = 0.5;
};

struct EvalSettings {
  std::optional<std::size_t> threshold;
  double validation_fraction = 0.2;
};

struct ClusterSettings {
  std::size_t n = 500;
  double subset_fraction = 0.01;
  std::size_t k = 2;
  std::size_t max_iters = 300;
  std::optional<std::size_t> pca_dims;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t workers = default_workers();
  std::string output_dir = "out";
  InputSchema input;
  PipelineConfig pipeline;
  EnsembleConfig ensemble;
  FeatureDomain domain = FeatureDomain::log_likelihood;
  EvalSettings eval;
  ClusterSettings cluster;
};

const char* domain_name(FeatureDomain d) {
  switch (d) {
    case FeatureDomain::log_likelihood: return "log_likelihood";
    case FeatureDomain::per_observation_log: return "per_observation_log";
    case FeatureDomain::likelihood: return "likelihood";
  }
  return "?";
}

FeatureDomain parse_domain(const std::string& s) {
  if (s == "log_likelihood") return FeatureDomain::log_likelihood;
  if (s == "per_observation_log") return FeatureDomain::per_observation_log;
  if (s == "likelihood") return FeatureDomain::likelihood;
  throw InputError("config: unknown features.domain '" + s + "'");
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw InputError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw InputError("config: unknown field '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void read_field(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError("config: field '" + where + "." + key + "' has the wrong type");
  }
}

template <typename T>
void read_optional(const json& obj, const char* key, const std::string& where, std::optional<T>& out) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  T v{};
  read_field(obj, key, where, v);
  out = v;
}

RunConfig load_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("config '" + path + "' is not valid JSON: " + e.what());
  }
  check_keys(doc, "", {"seed", "output_dir", "input", "pipeline", "ensemble", "features", "eval", "cluster"});
  read_field(doc, "seed", "", cfg.seed);
  read_field(doc, "output_dir", "", cfg.output_dir);
  if (doc.contains("input")) {
    const auto& j = doc["input"];
    check_keys(j, "input", {"path", "format", "agent_column", "secondary_column", "timestamp_column", "token_column",
                            "feature_columns", "label_column", "period_column"});
    auto& s = cfg.input;
    read_field(j, "path", "input", s.path);
    read_field(j, "format", "input", s.format);
    read_field(j, "agent_column", "input", s.agent_column);
    read_optional(j, "secondary_column", "input", s.secondary_column);
    read_field(j, "timestamp_column", "input", s.timestamp_column);
    read_optional(j, "token_column", "input", s.token_column);
    read_field(j, "feature_columns", "input", s.feature_columns);
    read_optional(j, "label_column", "input", s.label_column);
    read_optional(j, "period_column", "input", s.period_column);
  }
  if (doc.contains("pipeline")) {
    const auto& j = doc["pipeline"];
    check_keys(j, "pipeline", {"mode", "group_by_secondary", "wait_gap_seconds", "break_gap_seconds",
                               "min_sequence_length", "window_days", "min_history_days", "anchors", "max_missing_frac"});
    auto& p = cfg.pipeline;
    read_field(j, "mode", "pipeline", p.mode);
    read_field(j, "group_by_secondary", "pipeline", p.group_by_secondary);
    read_field(j, "wait_gap_seconds", "pipeline", p.wait_gap_seconds);
    read_field(j, "break_gap_seconds", "pipeline", p.break_gap_seconds);
    read_field(j, "min_sequence_length", "pipeline", p.min_sequence_length);
    read_field(j, "window_days", "pipeline", p.window_days);
    read_field(j, "min_history_days", "pipeline", p.min_history_days);
    read_field(j, "anchors", "pipeline", p.anchors);
    read_field(j, "max_missing_frac", "pipeline", p.max_missing_frac);
  }
  if (doc.contains("ensemble")) {
    const auto& j = doc["ensemble"];
    check_keys(j, "ensemble", {"n_pos", "n_neg", "subset_fraction", "num_states", "max_iterations",
                               "convergence_tolerance", "prob_floor", "variance_floor", "alphabet_size"});
    auto& e = cfg.ensemble;
    read_field(j, "n_pos", "ensemble", e.n_pos);
    read_field(j, "n_neg", "ensemble", e.n_neg);
    read_field(j, "subset_fraction", "ensemble", e.subset_fraction);
    read_field(j, "num_states", "ensemble", e.base.num_states);
    read_field(j, "max_iterations", "ensemble", e.base.max_iterations);
    read_field(j, "convergence_tolerance", "ensemble", e.base.convergence_tolerance);
    read_field(j, "prob_floor", "ensemble", e.base.prob_floor);
    read_field(j, "variance_floor", "ensemble", e.base.variance_floor);
    read_field(j, "alphabet_size", "ensemble", e.base.alphabet_size);
  }
  if (doc.contains("features")) {
    check_keys(doc["features"], "features", {"domain"});
    std::string d = domain_name(cfg.domain);
    read_field(doc["features"], "domain", "features", d);
    cfg.domain = parse_domain(d);
  }
  if (doc.contains("eval")) {
    const auto& j = doc["eval"];
    check_keys(j, "eval", {"threshold", "validation_fraction"});
    read_optional(j, "threshold", "eval", cfg.eval.threshold);
    read_field(j, "validation_fraction", "eval", cfg.eval.validation_fraction);
  }
  if (doc.contains("cluster")) {
    const auto& j = doc["cluster"];
    check_keys(j, "cluster", {"n", "subset_fraction", "k", "max_iters", "pca_dims"});
    auto& c = cfg.cluster;
    read_field(j, "n", "cluster", c.n);
    read_field(j, "subset_fraction", "cluster", c.subset_fraction);
    read_field(j, "k", "cluster", c.k);
    read_field(j, "max_iters", "cluster", c.max_iters);
    read_optional(j, "pca_dims", "cluster", c.pca_dims);
  }
  return cfg;
}

// Resolved configuration as echoed into the output directory. The worker
// count is left out on purpose: it never changes results.
json config_to_json(const RunConfig& c, const std::string& command) {
  json input = {{"path", c.input.path},
                {"format", c.input.format},
                {"agent_column", c.input.agent_column},
                {"secondary_column", c.input.secondary_column ? json(*c.input.secondary_column) : json()},
                {"timestamp_column", c.input.timestamp_column},
                {"token_column", c.input.token_column ? json(*c.input.token_column) : json()},
                {"feature_columns", c.input.feature_columns},
                {"label_column", c.input.label_column ? json(*c.input.label_column) : json()},
                {"period_column", c.input.period_column ? json(*c.input.period_column) : json()}};
  const auto& p = c.pipeline;
  json pipeline = {{"mode", p.mode},
                   {"group_by_secondary", p.group_by_secondary},
                   {"wait_gap_seconds", p.wait_gap_seconds},
                   {"break_gap_seconds", p.break_gap_seconds},
                   {"min_sequence_length", p.min_sequence_length},
                   {"window_days", p.window_days},
                   {"min_history_days", p.min_history_days},
                   {"anchors", p.anchors},
                   {"max_missing_frac", p.max_missing_frac}};
  const auto& e = c.ensemble;
  json ensemble = {{"n_pos", e.n_pos},
                   {"n_neg", e.n_neg},
                   {"subset_fraction", e.subset_fraction},
                   {"num_states", e.base.num_states},
                   {"max_iterations", e.base.max_iterations},
                   {"convergence_tolerance", e.base.convergence_tolerance},
                   {"prob_floor", e.base.prob_floor},
                   {"variance_floor", e.base.variance_floor},
                   {"alphabet_size", e.base.alphabet_size}};
  json eval = {{"threshold", c.eval.threshold ? json(*c.eval.threshold) : json()},
               {"validation_fraction", c.eval.validation_fraction}};
  json cluster = {{"n", c.cluster.n},
                  {"subset_fraction", c.cluster.subset_fraction},
                  {"k", c.cluster.k},
                  {"max_iters", c.cluster.max_iters},
                  {"pca_dims", c.cluster.pca_dims ? json(*c.cluster.pca_dims) : json()}};
  return json{{"command", command}, {"seed", c.seed},       {"output_dir", c.output_dir},
              {"input", input},     {"pipeline", pipeline}, {"ensemble", ensemble},
              {"features", {{"domain", domain_name(c.domain)}}},
              {"eval", eval},       {"cluster", cluster}};
}

// ---------------------------------------------------------------------------
// Output helpers

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path& path, const json& doc) { write_file(path, doc.dump(2) + "\n"); }

fs::path prepare_out(const RunConfig& cfg, const std::string& command) {
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  write_json(out / "config.json", config_to_json(cfg, command));
  return out;
}

std::vector<SequenceRecord> load_sequences(const std::string& path) {
  if (path.empty()) throw InputError("no sequence file given (--sequences)");
  return read_sequence_file(path);
}

std::vector<ActionSequence> sequences_of(const std::vector<SequenceRecord>& records) {
  std::vector<ActionSequence> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.sequence);
  return out;
}

void split_by_label(const std::vector<SequenceRecord>& records, std::span<const std::size_t> idx,
                    std::vector<ActionSequence>& pos, std::vector<ActionSequence>& neg) {
  for (auto i : idx) {
    const auto& r = records[i];
    if (!r.label) continue;
    (*r.label == 1 ? pos : neg).push_back(r.sequence);
  }
}

void require_classes(std::size_t n_pos, std::size_t n_neg, const std::string& what) {
  if (n_pos == 0) throw InputError(what + ": no sequences with label 1 (positive class)");
  if (n_neg == 0) throw InputError(what + ": no sequences with label 0 (negative class)");
}

// Compatibility check in input order so the first offending id is reported.
void check_records(const Ensemble& ens, const std::vector<SequenceRecord>& records) {
  for (const auto& r : records) {
    try {
      check_compatible(ens, r.sequence);
    } catch (const InputError& e) {
      throw InputError("sequence '" + r.sequence_id + "': " + e.what());
    }
  }
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

json ensemble_log(const Ensemble& ens, std::size_t n_pos_seqs, std::size_t n_neg_seqs) {
  json log;
  log["positive_sequences"] = n_pos_seqs;
  log["negative_sequences"] = n_neg_seqs;
  log["subset_size_pos"] = subset_size(ens.config.subset_fraction, n_pos_seqs);
  log["subset_size_neg"] = subset_size(ens.config.subset_fraction, n_neg_seqs);
  log["expected_unsampled_fraction_pos"] = expected_unsampled_fraction(ens.config.subset_fraction, ens.config.n_pos);
  log["expected_unsampled_fraction_neg"] = expected_unsampled_fraction(ens.config.subset_fraction, ens.config.n_neg);
  std::size_t total_params = 0;
  auto models = json::array();
  auto add = [&](ModelClass c, const std::vector<Hmm>& ms, const std::vector<MemberRecord>& recs) {
    for (std::size_t i = 0; i < ms.size(); ++i) {
      total_params += ms[i].parameter_count();
      models.push_back({{"model", member_file_name(c, i)},
                        {"iterations", recs[i].diagnostics.iterations},
                        {"converged", recs[i].diagnostics.converged},
                        {"parameter_count", ms[i].parameter_count()}});
    }
  };
  add(ModelClass::positive, ens.pos_models, ens.pos_members);
  add(ModelClass::negative, ens.neg_models, ens.neg_members);
  log["models"] = std::move(models);
  log["total_parameter_count"] = total_params;
  return log;
}

// ---------------------------------------------------------------------------
// Commands

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::string out;
  std::string input;
  std::string sequences;
  std::string ensemble_dir;
  std::string validation;
  std::string spec;
  std::size_t threshold = 0;
  std::size_t n = 0, n_pos = 0, n_neg = 0, k = 0, states = 0;
  double s = 0.0;
  bool features = false;
  bool events = false;
};

int cmd_construct(const RunConfig& cfg) {
  auto schema = cfg.input;
  if (schema.path.empty()) throw InputError("no input file given (--input or input.path)");
  const auto table = read_table(schema.path, schema.format);
  const auto events = events_from_table(table, schema);
  const auto& p = cfg.pipeline;
  const fs::path out = prepare_out(cfg, "construct");

  std::vector<SequenceRecord> records;
  json log;
  log["events"] = events.size();
  if (p.mode == "tokens") {
    if (!schema.token_column) throw InputError("pipeline.mode 'tokens' needs input.token_column");
    const auto streams = partition_streams(events, p.group_by_secondary);
    const auto codebook = Codebook::build(events);
    SessionizeConfig sc;
    sc.wait_gap = Duration(static_cast<long long>(std::llround(p.wait_gap_seconds * 1000.0)));
    sc.break_gap = Duration(static_cast<long long>(std::llround(p.break_gap_seconds * 1000.0)));
    sc.min_sequence_length = p.min_sequence_length;
    auto per_stream = json::object();
    for (const auto& [key, stream] : streams.streams) {
      const auto sessions = sessionize_spans(stream, codebook, sc);
      per_stream[key.to_string()] = sessions.size();
      for (std::size_t k = 0; k < sessions.size(); ++k) {
        SequenceRecord r{key.to_string() + "#" + std::to_string(k), key.agent, sessions[k].sequence, {}, {}, {}};
        // The session label is the last label seen among its events.
        for (std::size_t e = sessions[k].first_event; e <= sessions[k].last_event; ++e) {
          if (stream[e].label) r.label = stream[e].label;
          if (!r.period && stream[e].period) r.period = stream[e].period;
        }
        records.push_back(std::move(r));
      }
    }
    json cb = {{"tokens", codebook.tokens()}, {"unk_id", codebook.unk_id()}, {"wait_id", codebook.wait_id()},
               {"alphabet_size", codebook.alphabet_size()}};
    write_json(out / "codebook.json", cb);
    log["streams"] = streams.num_streams();
    log["alphabet_size"] = codebook.alphabet_size();
    log["sequences_per_stream"] = std::move(per_stream);
  } else if (p.mode == "daily") {
    if (schema.feature_columns.empty()) throw InputError("pipeline.mode 'daily' needs input.feature_columns");
    const auto daily = daily_records_from_events(events);
    const auto imputed = impute_and_filter(daily, p.max_missing_frac);
    const auto normalized = normalize_features(imputed.records);
    WindowConfig wc{p.window_days, p.min_history_days, AnchorMode::labeled_days};
    if (p.anchors == "every_day") {
      wc.anchors = AnchorMode::every_day;
    } else if (p.anchors != "labeled_days") {
      throw InputError("config: pipeline.anchors must be 'labeled_days' or 'every_day'");
    }
    const auto windows = window_sequences(normalized, wc);
    std::set<std::string> agents;
    for (const auto& d : daily) agents.insert(d.agent_key);
    auto per_stream = json::object();
    for (const auto& w : windows) {
      records.push_back(SequenceRecord{w.agent_key + "@" + format_day(w.anchor), w.agent_key, w.sequence, w.label,
                                       w.period, {}});
      per_stream[w.agent_key] = per_stream.value(w.agent_key, 0) + 1;
    }
    log["streams"] = agents.size();
    log["days_in"] = daily.size();
    log["days_kept"] = imputed.records.size();
    log["dropped_agents"] = imputed.dropped_agents;
    log["sequences_per_stream"] = std::move(per_stream);
  } else {
    throw InputError("config: pipeline.mode must be 'tokens' or 'daily'");
  }
  std::size_t observations = 0;
  for (const auto& r : records) observations += r.sequence.size();
  log["sequences"] = records.size();
  log["observations"] = observations;
  write_sequence_file(out / "sequences.jsonl", records);
  write_json(out / "construct_log.json", log);
  std::cout << "streams H = " << log["streams"].get<std::size_t>() << ", sequences = " << records.size();
  if (p.mode == "tokens") std::cout << ", alphabet size = " << log["alphabet_size"].get<std::size_t>();
  std::cout << "\n";
  return 0;
}

Ensemble fit_ensemble(const RunConfig& cfg, const std::vector<ActionSequence>& pos,
                      const std::vector<ActionSequence>& neg, std::uint64_t master_seed) {
  EnsembleConfig ec = cfg.ensemble;
  ec.master_seed = master_seed;
  return train_ensemble(pos, neg, ec, cfg.workers);
}

int cmd_train(const RunConfig& cfg, const Flags& f) {
  const auto records = load_sequences(f.sequences);
  std::vector<ActionSequence> pos, neg;
  split_by_label(records, all_indices(records.size()), pos, neg);
  require_classes(pos.size(), neg.size(), "train");
  const fs::path out = prepare_out(cfg, "train");
  const auto ens = fit_ensemble(cfg, pos, neg, cfg.seed);
  save_ensemble(ens, out);
  auto log = ensemble_log(ens, pos.size(), neg.size());
  log["unlabeled_skipped"] = records.size() - pos.size() - neg.size();
  write_json(out / "train_log.json", log);
  std::cout << "trained " << ens.pos_models.size() << " positive and " << ens.neg_models.size()
            << " negative models; total parameters " << log["total_parameter_count"].get<std::size_t>() << "\n";
  return 0;
}

Ensemble require_ensemble(const Flags& f) {
  if (f.ensemble_dir.empty()) throw InputError("no ensemble directory given (--ensemble)");
  return load_ensemble(f.ensemble_dir);
}

int cmd_score(const RunConfig& cfg, const Flags& f) {
  const auto ens = require_ensemble(f);
  const auto records = load_sequences(f.sequences);
  check_records(ens, records);
  const fs::path out = prepare_out(cfg, "score");
  const auto seqs = sequences_of(records);
  const auto scored = score_batch(ens, seqs, f.features, cfg.workers, cfg.domain);
  std::ostringstream csv;
  csv << "sequence_id,score";
  if (f.features) {
    for (std::size_t i = 0; i < ens.pos_models.size(); ++i) csv << ",pos_" << i;
    for (std::size_t j = 0; j < ens.neg_models.size(); ++j) csv << ",neg_" << j;
  }
  csv << "\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    csv << records[i].sequence_id << "," << scored[i].score.value;
    for (double v : scored[i].features) csv << "," << format_real(v);
    csv << "\n";
  }
  write_file(out / "scores.csv", csv.str());
  std::cout << "scored " << records.size() << " sequences (max score " << ens.max_score() << ")\n";
  return 0;
}

LabeledScores labeled_scores(const Ensemble& ens, const std::vector<SequenceRecord>& records,
                             std::span<const std::size_t> idx, std::size_t workers) {
  std::vector<ActionSequence> seqs;
  std::vector<int> labels;
  for (auto i : idx) {
    if (!records[i].label) continue;
    seqs.push_back(records[i].sequence);
    labels.push_back(*records[i].label);
  }
  const auto scored = score_batch(ens, seqs, false, workers);
  LabeledScores out;
  for (std::size_t i = 0; i < seqs.size(); ++i) out.push_back({static_cast<double>(scored[i].score.value), labels[i]});
  return out;
}

int cmd_classify(const RunConfig& cfg, const Flags& f, bool threshold_given, bool sweep_given) {
  if (threshold_given == sweep_given) throw InputError("classify needs exactly one of --threshold or --sweep");
  const auto ens = require_ensemble(f);
  const auto records = load_sequences(f.sequences);
  check_records(ens, records);
  json log;
  std::size_t threshold = f.threshold;
  if (sweep_given) {
    const auto validation = load_sequences(f.validation);
    check_records(ens, validation);
    const auto scores = labeled_scores(ens, validation, all_indices(validation.size()), cfg.workers);
    const auto choice = sweep_threshold(scores, ens.max_score());
    threshold = choice.threshold;
    log["validation_sequences"] = scores.size();
    log["validation_balanced_accuracy"] = choice.balanced_accuracy;
  }
  if (threshold > ens.max_score() + 1) {
    throw InputError("threshold " + std::to_string(threshold) + " exceeds N*M+1 = " + std::to_string(ens.max_score() + 1));
  }
  log["threshold"] = threshold;
  log["mode"] = sweep_given ? "sweep" : "fixed";
  const fs::path out = prepare_out(cfg, "classify");
  const auto scored = score_batch(ens, sequences_of(records), false, cfg.workers);
  std::ostringstream csv;
  csv << "sequence_id,score,prediction\n";
  std::size_t positives = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int pred = classify_threshold(scored[i].score, threshold);
    positives += pred;
    csv << records[i].sequence_id << "," << scored[i].score.value << "," << pred << "\n";
  }
  log["predicted_positive"] = positives;
  log["predicted_negative"] = records.size() - positives;
  write_file(out / "predictions.csv", csv.str());
  write_json(out / "classify_log.json", log);
  std::cout << "threshold k = " << threshold;
  if (sweep_given) std::cout << " (validation balanced accuracy " << log["validation_balanced_accuracy"].get<double>() << ")";
  std::cout << "\n";
  return 0;
}

int cmd_cluster(const RunConfig& cfg, const Flags& f) {
  const auto records = load_sequences(f.sequences);
  if (records.empty()) throw InputError("cluster: sequence file is empty");
  const auto& c = cfg.cluster;
  if (c.k > records.size()) {
    throw InputError("cluster: k = " + std::to_string(c.k) + " exceeds the sequence count " + std::to_string(records.size()));
  }
  const auto seqs = sequences_of(records);
  const fs::path out = prepare_out(cfg, "cluster");
  TrainConfig base = cfg.ensemble.base;
  const auto ens = train_unsupervised_ensemble(seqs, c.n, c.subset_fraction, base, cfg.seed, cfg.workers);
  const auto feats = feature_batch(ens.models, seqs, cfg.workers, cfg.domain);
  KMeansOptions ko;
  ko.k = c.k;
  ko.seed = derive_seed(cfg.seed, 0x6b6d65616e73ULL, 0);
  ko.max_iters = c.max_iters;
  ko.pca_dims = c.pca_dims;
  const auto result = cluster_features(feats, ko);
  std::ostringstream csv;
  csv << "sequence_id,cluster\n";
  for (std::size_t i = 0; i < records.size(); ++i) csv << records[i].sequence_id << "," << result.assignments[i] << "\n";
  write_file(out / "clusters.csv", csv.str());
  json log = {{"sequences", records.size()}, {"models", ens.models.size()}, {"k", c.k},
              {"iterations", result.iterations}, {"converged", result.converged},
              {"objective", result.objective_trace.empty() ? 0.0 : result.objective_trace.back()}};
  std::vector<std::size_t> generators;
  for (const auto& r : records) {
    if (r.generator) generators.push_back(*r.generator);
  }
  if (generators.size() == records.size()) {
    log["purity_vs_generator"] = majority_purity(result.assignments, generators);
    log["ari_vs_generator"] = adjusted_rand_index(result.assignments, generators);
  }
  write_json(out / "cluster_log.json", log);
  std::cout << "clustered " << records.size() << " sequences into " << c.k << " clusters\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const Flags& f) {
  const auto records = load_sequences(f.sequences);
  std::map<std::string, std::vector<std::size_t>> periods;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].label) continue;
    if (!records[i].period) throw InputError("eval: sequence '" + records[i].sequence_id + "' has no period");
    periods[*records[i].period].push_back(i);
  }
  if (periods.size() < 2) {
    throw InputError("eval: all-but-one validation needs at least 2 periods, found " + std::to_string(periods.size()));
  }
  const double vf = cfg.eval.validation_fraction;
  if (!cfg.eval.threshold && !(vf > 0.0 && vf < 1.0)) throw InputError("eval.validation_fraction must lie in (0, 1)");
  const auto folds = all_but_one_folds(periods);
  const fs::path out = prepare_out(cfg, "eval");

  std::vector<EvalReport> reports;
  auto fold_docs = json::array();
  for (std::size_t fi = 0; fi < folds.size(); ++fi) {
    const auto& fold = folds[fi];
    std::vector<std::size_t> fit_idx = fold.train, val_idx;
    if (!cfg.eval.threshold) {
      std::vector<int> labels;
      for (auto i : fold.train) labels.push_back(*records[i].label);
      const std::vector<double> fractions{1.0 - vf};
      const auto parts = stratified_split(labels, fractions, derive_seed(cfg.seed, 0x73706c6974ULL, fi));
      fit_idx.clear();
      for (auto p : parts[0]) fit_idx.push_back(fold.train[p]);
      for (auto p : parts[1]) val_idx.push_back(fold.train[p]);
    }
    std::vector<ActionSequence> pos, neg;
    split_by_label(records, fit_idx, pos, neg);
    require_classes(pos.size(), neg.size(), "eval fold '" + fold.held_out + "'");
    const auto ens = fit_ensemble(cfg, pos, neg, derive_seed(cfg.seed, 0x666f6c64ULL, fi));
    std::size_t threshold = 0;
    json doc;
    if (cfg.eval.threshold) {
      threshold = *cfg.eval.threshold;
    } else {
      const auto val = labeled_scores(ens, records, val_idx, cfg.workers);
      const auto choice = sweep_threshold(val, ens.max_score());
      threshold = choice.threshold;
      doc["validation_balanced_accuracy"] = choice.balanced_accuracy;
    }
    const auto test = labeled_scores(ens, records, fold.test, cfg.workers);
    EvalReport r;
    r.fold_id = fold.held_out;
    r.auc_roc = auc_roc(test);
    r.confusion = confusion_at(test, static_cast<double>(threshold));
    r.balanced_accuracy = balanced_accuracy(r.confusion);
    r.threshold = threshold;
    reports.push_back(r);
    auto rj = report_to_json(r);
    rj.update(doc);
    rj["train_sequences"] = fit_idx.size();
    rj["validation_sequences"] = val_idx.size();
    rj["test_sequences"] = fold.test.size();
    rj["max_score"] = ens.max_score();
    fold_docs.push_back(std::move(rj));
  }
  std::vector<double> aucs, bas;
  for (const auto& r : reports) {
    aucs.push_back(r.auc_roc);
    bas.push_back(r.balanced_accuracy);
  }
  const auto auc_ms = mean_std(aucs);
  const auto ba_ms = mean_std(bas);
  json report = {{"folds", fold_docs},
                 {"summary", {{"auc_roc_mean", auc_ms.mean}, {"auc_roc_std", auc_ms.std},
                              {"balanced_accuracy_mean", ba_ms.mean}, {"balanced_accuracy_std", ba_ms.std}}}};
  write_json(out / "eval_report.json", report);
  write_file(out / "eval_summary.csv", summary_table(reports));
  std::cout << reports.size() << " folds; AUC-ROC " << auc_ms.mean << " +/- " << auc_ms.std
            << ", balanced accuracy " << ba_ms.mean << " +/- " << ba_ms.std << "\n";
  return 0;
}

int cmd_simulate(RunConfig cfg, const Flags& f, bool seed_given) {
  if (f.spec.empty()) throw InputError("simulate needs --spec");
  std::ifstream in(f.spec);
  if (!in) throw InputError("cannot open spec '" + f.spec + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("spec '" + f.spec + "' is not valid JSON: " + e.what());
  }
  check_keys(doc, "", {"generators", "num_sequences", "min_length", "max_length", "imbalance_ratio", "seed", "periods"});
  SyntheticSpec spec;
  std::vector<std::string> periods;
  if (!doc.contains("generators") || !doc["generators"].is_array()) throw InputError("spec: 'generators' must be a list");
  for (std::size_t g = 0; g < doc["generators"].size(); ++g) {
    const auto& gj = doc["generators"][g];
    check_keys(gj, "generators", {"model", "label", "weight"});
    if (!gj.contains("model")) throw InputError("spec: generator " + std::to_string(g) + " has no model");
    Hmm model = model_from_json(gj["model"]);
    int label = 0;
    double weight = 1.0;
    read_field(gj, "label", "generators", label);
    read_field(gj, "weight", "generators", weight);
    spec.generators.push_back(SyntheticGenerator{std::move(model), label, weight});
  }
  read_field(doc, "num_sequences", "", spec.num_sequences);
  read_field(doc, "min_length", "", spec.min_length);
  read_field(doc, "max_length", "", spec.max_length);
  read_field(doc, "imbalance_ratio", "", spec.imbalance_ratio);
  read_field(doc, "periods", "", periods);
  if (!seed_given) read_field(doc, "seed", "", cfg.seed);
  spec.seed = cfg.seed;
  const auto corpus = generate_synthetic_corpus(spec);

  const fs::path out = prepare_out(cfg, "simulate");
  std::vector<SequenceRecord> records;
  const int width = static_cast<int>(std::to_string(corpus.size()).size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "s%0*zu", width, i);
    SequenceRecord r{id, "agent_" + std::to_string(i), corpus[i].sequence, corpus[i].label, {}, corpus[i].generator};
    if (!periods.empty()) r.period = periods[i % periods.size()];
    records.push_back(std::move(r));
  }
  write_sequence_file(out / "sequences.jsonl", records);

  if (f.events) {
    // One agent per sequence, tokens 10 s apart, so the default sessionizer
    // rebuilds exactly one sequence per agent.
    if (!corpus.empty() && !corpus.front().sequence.is_discrete()) {
      throw InputError("simulate --events needs discrete generators");
    }
    std::ostringstream csv;
    csv << "agent,timestamp,token,label,period\n";
    for (const auto& r : records) {
      for (std::size_t t = 0; t < r.sequence.size(); ++t) {
        csv << r.agent << "," << 10 * t << ",a" << r.sequence.token(t) << "," << *r.label << ","
            << r.period.value_or("") << "\n";
      }
    }
    write_file(out / "events.csv", csv.str());
  }
  std::size_t pos = 0;
  for (const auto& s : corpus) pos += s.label == 1;
  write_json(out / "simulate_log.json",
             json{{"sequences", corpus.size()}, {"positive", pos}, {"negative", corpus.size() - pos}, {"seed", spec.seed}});
  std::cout << "simulated " << corpus.size() << " sequences (" << pos << " positive)\n";
  return 0;
}

// ---------------------------------------------------------------------------

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "Run configuration (JSON)");
  sub->add_option("--seed", f.seed, "Master seed");
  sub->add_option("--workers", f.workers, "Worker threads (default: hardware parallelism)");
  sub->add_option("--out", f.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HMM ensemble toolkit"};
  app.require_subcommand(1);
  Flags f;

  auto* construct = app.add_subcommand("construct", "Build sequences from an event table");
  add_common(construct, f);
  construct->add_option("--input", f.input, "Event table (CSV or JSONL)");

  auto* train = app.add_subcommand("train", "Train a supervised ensemble");
  add_common(train, f);
  train->add_option("--sequences", f.sequences, "Labeled sequence file")->required();
  train->add_option("--n-pos", f.n_pos, "Positive-class models");
  train->add_option("--n-neg", f.n_neg, "Negative-class models");
  train->add_option("--s", f.s, "Subset fraction");
  train->add_option("--states", f.states, "Hidden states per model");

  auto* score = app.add_subcommand("score", "Composite scores and optional feature vectors");
  add_common(score, f);
  score->add_option("--ensemble", f.ensemble_dir, "Ensemble directory")->required();
  score->add_option("--sequences", f.sequences, "Sequence file")->required();
  score->add_flag("--features", f.features, "Also write normalized likelihood features");

  auto* classify = app.add_subcommand("classify", "Threshold classification");
  add_common(classify, f);
  classify->add_option("--ensemble", f.ensemble_dir, "Ensemble directory")->required();
  classify->add_option("--sequences", f.sequences, "Sequence file")->required();
  auto* thr_opt = classify->add_option("--threshold", f.threshold, "Score threshold k");
  auto* sweep_opt = classify->add_option("--sweep", f.validation, "Labeled validation file for a threshold sweep");

  auto* cluster = app.add_subcommand("cluster", "Unsupervised ensemble plus K-Means");
  add_common(cluster, f);
  cluster->add_option("--sequences", f.sequences, "Sequence file")->required();
  auto* n_opt = cluster->add_option("--n", f.n, "Ensemble size");
  auto* cs_opt = cluster->add_option("--s", f.s, "Subset fraction");
  auto* k_opt = cluster->add_option("--k", f.k, "Clusters");
  auto* cstates_opt = cluster->add_option("--states", f.states, "Hidden states per model");

  auto* eval = app.add_subcommand("eval", "All-but-one-period evaluation");
  add_common(eval, f);
  eval->add_option("--sequences", f.sequences, "Labeled sequence file with periods")->required();
  eval->add_option("--n-pos", f.n_pos, "Positive-class models");
  eval->add_option("--n-neg", f.n_neg, "Negative-class models");
  eval->add_option("--s", f.s, "Subset fraction");

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic labeled corpus");
  add_common(simulate, f);
  simulate->add_option("--spec", f.spec, "Synthetic corpus spec (JSON)")->required();
  simulate->add_flag("--events", f.events, "Also write an event table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    RunConfig cfg = load_config(f.config);
    const bool seed_given = sub->count("--seed") > 0;
    if (seed_given) cfg.seed = f.seed;
    if (sub->count("--workers")) {
      if (f.workers == 0) throw InputError("--workers must be >= 1");
      cfg.workers = f.workers;
    }
    if (sub->count("--out")) cfg.output_dir = f.out;
    if (name == "construct" && sub->count("--input")) cfg.input.path = f.input;
    if (name == "train" || name == "eval") {
      if (sub->count("--n-pos")) cfg.ensemble.n_pos = f.n_pos;
      if (sub->count("--n-neg")) cfg.ensemble.n_neg = f.n_neg;
      if (sub->count("--s")) cfg.ensemble.subset_fraction = f.s;
    }
    if (name == "train" && sub->count("--states")) cfg.ensemble.base.num_states = f.states;
    if (name == "cluster") {
      if (n_opt->count()) cfg.cluster.n = f.n;
      if (cs_opt->count()) cfg.cluster.subset_fraction = f.s;
      if (k_opt->count()) cfg.cluster.k = f.k;
      if (cstates_opt->count()) cfg.ensemble.base.num_states = f.states;
    }

    if (name == "construct") return cmd_construct(cfg);
    if (name == "train") return cmd_train(cfg, f);
    if (name == "score") return cmd_score(cfg, f);
    if (name == "classify") return cmd_classify(cfg, f, thr_opt->count() > 0, sweep_opt->count() > 0);
    if (name == "cluster") return cmd_cluster(cfg, f);
    if (name == "eval") return cmd_eval(cfg, f);
    if (name == "simulate") return cmd_simulate(cfg, f, seed_given);
    std::cerr << "unknown command '" << name << "'\n";
    return kExitInput;
  } catch (const InputError& e) {
    std::cerr << "hmme " << name << ": input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const FormatError& e) {
    std::cerr << "hmme " << name << ": format error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "hmme " << name << ": internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
