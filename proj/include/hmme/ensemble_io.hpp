#pragma once

// Ensemble directories: manifest.json plus one model document per base
// learner (pos_<i>.json, neg_<j>.json, or u_<i>.json).

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmme/ensemble.hpp"
#include "hmme/error.hpp"
#include "hmme/model_io.hpp"

namespace hmme {

inline constexpr int kEnsembleFormatVersion = 1;

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"num_states", c.num_states},
                        {"max_iterations", c.max_iterations},
                        {"convergence_tolerance", c.convergence_tolerance},
                        {"prob_floor", c.prob_floor},
                        {"variance_floor", c.variance_floor},
                        {"alphabet_size", c.alphabet_size}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.num_states = j.value("num_states", c.num_states);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.convergence_tolerance = j.value("convergence_tolerance", c.convergence_tolerance);
  c.prob_floor = j.value("prob_floor", c.prob_floor);
  c.variance_floor = j.value("variance_floor", c.variance_floor);
  c.alphabet_size = j.value("alphabet_size", c.alphabet_size);
  return c;
}

inline std::string member_file_name(ModelClass c, std::size_t index) {
  return std::string(class_tag(c)) + "_" + std::to_string(index) + ".json";
}

inline nlohmann::json member_to_json(const MemberRecord& m, const Hmm& model, const std::string& file) {
  return nlohmann::json{{"file", file},
                        {"seed", m.seed},
                        {"subset", m.subset},
                        {"iterations", m.diagnostics.iterations},
                        {"converged", m.diagnostics.converged},
                        {"final_mean_log_likelihood", m.diagnostics.final_mean_log_likelihood},
                        {"parameter_count", model.parameter_count()}};
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json write_members(const std::filesystem::path& dir, ModelClass c, const std::vector<Hmm>& models,
                                    const std::vector<MemberRecord>& members) {
  auto list = nlohmann::json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto file = member_file_name(c, i);
    write_text(dir / file, serialize_model(models[i]) + "\n");
    list.push_back(member_to_json(members[i], models[i], file));
  }
  return list;
}

inline void read_members(const std::filesystem::path& dir, const nlohmann::json& list, std::vector<Hmm>& models,
                         std::vector<MemberRecord>& members) {
  for (const auto& entry : list) {
    models.push_back(deserialize_model(read_text(dir / entry.at("file").get<std::string>())));
    MemberRecord m;
    m.seed = entry.at("seed").get<std::uint64_t>();
    m.subset = entry.at("subset").get<std::vector<std::size_t>>();
    m.diagnostics.iterations = entry.at("iterations").get<std::size_t>();
    m.diagnostics.converged = entry.at("converged").get<bool>();
    m.diagnostics.final_mean_log_likelihood = entry.at("final_mean_log_likelihood").get<double>();
    members.push_back(std::move(m));
  }
}

inline void check_shared_shape(const std::vector<const Hmm*>& models) {
  for (const Hmm* m : models) {
    if (m->kind() != models.front()->kind() || m->emission_width() != models.front()->emission_width()) {
      throw FormatError("ensemble members differ in emission kind or width");
    }
  }
}

}  // namespace detail

inline nlohmann::json ensemble_manifest(const Ensemble& ens) {
  nlohmann::json doc;
  doc["format_version"] = kEnsembleFormatVersion;
  doc["type"] = "supervised";
  doc["config"] = {{"n_pos", ens.config.n_pos},
                   {"n_neg", ens.config.n_neg},
                   {"subset_fraction", ens.config.subset_fraction},
                   {"master_seed", ens.config.master_seed},
                   {"base", train_config_to_json(ens.config.base)}};
  return doc;
}

/// Writes the ensemble into `dir` (created if needed).
inline void save_ensemble(const Ensemble& ens, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto doc = ensemble_manifest(ens);
  doc["pos_models"] = detail::write_members(dir, ModelClass::positive, ens.pos_models, ens.pos_members);
  doc["neg_models"] = detail::write_members(dir, ModelClass::negative, ens.neg_models, ens.neg_members);
  detail::write_text(dir / "manifest.json", doc.dump(2) + "\n");
}

inline Ensemble load_ensemble(const std::filesystem::path& dir) {
  try {
    const auto doc = nlohmann::json::parse(detail::read_text(dir / "manifest.json"));
    if (doc.at("format_version").get<int>() != kEnsembleFormatVersion) throw FormatError("unsupported ensemble format_version");
    if (doc.at("type").get<std::string>() != "supervised") throw FormatError("not a supervised ensemble");
    Ensemble ens;
    const auto& cfg = doc.at("config");
    ens.config.n_pos = cfg.at("n_pos").get<std::size_t>();
    ens.config.n_neg = cfg.at("n_neg").get<std::size_t>();
    ens.config.subset_fraction = cfg.at("subset_fraction").get<double>();
    ens.config.master_seed = cfg.at("master_seed").get<std::uint64_t>();
    ens.config.base = train_config_from_json(cfg.at("base"));
    detail::read_members(dir, doc.at("pos_models"), ens.pos_models, ens.pos_members);
    detail::read_members(dir, doc.at("neg_models"), ens.neg_models, ens.neg_members);
    if (ens.pos_models.size() != ens.config.n_pos || ens.neg_models.size() != ens.config.n_neg) {
      throw FormatError("model counts do not match the manifest config");
    }
    detail::check_shared_shape(ens.ordered_models());
    return ens;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed ensemble manifest in '" + dir.string() + "': " + e.what());
  }
}

inline void save_unsupervised(const UnsupervisedEnsemble& ens, double subset_fraction, std::uint64_t master_seed,
                              const TrainConfig& base, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json doc;
  doc["format_version"] = kEnsembleFormatVersion;
  doc["type"] = "unsupervised";
  doc["config"] = {{"n", ens.models.size()},
                   {"subset_fraction", subset_fraction},
                   {"master_seed", master_seed},
                   {"base", train_config_to_json(base)}};
  doc["models"] = detail::write_members(dir, ModelClass::unlabeled, ens.models, ens.members);
  detail::write_text(dir / "manifest.json", doc.dump(2) + "\n");
}

inline UnsupervisedEnsemble load_unsupervised(const std::filesystem::path& dir) {
  try {
    const auto doc = nlohmann::json::parse(detail::read_text(dir / "manifest.json"));
    if (doc.at("type").get<std::string>() != "unsupervised") throw FormatError("not an unsupervised ensemble");
    UnsupervisedEnsemble ens;
    detail::read_members(dir, doc.at("models"), ens.models, ens.members);
    std::vector<const Hmm*> ptrs;
    for (const auto& m : ens.models) ptrs.push_back(&m);
    detail::check_shared_shape(ptrs);
    return ens;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed ensemble manifest in '" + dir.string() + "': " + e.what());
  }
}

}  // namespace hmme
