#pragma once

// JSON model documents. Doubles are written in shortest round-trip form, so
// serialize -> deserialize reproduces every parameter bit for bit.

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "hmme/error.hpp"
#include "hmme/hmm.hpp"

namespace hmme {

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const Hmm& model) {
  nlohmann::json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["num_states"] = model.num_states();
  doc["initial"] = std::vector<double>(model.initial().begin(), model.initial().end());
  doc["transitions"] = std::vector<double>(model.transitions().begin(), model.transitions().end());
  if (model.is_categorical()) {
    doc["kind"] = "categorical";
    doc["alphabet_size"] = model.categorical().alphabet_size;
    doc["emissions"] = model.categorical().probs;
  } else {
    doc["kind"] = "diag_gaussian";
    doc["num_features"] = model.gaussian().num_features;
    doc["means"] = model.gaussian().means;
    doc["variances"] = model.gaussian().variances;
  }
  doc["seed"] = model.seed();
  doc["prob_floor"] = model.prob_floor();
  doc["variance_floor"] = model.variance_floor();
  return doc;
}

/// Rebuilds a model, validating every invariant. Throws FormatError.
namespace detail {

// Matrices may be stored flat (row-major) or as a list of rows.
inline std::vector<double> matrix_field(const nlohmann::json& doc, const char* key) {
  const auto& v = doc.at(key);
  if (!v.is_array() || v.empty() || !v.front().is_array()) return v.get<std::vector<double>>();
  std::vector<double> flat;
  for (const auto& row : v) {
    const auto r = row.get<std::vector<double>>();
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return flat;
}

}  // namespace detail

inline Hmm model_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object()) throw FormatError("model document is not an object");
    if (doc.at("format_version").get<int>() != kModelFormatVersion) {
      throw FormatError("unsupported model format_version");
    }
    const auto states = doc.at("num_states").get<std::size_t>();
    auto initial = doc.at("initial").get<std::vector<double>>();
    auto transitions = detail::matrix_field(doc, "transitions");
    if (initial.size() != states) throw FormatError("initial length does not match num_states");
    const auto kind = doc.at("kind").get<std::string>();
    Emissions emissions;
    if (kind == "categorical") {
      emissions = CategoricalEmissions{doc.at("alphabet_size").get<std::size_t>(),
                                       detail::matrix_field(doc, "emissions")};
    } else if (kind == "diag_gaussian") {
      emissions = DiagGaussianEmissions{doc.at("num_features").get<std::size_t>(),
                                        detail::matrix_field(doc, "means"),
                                        detail::matrix_field(doc, "variances")};
    } else {
      throw FormatError("unknown model kind '" + kind + "'");
    }
    const double prob_floor = doc.value("prob_floor", kDefaultProbFloor);
    const double variance_floor = doc.value("variance_floor", kDefaultVarianceFloor);
    if (const auto* g = std::get_if<DiagGaussianEmissions>(&emissions)) {
      for (double v : g->variances) {
        if (!(v >= variance_floor)) throw FormatError("variance below variance_floor");
      }
    }
    Hmm model(std::move(initial), std::move(transitions), std::move(emissions),
              doc.value("seed", std::uint64_t{0}), prob_floor, variance_floor);
    return model;
  } catch (const FormatError&) {
    throw;
  } catch (const InputError& e) {
    throw FormatError(std::string("invalid model: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model document: ") + e.what());
  }
}

inline std::string serialize_model(const Hmm& model) { return model_to_json(model).dump(); }

inline Hmm deserialize_model(std::string_view payload) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(payload);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model payload is not valid JSON: ") + e.what());
  }
  return model_from_json(doc);
}

}  // namespace hmme
