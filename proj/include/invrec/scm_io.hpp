#pragma once

// Model definition files: a JSON document with
//
//   {"variables":   [{"id": "y", "arity": 2}, ...],
//    "environment": {"id": "e", "arity": 3},
//    "graph_tag": "XspToR", "class_tag": "AntiCausal",
//    "factors": [{"child": "y", "parents": [], "rows": [[0.5, 0.5]]},
//                {"child": "x_sp", "parents": ["y"],
//                 "per_environment": [[[0.9, 0.1], [0.1, 0.9]], ...]}],
//    "selection": {"label": "y", "weights": [[0.45, 0.55], ...]}}
//
// One row per parent assignment (first parent most significant).

#include <filesystem>
#include <string>

#include "invrec/scm.hpp"

namespace invrec::scm {

/// Parses a model document. Malformed JSON or missing keys throw Error;
/// references to undeclared variables throw ValidationError. Probabilities
/// are not checked here (see validate).
DiscreteScm parse_model(const std::string& text);
DiscreteScm load_model(const std::filesystem::path& path);

/// Canonical form: fixed key order, shortest round-trip number formatting.
std::string dump_model(const DiscreteScm& scm);
void save_model(const std::filesystem::path& path, const DiscreteScm& scm);

}  // namespace invrec::scm
