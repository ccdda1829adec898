// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msmpc/diagnostics.hpp"
#include "msmpc/model.hpp"

namespace msmpc::model {

struct ParseResult {
  std::optional<ModelDescription> model;  // set iff no error diagnostics
  std::vector<Diagnostic> diagnostics;
};

/// Lexical + syntactical analysis of a YAML model description. Collects one
/// diagnostic per fault instead of stopping at the first; every optional
/// field of the result carries its documented default.
ParseResult parse_model_description(const std::string& yaml_text);

/// Canonical YAML form; re-parsing yields a structurally identical model.
std::string serialize_model_description(const ModelDescription& model);

/// Graphviz digraph: one node per entity, one labeled edge per
/// (source -> destination) pair per stage, in declaration order.
std::string export_msmp_dot(const ModelDescription& model);

}  // namespace msmpc::model
