// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace msmpc {

enum class Severity { error, warning };

/// One compiler finding. Error-severity diagnostics block compilation.
struct Diagnostic {
  Severity severity = Severity::error;
  std::string code;     // stable short identifier, e.g. "unknown-entity"
  std::string message;  // human-readable, non-empty
  std::string path;     // document path, e.g. "entities[0].state_dimension"
  int line = -1;        // 1-based line in the source text, -1 when not derived from text
};

bool has_errors(const std::vector<Diagnostic>& diags);

/// JSON lines, one object per diagnostic: severity, code, message, path, line.
std::string diagnostics_jsonl(const std::vector<Diagnostic>& diags);

/// Human layout for stderr: "error[unknown-entity] path:line: message".
void print_diagnostics(const std::vector<Diagnostic>& diags, std::ostream& os);

}  // namespace msmpc
