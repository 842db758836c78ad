#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memop/schema.hpp"

namespace memop {

struct Diagnostic {
    std::string code;     // stable machine code, e.g. "E_MISSING_LIMIT"
    std::string path;     // JSON pointer into the offending instance
    std::string rule;     // "R1".."R14", "shape", "exec", or "gate"
    std::string message;

    bool operator==(const Diagnostic&) const = default;
};

struct ValidationReport {
    bool ok = false;
    std::vector<Diagnostic> diagnostics;
};

nlohmann::json to_json(const Diagnostic& d);
nlohmann::json to_json(const ValidationReport& r);

// Pure semantic validation of a decoded instance. Collects every violation
// instead of stopping at the first; `ok` is simply "no diagnostics".
ValidationReport validate(const SchemaInstance& inst);

}  // namespace memop
