#pragma once

#include "memop/contract.hpp"

namespace memop {

// Routes one typed op to the backend after re-checking the runtime gates
// (capability, all-target and hard-delete confirmation). The gates repeat
// validator rules on purpose: callers may flip meta flags (e.g. a CLI
// --dry-run override) between validation and dispatch.
ExecutionResult dispatch(const TypedOp& op, Backend& backend, std::int64_t now_ns);

// Executes ops in order, fail-stop: after the first error the remaining ops
// are not dispatched and yield skipped results, keeping positions aligned.
std::vector<ExecutionResult> run_sequence(const std::vector<TypedOp>& ops, Backend& backend,
                                          std::int64_t now_ns);

}  // namespace memop
