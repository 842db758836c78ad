#include "memop/adapter.hpp"

namespace memop {

using nlohmann::json;

json ExecutionResult::to_json() const {
    json j;
    j["status"] = status == Status::Ok ? "ok" : "error";
    j["op"] = to_string(op);
    j["affected_ids"] = affected_ids;
    j["count_delta"] = count_delta;
    j["payload"] = payload;
    json diags = json::array();
    for (const auto& d : diagnostics) diags.push_back(memop::to_json(d));
    j["diagnostics"] = std::move(diags);
    j["dry_run"] = dry_run;
    return j;
}

ExecutionResult ExecutionResult::failure(OpKind op, Diagnostic d) {
    ExecutionResult r;
    r.status = Status::Error;
    r.op = op;
    r.diagnostics.push_back(std::move(d));
    return r;
}

ExecutionResult ExecutionResult::skipped(OpKind op) {
    return failure(op, {"E_SKIPPED", "", "exec", "not executed: an earlier op failed"});
}

ExecutionResult dispatch(const TypedOp& op, Backend& backend, std::int64_t now_ns) {
    if (!backend.supports(op.op))
        return ExecutionResult::failure(
            op.op, {"E_UNSUPPORTED_OP", "/op", "gate",
                    std::string(to_string(op.op)) + " is not supported by this backend"});

    const bool all_target =
        op.target && std::holds_alternative<ResolvedAll>(*op.target);
    if (all_target && !op.meta.confirmation && !op.meta.dry_run)
        return ExecutionResult::failure(
            op.op, {"E_CONFIRM_REQUIRED", "/target/all", "gate",
                    "targeting all items requires confirmation or dry_run"});
    if (all_target && op.stage == Stage::Ret && !op.meta.confirmation)
        return ExecutionResult::failure(
            op.op, {"E_CONFIRM_RETRIEVAL", "/target/all", "gate",
                    "retrieval over all items requires explicit confirmation"});
    if (const auto* del = std::get_if<TypedDelete>(&op.args)) {
        if (del->mode == DeleteMode::Hard && !op.meta.confirmation && !op.meta.dry_run)
            return ExecutionResult::failure(
                op.op, {"E_CONFIRM_HARD_DELETE", "/args/mode", "gate",
                        "hard delete requires confirmation or dry_run"});
    }
    return backend.execute(op, now_ns);
}

std::vector<ExecutionResult> run_sequence(const std::vector<TypedOp>& ops, Backend& backend,
                                          std::int64_t now_ns) {
    std::vector<ExecutionResult> results;
    results.reserve(ops.size());
    bool failed = false;
    for (const auto& op : ops) {
        if (failed) {
            results.push_back(ExecutionResult::skipped(op.op));
            continue;
        }
        results.push_back(dispatch(op, backend, now_ns));
        if (!results.back().ok()) failed = true;
    }
    return results;
}

}  // namespace memop
