#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memop/typed_ops.hpp"
#include "memop/validate.hpp"

namespace memop {

// Outcome of dispatching one typed operation. Errors are data, not
// exceptions: the result carries machine-readable diagnostics either way.
struct ExecutionResult {
    enum class Status { Ok, Error };

    Status status = Status::Ok;
    OpKind op = OpKind::Encode;
    std::vector<std::string> affected_ids;
    std::int64_t count_delta = 0;  // change in active item count
    nlohmann::json payload = nlohmann::json::object();
    std::vector<Diagnostic> diagnostics;
    bool dry_run = false;

    bool ok() const { return status == Status::Ok; }
    nlohmann::json to_json() const;

    static ExecutionResult failure(OpKind op, Diagnostic d);
    static ExecutionResult skipped(OpKind op);
};

// Thrown inside backends for per-op failures; execute() converts it into an
// error result. Public so callers of lower-level entry points (e.g. target
// resolution) can observe the same diagnostics.
class ExecutionError : public std::runtime_error {
public:
    explicit ExecutionError(Diagnostic d)
        : std::runtime_error(d.code + ": " + d.message), diagnostic_(std::move(d)) {}

    const Diagnostic& diagnostic() const { return diagnostic_; }

private:
    Diagnostic diagnostic_;
};

// What any storage engine must offer to sit behind the adapter. Execution is
// atomic per op: on an error status the backend's observable state (and its
// digest) is unchanged. `now_ns` is the injected clock — backends never read
// wall time themselves.
class Backend {
public:
    virtual ~Backend() = default;

    virtual bool supports(OpKind op) const = 0;
    virtual ExecutionResult execute(const TypedOp& op, std::int64_t now_ns) = 0;
    virtual std::string snapshot_digest() = 0;
};

}  // namespace memop
