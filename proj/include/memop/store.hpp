#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "memop/contract.hpp"
#include "memop/services.hpp"
#include "memop/typed_ops.hpp"

struct sqlite3;

namespace memop {

struct LockInfo {
    LockMode mode = LockMode::ReadOnly;
    std::optional<std::string> reason;
    std::vector<OpKind> allow;
    std::vector<OpKind> deny;
    std::vector<std::string> reviewers;
    std::optional<std::int64_t> expires_ns;

    bool expired(std::int64_t now_ns) const { return expires_ns && *expires_ns < now_ns; }
};

struct ExpiryInfo {
    std::int64_t until_ns = 0;
    ExpireAction action = ExpireAction::DeleteSoft;
    bool applied = false;
};

struct ReminderInfo {
    std::optional<std::int64_t> at_ns;
    std::optional<std::string> cadence;
};

struct MemoryItem {
    std::string id;
    std::string text;
    std::optional<std::string> type;
    std::vector<std::string> tags;
    std::map<std::string, std::string> facets;
    double weight = 0.5;
    std::optional<std::vector<double>> embedding;
    std::optional<std::int64_t> time_ns;
    std::optional<std::string> source;
    std::optional<std::string> actor;
    std::optional<std::string> location;
    std::optional<std::string> parent_id;
    std::optional<std::string> merged_into;
    bool deleted = false;
    std::optional<ExpiryInfo> expiry;
    std::optional<ReminderInfo> reminder;
    std::optional<LockInfo> lock;
    std::int64_t created_ns = 0;
    std::int64_t updated_ns = 0;

    bool archived() const;
    bool expired(std::int64_t now_ns) const {
        return expiry && expiry->until_ns < now_ns;
    }
    std::optional<LockInfo> effective_lock(std::int64_t now_ns) const {
        if (lock && !lock->expired(now_ns)) return lock;
        return std::nullopt;
    }
};

struct AuditRecord {
    std::int64_t seq = 0;
    std::optional<std::string> actor;
    std::string op;
    std::vector<std::string> affected;
    std::string before_digest;
    std::string after_digest;
    std::int64_t ts_ns = 0;
};

struct LineageRecord {
    std::string parent_id;
    std::string child_id;
    std::string kind;  // "split", "merge", or "summary"

    bool operator==(const LineageRecord&) const = default;
};

// Hybrid relevance weights: score = wv*cosine + wl*lexical + ww*weight.
// Items without an embedding renormalize onto lexical+weight alone.
struct ScoreWeights {
    double vector = 0.5;
    double lexical = 0.3;
    double weight = 0.2;
};

struct ScoreBreakdown {
    double vector_part = 0.0;
    double lexical_part = 0.0;
    double weight_part = 0.0;
    double total = 0.0;
    bool matched = false;  // false when no vector or lexical evidence exists
};

class StoreError : public std::runtime_error {
public:
    enum class Code { Io, Sql, BadQuery };

    StoreError(Code code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Code code() const { return code_; }

private:
    Code code_;
};

// Reference backend on an embedded SQLite database (":memory:" or a file).
// Every execute() is one transaction: the lazy expiry sweep runs first, the
// op applies, and only a successful non-dry-run commits (plus an audit row).
// Errors and dry runs roll back, so the content digest is untouched by both.
class MemoryStore final : public Backend {
public:
    MemoryStore(const std::string& path, std::shared_ptr<ServiceInterface> services,
                ScoreWeights weights = {});
    ~MemoryStore() override;

    MemoryStore(const MemoryStore&) = delete;
    MemoryStore& operator=(const MemoryStore&) = delete;

    static bool database_exists(const std::string& path);

    bool supports(OpKind op) const override;
    ExecutionResult execute(const TypedOp& op, std::int64_t now_ns) override;
    std::string snapshot_digest() override;

    // Turns a target into concrete item ids: ids verbatim (unknown ids throw),
    // filter as a conjunctive scan (time desc, id tiebreak, truncated at
    // limit), search as gated hybrid top-k, all as every active id ascending.
    // Retrieval-stage resolution additionally hides archived, expired, and
    // policy-denied items (explicit ids keep archived rows reachable).
    std::vector<std::string> resolve(const ResolvedTarget& target, OpKind op,
                                     std::int64_t now_ns);

    ScoreBreakdown score_item(const std::string& query, const MemoryItem& item) const;

    std::optional<MemoryItem> get_item(const std::string& id);
    std::vector<MemoryItem> all_items(bool include_deleted = true);
    std::int64_t active_count();
    std::int64_t trigger_count(const std::optional<std::string>& item_id = std::nullopt);
    std::vector<LineageRecord> lineage_records();
    std::vector<AuditRecord> audit_entries();

    // Read-only SQL escape hatch for inspection and benchmark assertions;
    // returns the first column of the first row (null when no rows).
    nlohmann::json query_value(const std::string& sql);

    const ScoreWeights& weights() const { return weights_; }
    ServiceInterface& services() { return *services_; }

private:
    struct ExecContext;

    void init_schema();
    void sweep_expired(std::int64_t now_ns);
    std::string digest_in_tx();

    ExecutionResult execute_inner(const TypedOp& op, std::int64_t now_ns);

    sqlite3* db_ = nullptr;
    std::shared_ptr<ServiceInterface> services_;
    ScoreWeights weights_;
};

}  // namespace memop
