#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "memop/schema.hpp"

namespace memop {

enum class OrderBy { Relevance, TimeDesc, TimeAsc };
enum class LabelMode { Add, Replace, Remove };
enum class DeleteMode { Soft, Hard };
enum class SplitStrategy { Sentences, Chunks };
enum class LockMode { ReadOnly, AppendOnly };
enum class ExpireAction { DeleteSoft, Demote, Archive, Anonymize };

const char* to_string(LockMode mode);
const char* to_string(ExpireAction action);

// Closed interval in UTC nanoseconds; absent bounds widen to the extremes.
struct TimeRange {
    std::int64_t start_ns = std::numeric_limits<std::int64_t>::min();
    std::int64_t end_ns = std::numeric_limits<std::int64_t>::max();
};

struct ResolvedIds {
    std::vector<std::string> ids;  // deduped, first occurrence wins
};

struct ResolvedFilter {
    std::vector<std::string> has_tags;
    std::optional<std::string> type;
    std::optional<TimeRange> time_range;
    std::optional<std::pair<double, double>> weight_range;
    std::optional<std::int64_t> limit;
};

struct ResolvedSearch {
    std::string query;
    std::optional<std::string> context;
    OrderBy order_by = OrderBy::Relevance;
    std::optional<std::int64_t> limit;  // min over limit/overrides, absent = unbounded
};

struct ResolvedAll {};

using ResolvedTarget = std::variant<ResolvedIds, ResolvedFilter, ResolvedSearch, ResolvedAll>;

struct TypedEncode {
    std::string text;
    std::vector<std::string> tags;
    std::optional<std::string> type;
    std::optional<Timestamp> time;
    std::optional<std::string> source;
    std::optional<std::string> location;
    std::map<std::string, std::string> facets;
    bool use_embedding = true;
};

struct TypedUpdate {
    nlohmann::json set;
};

struct TypedLabel {
    std::vector<std::string> tags;
    std::map<std::string, std::string> facets;
    LabelMode mode = LabelMode::Add;
};

struct TypedReminder {
    std::optional<std::string> cadence;
    std::optional<std::int64_t> at_ns;
};

struct TypedPromote {
    std::optional<double> weight;
    std::optional<double> weight_delta;
    std::optional<TypedReminder> reminder;
};

struct TypedDemote {
    std::optional<double> weight;
    std::optional<double> weight_delta;
    bool archive = false;
};

struct TypedMerge {
    std::optional<std::string> strategy;
    bool delete_children = false;
};

struct TypedDelete {
    DeleteMode mode = DeleteMode::Soft;
};

struct TypedSplit {
    SplitStrategy strategy = SplitStrategy::Sentences;
    std::int64_t chunk_size = 0;
};

struct TypedLock {
    LockMode mode = LockMode::ReadOnly;
    std::optional<std::string> reason;
    std::vector<OpKind> allow;
    std::vector<OpKind> deny;
    std::vector<std::string> reviewers;
    std::optional<std::int64_t> expires_ns;
};

struct TypedExpire {
    std::int64_t until_ns = 0;  // ttl is folded onto the anchor clock here
    ExpireAction on_expire = ExpireAction::DeleteSoft;
};

struct TypedRetrieve {
    std::vector<std::string> fields;
};

struct TypedSummarize {
    std::string focus;
    std::int64_t max_tokens = 256;
};

using TypedArgs = std::variant<TypedEncode, TypedUpdate, TypedLabel, TypedPromote, TypedDemote,
                               TypedMerge, TypedDelete, TypedSplit, TypedLock, TypedExpire,
                               TypedRetrieve, TypedSummarize>;

struct TypedMeta {
    std::optional<std::string> actor;
    std::optional<Timestamp> timestamp;
    std::optional<std::string> lang;
    bool confirmation = false;
    bool dry_run = false;
};

struct TypedOp {
    OpKind op = OpKind::Encode;
    Stage stage = Stage::Enc;
    std::optional<ResolvedTarget> target;
    TypedArgs args = TypedEncode{};
    TypedMeta meta;

    nlohmann::json debug_json() const;
};

class ParseError : public std::runtime_error {
public:
    enum class Code { InconsistentInstance, UnresolvableTime, InvertedRange };

    ParseError(Code code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Code code() const { return code_; }

private:
    Code code_;
};

// Anchor clock for relative horizons (ttl). parse() itself never consults
// the wall clock; callers inject one when meta.timestamp is absent.
struct ParseContext {
    std::optional<Timestamp> reference_time;
};

// Normalizes a validated instance: derives the stage, dedups ids/tags,
// materializes defaults, folds ttl onto the anchor clock, converts time
// ranges to UTC nanoseconds, clamps weight ranges, and folds overrides.k
// into the effective search limit. Feeding an instance the validator
// rejected throws ParseError{InconsistentInstance}.
TypedOp parse(const SchemaInstance& inst, const ParseContext& ctx = {});

// current weight combined with at most one adjustment, clamped to [0, 1]
double normalize_weight(double current, std::optional<double> set_weight,
                        std::optional<double> delta);

TimeRange normalize_time_range(const std::optional<Timestamp>& start,
                               const std::optional<Timestamp>& end);

}  // namespace memop
