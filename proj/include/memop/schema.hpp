#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "memop/time.hpp"

namespace memop {

enum class OpKind {
    Encode,
    Update,
    Label,
    Promote,
    Demote,
    Merge,
    Delete,
    Split,
    Lock,
    Expire,
    Retrieve,
    Summarize,
};

inline constexpr std::array<OpKind, 12> kAllOps = {
    OpKind::Encode, OpKind::Update, OpKind::Label,    OpKind::Promote,
    OpKind::Demote, OpKind::Merge,  OpKind::Delete,   OpKind::Split,
    OpKind::Lock,   OpKind::Expire, OpKind::Retrieve, OpKind::Summarize,
};

enum class Stage { Enc, Sto, Ret };

const char* to_string(OpKind op);
const char* to_string(Stage stage);
std::optional<OpKind> op_from_string(std::string_view s);
std::optional<Stage> stage_from_string(std::string_view s);

// Stage is a function of the verb: Encode writes, Retrieve/Summarize read,
// everything else manages what is already stored.
Stage infer_stage(OpKind op);

// ---- target ----------------------------------------------------------------

struct TimeRangeSpec {
    std::optional<Timestamp> start;
    std::optional<Timestamp> end;
};

struct WeightRangeSpec {
    double min = 0.0;
    double max = 0.0;
};

struct FilterSpec {
    std::vector<std::string> has_tags;
    std::optional<std::string> type;
    std::optional<TimeRangeSpec> time_range;
    std::optional<WeightRangeSpec> weight_range;
    std::optional<std::int64_t> limit;
};

struct SearchOverrides {
    std::optional<std::int64_t> k;
    std::optional<std::string> order_by;
    std::optional<std::int64_t> limit;
};

struct SearchSpec {
    std::string query;
    std::optional<std::string> context;
    SearchOverrides overrides;
    std::optional<std::int64_t> limit;
};

struct IdsTarget {
    std::vector<std::string> ids;
};

struct AllTarget {};

using Target = std::variant<IdsTarget, FilterSpec, SearchSpec, AllTarget>;

// ---- per-op arguments -------------------------------------------------------

struct EncodeArgs {
    std::optional<std::string> payload_text;
    std::vector<std::string> tags;
    std::optional<std::string> type;
    std::optional<Timestamp> time;
    std::optional<std::string> source;
    std::optional<std::string> location;
    std::map<std::string, std::string> facets;
    std::optional<bool> use_embedding;
};

struct UpdateArgs {
    nlohmann::json set = nlohmann::json::object();
};

struct LabelArgs {
    std::vector<std::string> tags;
    std::map<std::string, std::string> facets;
    std::optional<std::string> mode;
};

struct ReminderSpec {
    std::optional<std::string> cadence;
    std::optional<Timestamp> at;
};

struct PromoteArgs {
    std::optional<double> weight;
    std::optional<double> weight_delta;
    std::optional<ReminderSpec> reminder;
};

struct DemoteArgs {
    std::optional<double> weight;
    std::optional<double> weight_delta;
    std::optional<bool> archive;
};

struct MergeArgs {
    std::optional<std::string> strategy;
    std::optional<bool> delete_children;
};

struct DeleteArgs {
    std::optional<std::string> mode;
};

struct SplitArgs {
    std::optional<std::string> strategy;
    std::optional<std::int64_t> chunk_size;
};

struct LockPolicy {
    std::vector<std::string> allow;
    std::vector<std::string> deny;
    std::vector<std::string> reviewers;
    std::optional<Timestamp> expires;
};

struct LockArgs {
    std::optional<std::string> mode;
    std::optional<std::string> reason;
    std::optional<LockPolicy> policy;
};

struct ExpireArgs {
    std::optional<std::string> ttl;
    std::optional<Timestamp> until;
    std::optional<std::string> on_expire;
};

struct RetrieveArgs {
    std::vector<std::string> fields;
};

struct SummarizeArgs {
    std::optional<std::string> focus;
    std::optional<std::int64_t> max_tokens;
};

using OpArgs = std::variant<EncodeArgs, UpdateArgs, LabelArgs, PromoteArgs, DemoteArgs,
                            MergeArgs, DeleteArgs, SplitArgs, LockArgs, ExpireArgs,
                            RetrieveArgs, SummarizeArgs>;

struct Meta {
    std::optional<std::string> actor;
    std::optional<Timestamp> timestamp;
    std::optional<std::string> lang;
    std::optional<bool> confirmation;
    std::optional<bool> dry_run;

    bool confirmed() const { return confirmation.value_or(false); }
    bool is_dry_run() const { return dry_run.value_or(false); }
};

// One decoded operation instance. Optionals preserve presence so the
// canonical encoder can drop what was never written; `stage` keeps the raw
// input string (possibly disagreeing with the verb) for the validator.
struct SchemaInstance {
    std::optional<std::string> stage;
    OpKind op = OpKind::Encode;
    std::optional<Target> target;
    OpArgs args = EncodeArgs{};
    Meta meta;
};

// ---- decode / encode --------------------------------------------------------

class DecodeError : public std::runtime_error {
public:
    enum class Code { MalformedJson, UnknownField, UnknownOp, TypeMismatch };

    DecodeError(Code code, std::string path, const std::string& message)
        : std::runtime_error(message), code_(code), path_(std::move(path)) {}

    Code code() const { return code_; }
    const std::string& path() const { return path_; }

private:
    Code code_;
    std::string path_;
};

const char* to_string(DecodeError::Code code);

// Strict shape decoding: unknown keys, wrong JSON types, unknown verbs, and
// targets that do not populate exactly one variant are rejected. Field
// semantics (ranges, enums, cross-field rules) are the validator's job.
SchemaInstance decode_instance(std::string_view json_text);
SchemaInstance decode_instance(const nlohmann::json& j);

// Canonical form: lexicographically sorted keys, compact separators, absent
// optionals and empty containers omitted, timestamps re-emitted verbatim.
nlohmann::json encode_instance_json(const SchemaInstance& inst);
std::string encode_instance(const SchemaInstance& inst);

}  // namespace memop
