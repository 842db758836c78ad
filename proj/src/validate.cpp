#include "memop/validate.hpp"

#include <algorithm>
#include <cmath>

#include "memop/text.hpp"
#include "memop/time.hpp"

namespace memop {

using nlohmann::json;

json to_json(const Diagnostic& d) {
    return json{{"code", d.code}, {"path", d.path}, {"rule", d.rule}, {"message", d.message}};
}

json to_json(const ValidationReport& r) {
    json diags = json::array();
    for (const auto& d : r.diagnostics) diags.push_back(to_json(d));
    return json{{"ok", r.ok}, {"diagnostics", std::move(diags)}};
}

namespace {

constexpr const char* kLabelModes[] = {"add", "replace", "remove"};
constexpr const char* kDeleteModes[] = {"soft", "hard"};
constexpr const char* kSplitStrategies[] = {"sentences", "chunks"};
constexpr const char* kExpireActions[] = {"delete_soft", "demote", "archive", "anonymize"};
constexpr const char* kOrderBy[] = {"relevance", "time_desc", "time_asc"};
constexpr const char* kReservedSetFields[] = {"id",   "lineage", "parent_id",
                                              "merged_into", "lock",    "deleted"};

template <std::size_t N>
bool one_of(const std::string& v, const char* const (&values)[N]) {
    return std::find(std::begin(values), std::end(values), v) != std::end(values);
}

class Checker {
public:
    explicit Checker(const SchemaInstance& inst) : inst_(inst) {}

    ValidationReport run() {
        check_stage();
        check_target();
        check_args();
        check_meta();
        report_.ok = report_.diagnostics.empty();
        return std::move(report_);
    }

private:
    void add(std::string code, std::string path, std::string rule, std::string message) {
        report_.diagnostics.push_back(
            {std::move(code), std::move(path), std::move(rule), std::move(message)});
    }

    void check_timestamp(const std::optional<Timestamp>& ts, const std::string& path) {
        if (ts && !parse_rfc3339(ts->text))
            add("E_BAD_VALUE", path, "shape", "not an RFC 3339 timestamp: \"" + ts->text + "\"");
    }

    void check_positive(const std::optional<std::int64_t>& v, const std::string& path,
                        const char* what) {
        if (v && *v < 1)
            add("E_RANGE", path, "R12", std::string(what) + " must be >= 1");
    }

    void check_weight_value(const std::optional<double>& v, const std::string& path) {
        if (v && (!std::isfinite(*v) || *v < 0.0 || *v > 1.0))
            add("E_RANGE", path, "R12", "weight must lie in [0, 1]");
    }

    void check_stage() {
        const Stage derived = infer_stage(inst_.op);
        if (inst_.stage && *inst_.stage != to_string(derived))
            add("E_STAGE_MISMATCH", "/stage", "R10",
                "stage \"" + *inst_.stage + "\" does not match " +
                    std::string(to_string(inst_.op)) + "'s stage " + to_string(derived));
    }

    void check_target() {
        const bool has_target = inst_.target.has_value();
        if (inst_.op == OpKind::Encode) {
            if (has_target)
                add("E_TARGET_ARITY", "/target", "R11", "Encode does not take a target");
            return;
        }
        if (!has_target) {
            add("E_TARGET_ARITY", "/target", "R11",
                std::string(to_string(inst_.op)) + " requires a target");
            return;
        }

        const Stage derived = infer_stage(inst_.op);
        std::visit(
            [&](const auto& t) {
                using T = std::decay_t<decltype(t)>;
                if constexpr (std::is_same_v<T, FilterSpec>) {
                    check_filter(t, derived);
                } else if constexpr (std::is_same_v<T, SearchSpec>) {
                    check_search(t, derived);
                } else if constexpr (std::is_same_v<T, AllTarget>) {
                    if (!inst_.meta.confirmed() && !inst_.meta.is_dry_run())
                        add("E_CONFIRM_REQUIRED", "/target/all", "R8",
                            "targeting all items requires confirmation or dry_run");
                    if (derived == Stage::Ret && !inst_.meta.confirmed())
                        add("E_CONFIRM_RETRIEVAL", "/target/all", "R9",
                            "retrieval over all items requires explicit confirmation");
                }
            },
            *inst_.target);
    }

    void check_filter(const FilterSpec& f, Stage derived) {
        const bool has_predicate =
            !f.has_tags.empty() || f.type || f.time_range || f.weight_range;
        if (!has_predicate)
            add("E_EMPTY_FILTER", "/target/filter", "shape",
                "filter needs at least one predicate besides limit");
        if (derived == Stage::Sto && !f.limit)
            add("E_MISSING_LIMIT", "/target/filter", "R7",
                "storage-stage filter targets require a limit");
        check_positive(f.limit, "/target/filter/limit", "limit");
        if (f.time_range) {
            check_timestamp(f.time_range->start, "/target/filter/time_range/start");
            check_timestamp(f.time_range->end, "/target/filter/time_range/end");
            if (f.time_range->start && f.time_range->end &&
                parse_rfc3339(f.time_range->start->text) &&
                parse_rfc3339(f.time_range->end->text) &&
                f.time_range->start->unix_nanos > f.time_range->end->unix_nanos)
                add("E_RANGE", "/target/filter/time_range", "R12",
                    "time_range start is after end");
        }
        if (f.weight_range) {
            if (!std::isfinite(f.weight_range->min) || !std::isfinite(f.weight_range->max) ||
                f.weight_range->min < 0.0 || f.weight_range->max > 1.0 ||
                f.weight_range->min > f.weight_range->max)
                add("E_RANGE", "/target/filter/weight_range", "R12",
                    "weight_range must satisfy 0 <= min <= max <= 1");
        }
    }

    void check_search(const SearchSpec& s, Stage derived) {
        if (normalize_whitespace(s.query).empty())
            add("E_EMPTY_QUERY", "/target/search/intent/query", "shape",
                "search query must be non-empty");
        if (s.overrides.order_by && !one_of(*s.overrides.order_by, kOrderBy))
            add("E_BAD_ENUM", "/target/search/overrides/order_by", "shape",
                "order_by must be one of relevance, time_desc, time_asc");
        const bool has_limit = s.limit || s.overrides.limit || s.overrides.k;
        if (derived == Stage::Sto && !has_limit)
            add("E_MISSING_LIMIT", "/target/search", "R7",
                "storage-stage search targets require a limit (limit or overrides.k)");
        check_positive(s.limit, "/target/search/limit", "limit");
        check_positive(s.overrides.limit, "/target/search/overrides/limit", "limit");
        check_positive(s.overrides.k, "/target/search/overrides/k", "k");
    }

    void check_args() {
        std::visit([&](const auto& a) { check_op_args(a); }, inst_.args);
    }

    void check_op_args(const EncodeArgs& a) {
        if (!a.payload_text || normalize_whitespace(*a.payload_text).empty())
            add("E_MISSING_PAYLOAD", "/args/payload/text", "R1",
                "Encode requires a non-empty payload.text");
        check_timestamp(a.time, "/args/time");
    }

    void check_op_args(const UpdateArgs& a) {
        if (a.set.empty()) {
            add("E_EMPTY_SET", "/args/set", "R3", "Update requires a non-empty set");
            return;
        }
        for (auto it = a.set.begin(); it != a.set.end(); ++it) {
            if (one_of(it.key(), kReservedSetFields))
                add("E_RESERVED_FIELD", "/args/set/" + it.key(), "R14",
                    "\"" + it.key() + "\" cannot be written through Update");
        }
        if (a.set.contains("weight") && a.set["weight"].is_number()) {
            const double w = a.set["weight"].get<double>();
            if (!std::isfinite(w) || w < 0.0 || w > 1.0)
                add("E_RANGE", "/args/set/weight", "R12", "weight must lie in [0, 1]");
        }
    }

    void check_op_args(const LabelArgs& a) {
        if (a.tags.empty() && a.facets.empty())
            add("E_LABEL_EMPTY", "/args", "R2", "Label requires tags or facets");
        if (a.mode && !one_of(*a.mode, kLabelModes))
            add("E_BAD_ENUM", "/args/mode", "shape",
                "label mode must be one of add, replace, remove");
    }

    void check_op_args(const PromoteArgs& a) {
        if (a.weight.has_value() == a.weight_delta.has_value())
            add("E_WEIGHT_CONFLICT", "/args", "R4",
                "Promote requires exactly one of weight or weight_delta");
        check_weight_value(a.weight, "/args/weight");
        check_delta(a.weight_delta);
        if (a.reminder) check_timestamp(a.reminder->at, "/args/reminder/at");
    }

    void check_op_args(const DemoteArgs& a) {
        if (a.weight.has_value() == a.weight_delta.has_value())
            add("E_WEIGHT_CONFLICT", "/args", "R4",
                "Demote requires exactly one of weight or weight_delta");
        check_weight_value(a.weight, "/args/weight");
        check_delta(a.weight_delta);
    }

    void check_delta(const std::optional<double>& delta) {
        if (delta && (!std::isfinite(*delta) || *delta < -1.0 || *delta > 1.0))
            add("E_RANGE", "/args/weight_delta", "R12", "weight_delta must lie in [-1, 1]");
    }

    void check_op_args(const MergeArgs&) {}

    void check_op_args(const DeleteArgs& a) {
        if (a.mode && !one_of(*a.mode, kDeleteModes))
            add("E_BAD_ENUM", "/args/mode", "shape", "delete mode must be soft or hard");
        const bool hard = a.mode && *a.mode == "hard";
        if (hard && !inst_.meta.confirmed() && !inst_.meta.is_dry_run())
            add("E_CONFIRM_HARD_DELETE", "/args/mode", "R13",
                "hard delete requires confirmation or dry_run");
    }

    void check_op_args(const SplitArgs& a) {
        if (!a.strategy) {
            add("E_MISSING_FIELD", "/args/strategy", "shape", "Split requires a strategy");
            return;
        }
        if (!one_of(*a.strategy, kSplitStrategies)) {
            add("E_BAD_ENUM", "/args/strategy", "shape",
                "split strategy must be sentences or chunks");
            return;
        }
        if (*a.strategy == "chunks" && !a.chunk_size)
            add("E_MISSING_FIELD", "/args/chunk_size", "shape",
                "chunk splitting requires chunk_size");
        check_positive(a.chunk_size, "/args/chunk_size", "chunk_size");
    }

    void check_op_args(const LockArgs& a) {
        if (!a.mode || (*a.mode != "read_only" && *a.mode != "append_only")) {
            add("E_LOCK_MODE", "/args/mode", "R6",
                a.mode ? "lock mode must be read_only or append_only"
                       : "Lock requires a mode");
        }
        if (a.policy) {
            check_op_list(a.policy->allow, "/args/policy/allow");
            check_op_list(a.policy->deny, "/args/policy/deny");
            check_timestamp(a.policy->expires, "/args/policy/expires");
        }
    }

    void check_op_list(const std::vector<std::string>& ops, const std::string& base) {
        for (std::size_t i = 0; i < ops.size(); ++i) {
            if (!op_from_string(ops[i]))
                add("E_BAD_ENUM", base + "/" + std::to_string(i), "shape",
                    "\"" + ops[i] + "\" is not an operation name");
        }
    }

    void check_op_args(const ExpireArgs& a) {
        if (a.ttl.has_value() == a.until.has_value())
            add("E_EXPIRE_HORIZON", "/args", "R5",
                "Expire requires exactly one of ttl or until");
        if (a.ttl && !parse_iso8601_duration(*a.ttl))
            add("E_BAD_VALUE", "/args/ttl", "shape",
                "not an ISO 8601 duration: \"" + *a.ttl + "\"");
        check_timestamp(a.until, "/args/until");
        if (a.on_expire && !one_of(*a.on_expire, kExpireActions))
            add("E_BAD_ENUM", "/args/on_expire", "shape",
                "on_expire must be one of delete_soft, demote, archive, anonymize");
    }

    void check_op_args(const RetrieveArgs&) {}

    void check_op_args(const SummarizeArgs& a) {
        check_positive(a.max_tokens, "/args/max_tokens", "max_tokens");
    }

    void check_meta() {
        check_timestamp(inst_.meta.timestamp, "/meta/timestamp");
        if (inst_.meta.lang && inst_.meta.lang->empty())
            add("E_BAD_VALUE", "/meta/lang", "shape", "lang must be non-empty when present");
    }

    const SchemaInstance& inst_;
    ValidationReport report_;
};

}  // namespace

ValidationReport validate(const SchemaInstance& inst) {
    return Checker(inst).run();
}

}  // namespace memop
