#include "memop/typed_ops.hpp"

#include <algorithm>
#include <unordered_set>

#include "memop/time.hpp"
#include "memop/validate.hpp"

namespace memop {

using nlohmann::json;

const char* to_string(LockMode mode) {
    return mode == LockMode::ReadOnly ? "read_only" : "append_only";
}

const char* to_string(ExpireAction action) {
    switch (action) {
        case ExpireAction::DeleteSoft: return "delete_soft";
        case ExpireAction::Demote: return "demote";
        case ExpireAction::Archive: return "archive";
        case ExpireAction::Anonymize: return "anonymize";
    }
    return "?";
}

namespace {

std::vector<std::string> dedup_keep_first(const std::vector<std::string>& in) {
    std::vector<std::string> out;
    std::unordered_set<std::string_view> seen;
    out.reserve(in.size());
    for (const auto& s : in) {
        if (seen.insert(s).second) out.push_back(s);
    }
    return out;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::optional<std::int64_t> min_present(std::initializer_list<std::optional<std::int64_t>> vs) {
    std::optional<std::int64_t> out;
    for (const auto& v : vs) {
        if (v && (!out || *v < *out)) out = *v;
    }
    return out;
}

ResolvedTarget resolve_target_spec(const Target& target) {
    return std::visit(
        [](const auto& t) -> ResolvedTarget {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, IdsTarget>) {
                return ResolvedIds{dedup_keep_first(t.ids)};
            } else if constexpr (std::is_same_v<T, FilterSpec>) {
                ResolvedFilter f;
                f.has_tags = dedup_keep_first(t.has_tags);
                f.type = t.type;
                if (t.time_range)
                    f.time_range =
                        normalize_time_range(t.time_range->start, t.time_range->end);
                if (t.weight_range)
                    f.weight_range = std::make_pair(clamp01(t.weight_range->min),
                                                    clamp01(t.weight_range->max));
                f.limit = t.limit;
                return f;
            } else if constexpr (std::is_same_v<T, SearchSpec>) {
                ResolvedSearch s;
                s.query = t.query;
                s.context = t.context;
                if (t.overrides.order_by) {
                    if (*t.overrides.order_by == "time_desc") s.order_by = OrderBy::TimeDesc;
                    else if (*t.overrides.order_by == "time_asc") s.order_by = OrderBy::TimeAsc;
                }
                s.limit = min_present({t.limit, t.overrides.limit, t.overrides.k});
                return s;
            } else {
                return ResolvedAll{};
            }
        },
        target);
}

std::vector<OpKind> parse_op_list(const std::vector<std::string>& names) {
    std::vector<OpKind> out;
    for (const auto& name : names) {
        auto op = op_from_string(name);
        if (op && std::find(out.begin(), out.end(), *op) == out.end()) out.push_back(*op);
    }
    return out;
}

TypedArgs resolve_args(const SchemaInstance& inst, const ParseContext& ctx) {
    return std::visit(
        [&](const auto& a) -> TypedArgs {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, EncodeArgs>) {
                TypedEncode typed;
                typed.text = a.payload_text.value_or("");
                typed.tags = dedup_keep_first(a.tags);
                typed.type = a.type;
                typed.time = a.time;
                typed.source = a.source;
                typed.location = a.location;
                typed.facets = a.facets;
                typed.use_embedding = a.use_embedding.value_or(true);
                return typed;
            } else if constexpr (std::is_same_v<T, UpdateArgs>) {
                return TypedUpdate{a.set};
            } else if constexpr (std::is_same_v<T, LabelArgs>) {
                TypedLabel typed;
                typed.tags = dedup_keep_first(a.tags);
                typed.facets = a.facets;
                if (a.mode) {
                    if (*a.mode == "replace") typed.mode = LabelMode::Replace;
                    else if (*a.mode == "remove") typed.mode = LabelMode::Remove;
                }
                return typed;
            } else if constexpr (std::is_same_v<T, PromoteArgs>) {
                TypedPromote typed;
                typed.weight = a.weight;
                typed.weight_delta = a.weight_delta;
                if (a.reminder) {
                    TypedReminder rem;
                    rem.cadence = a.reminder->cadence;
                    if (a.reminder->at) rem.at_ns = a.reminder->at->unix_nanos;
                    typed.reminder = rem;
                }
                return typed;
            } else if constexpr (std::is_same_v<T, DemoteArgs>) {
                TypedDemote typed;
                typed.weight = a.weight;
                typed.weight_delta = a.weight_delta;
                typed.archive = a.archive.value_or(false);
                return typed;
            } else if constexpr (std::is_same_v<T, MergeArgs>) {
                return TypedMerge{a.strategy, a.delete_children.value_or(false)};
            } else if constexpr (std::is_same_v<T, DeleteArgs>) {
                TypedDelete typed;
                if (a.mode && *a.mode == "hard") typed.mode = DeleteMode::Hard;
                return typed;
            } else if constexpr (std::is_same_v<T, SplitArgs>) {
                TypedSplit typed;
                if (a.strategy && *a.strategy == "chunks") {
                    typed.strategy = SplitStrategy::Chunks;
                    typed.chunk_size = a.chunk_size.value_or(0);
                }
                return typed;
            } else if constexpr (std::is_same_v<T, LockArgs>) {
                TypedLock typed;
                if (a.mode && *a.mode == "append_only") typed.mode = LockMode::AppendOnly;
                typed.reason = a.reason;
                if (a.policy) {
                    typed.allow = parse_op_list(a.policy->allow);
                    typed.deny = parse_op_list(a.policy->deny);
                    typed.reviewers = dedup_keep_first(a.policy->reviewers);
                    if (a.policy->expires) typed.expires_ns = a.policy->expires->unix_nanos;
                }
                return typed;
            } else if constexpr (std::is_same_v<T, ExpireArgs>) {
                TypedExpire typed;
                if (a.until) {
                    typed.until_ns = a.until->unix_nanos;
                } else {
                    // ttl must be folded onto a real instant
                    std::optional<std::int64_t> anchor;
                    if (inst.meta.timestamp) anchor = inst.meta.timestamp->unix_nanos;
                    else if (ctx.reference_time) anchor = ctx.reference_time->unix_nanos;
                    if (!anchor)
                        throw ParseError(ParseError::Code::UnresolvableTime,
                                         "ttl given without meta.timestamp or a reference clock");
                    auto ttl = parse_iso8601_duration(a.ttl.value_or(""));
                    if (!ttl)
                        throw ParseError(ParseError::Code::InconsistentInstance,
                                         "unparseable ttl");
                    typed.until_ns = add_duration(*anchor, *ttl);
                }
                if (a.on_expire) {
                    if (*a.on_expire == "demote") typed.on_expire = ExpireAction::Demote;
                    else if (*a.on_expire == "archive") typed.on_expire = ExpireAction::Archive;
                    else if (*a.on_expire == "anonymize")
                        typed.on_expire = ExpireAction::Anonymize;
                }
                return typed;
            } else if constexpr (std::is_same_v<T, RetrieveArgs>) {
                return TypedRetrieve{dedup_keep_first(a.fields)};
            } else {
                const SummarizeArgs& s = a;
                TypedSummarize typed;
                typed.focus = s.focus.value_or("");
                typed.max_tokens = s.max_tokens.value_or(256);
                return typed;
            }
        },
        inst.args);
}

}  // namespace

double normalize_weight(double current, std::optional<double> set_weight,
                        std::optional<double> delta) {
    if (set_weight) return clamp01(*set_weight);
    if (delta) return clamp01(current + *delta);
    return clamp01(current);
}

TimeRange normalize_time_range(const std::optional<Timestamp>& start,
                               const std::optional<Timestamp>& end) {
    TimeRange range;
    if (start) range.start_ns = start->unix_nanos;
    if (end) range.end_ns = end->unix_nanos;
    if (start && end && range.start_ns > range.end_ns)
        throw ParseError(ParseError::Code::InvertedRange, "time range start is after end");
    return range;
}

TypedOp parse(const SchemaInstance& inst, const ParseContext& ctx) {
    ValidationReport report = validate(inst);
    if (!report.ok) {
        std::string msg = "instance fails validation:";
        for (const auto& d : report.diagnostics) msg += " " + d.code;
        throw ParseError(ParseError::Code::InconsistentInstance, msg);
    }

    TypedOp typed;
    typed.op = inst.op;
    typed.stage = infer_stage(inst.op);
    if (inst.target) typed.target = resolve_target_spec(*inst.target);
    typed.args = resolve_args(inst, ctx);
    typed.meta.actor = inst.meta.actor;
    typed.meta.timestamp = inst.meta.timestamp;
    typed.meta.lang = inst.meta.lang;
    typed.meta.confirmation = inst.meta.confirmed();
    typed.meta.dry_run = inst.meta.is_dry_run();
    return typed;
}

json TypedOp::debug_json() const {
    json j;
    j["op"] = to_string(op);
    j["stage"] = to_string(stage);
    if (target) {
        std::visit(
            [&](const auto& t) {
                using T = std::decay_t<decltype(t)>;
                if constexpr (std::is_same_v<T, ResolvedIds>) {
                    j["target"] = {{"ids", t.ids}};
                } else if constexpr (std::is_same_v<T, ResolvedFilter>) {
                    json f = json::object();
                    if (!t.has_tags.empty()) f["has_tags"] = t.has_tags;
                    if (t.type) f["type"] = *t.type;
                    if (t.time_range)
                        f["time_range"] = {{"start_ns", t.time_range->start_ns},
                                           {"end_ns", t.time_range->end_ns}};
                    if (t.weight_range)
                        f["weight_range"] = {{"min", t.weight_range->first},
                                             {"max", t.weight_range->second}};
                    if (t.limit) f["limit"] = *t.limit;
                    j["target"] = {{"filter", std::move(f)}};
                } else if constexpr (std::is_same_v<T, ResolvedSearch>) {
                    json s = {{"query", t.query}};
                    if (t.context) s["context"] = *t.context;
                    s["order_by"] = t.order_by == OrderBy::Relevance   ? "relevance"
                                    : t.order_by == OrderBy::TimeDesc ? "time_desc"
                                                                      : "time_asc";
                    if (t.limit) s["limit"] = *t.limit;
                    j["target"] = {{"search", std::move(s)}};
                } else {
                    j["target"] = {{"all", true}};
                }
            },
            *target);
    }
    j["dry_run"] = meta.dry_run;
    j["confirmation"] = meta.confirmation;
    return j;
}

}  // namespace memop
