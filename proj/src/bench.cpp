#include "memop/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "memop/text.hpp"
#include "memop/time.hpp"

namespace memop {

using nlohmann::json;

PipelineOutcome execute_pipeline(const json& raw, MemoryStore& store, std::int64_t now_ns,
                                 const std::optional<Timestamp>& clock,
                                 std::optional<bool> force_dry_run) {
    PipelineOutcome out;
    SchemaInstance inst;
    try {
        inst = decode_instance(raw);
    } catch (const DecodeError& e) {
        out.phase = PipelineOutcome::Phase::Decode;
        out.result = ExecutionResult::failure(
            OpKind::Encode,
            {std::string("E_DECODE"), e.path(), "decode",
             std::string(to_string(e.code())) + ": " + e.what()});
        return out;
    }
    if (force_dry_run.value_or(false)) inst.meta.dry_run = true;
    out.instance = inst;

    out.phase = PipelineOutcome::Phase::Validate;
    ValidationReport report = validate(inst);
    if (!report.ok) {
        out.result.status = ExecutionResult::Status::Error;
        out.result.op = inst.op;
        out.result.diagnostics = report.diagnostics;
        return out;
    }

    out.phase = PipelineOutcome::Phase::Parse;
    TypedOp typed;
    try {
        typed = parse(inst, ParseContext{clock});
    } catch (const ParseError& e) {
        out.result = ExecutionResult::failure(inst.op, {"E_PARSE", "", "exec", e.what()});
        return out;
    }

    out.phase = PipelineOutcome::Phase::Execute;
    out.result = dispatch(typed, store, now_ns);
    return out;
}

// ---- loaders ------------------------------------------------------------------

namespace {

constexpr const char* kAssertionKinds[] = {"encode",  "update", "label",    "promote",
                                           "demote",  "merge",  "delete",   "split",
                                           "lock",    "expire", "retrieve", "summarize",
                                           "sql"};

bool known_assertion_kind(const std::string& kind) {
    return std::find(std::begin(kAssertionKinds), std::end(kAssertionKinds), kind) !=
           std::end(kAssertionKinds);
}

std::optional<std::string> instance_problem(const json& raw) {
    try {
        SchemaInstance inst = decode_instance(raw);
        ValidationReport report = validate(inst);
        if (!report.ok) {
            std::string codes;
            for (const auto& d : report.diagnostics) {
                if (!codes.empty()) codes += ",";
                codes += d.code;
            }
            return "fails validation (" + codes + ")";
        }
    } catch (const DecodeError& e) {
        return std::string("fails decode (") + e.what() + ")";
    }
    return std::nullopt;
}

}  // namespace

CaseFile load_cases(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw BenchError(BenchError::Code::Io, "cannot open case file: " + path);

    CaseFile out;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    auto reject = [&](const std::string& why) {
        out.diagnostics.push_back("line " + std::to_string(line_no) + ": " + why);
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            reject("not a JSON object");
            continue;
        }

        static const std::set<std::string> kKeys = {
            "case_id",      "nl",         "instruction_type", "structure",
            "prerequisites", "schema_list", "expectations",     "clock"};
        bool bad = false;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!kKeys.count(it.key())) {
                reject("unknown key \"" + it.key() + "\"");
                bad = true;
                break;
            }
        }
        if (bad) continue;

        BenchCase c;
        c.line = line_no;
        if (!j.contains("case_id") || !j["case_id"].is_string() ||
            j["case_id"].get<std::string>().empty()) {
            reject("case_id must be a non-empty string");
            continue;
        }
        c.case_id = j["case_id"].get<std::string>();
        if (seen_ids.count(c.case_id)) {
            reject("duplicate case_id \"" + c.case_id + "\"");
            continue;
        }

        if (!j.contains("nl") || !j["nl"].is_object() || j["nl"].empty()) {
            reject("nl must be an object with at least one language");
            continue;
        }
        for (auto it = j["nl"].begin(); it != j["nl"].end() && !bad; ++it) {
            if (!it.value().is_string()) {
                reject("nl values must be strings");
                bad = true;
            } else {
                c.nl[it.key()] = it.value().get<std::string>();
            }
        }
        if (bad) continue;

        c.instruction_type = j.value("instruction_type", "");
        if (c.instruction_type != "direct" && c.instruction_type != "indirect") {
            reject("instruction_type must be direct or indirect");
            continue;
        }
        c.structure = j.value("structure", "");
        if (c.structure != "single" && c.structure != "workflow") {
            reject("structure must be single or workflow");
            continue;
        }

        if (j.contains("prerequisites")) {
            if (!j["prerequisites"].is_array()) {
                reject("prerequisites must be an array");
                continue;
            }
            for (std::size_t i = 0; i < j["prerequisites"].size() && !bad; ++i) {
                if (auto why = instance_problem(j["prerequisites"][i])) {
                    reject("prerequisites[" + std::to_string(i) + "] " + *why);
                    bad = true;
                } else {
                    c.prerequisites.push_back(decode_instance(j["prerequisites"][i]));
                }
            }
            if (bad) continue;
        }

        if (!j.contains("schema_list") || !j["schema_list"].is_array() ||
            j["schema_list"].empty()) {
            reject("schema_list must be a non-empty array");
            continue;
        }
        for (std::size_t i = 0; i < j["schema_list"].size() && !bad; ++i) {
            if (auto why = instance_problem(j["schema_list"][i])) {
                reject("schema_list[" + std::to_string(i) + "] " + *why);
                bad = true;
            } else {
                c.schema_list.push_back(decode_instance(j["schema_list"][i]));
            }
        }
        if (bad) continue;
        if (c.structure == "workflow" && c.schema_list.size() < 2) {
            reject("workflow cases need at least two instances");
            continue;
        }

        if (j.contains("expectations")) {
            if (!j["expectations"].is_array()) {
                reject("expectations must be an array");
                continue;
            }
            for (std::size_t i = 0; i < j["expectations"].size() && !bad; ++i) {
                const json& e = j["expectations"][i];
                if (!e.is_object() || !e.contains("kind") || !e["kind"].is_string()) {
                    reject("expectations[" + std::to_string(i) + "] needs a kind");
                    bad = true;
                    break;
                }
                Assertion a;
                a.kind = e["kind"].get<std::string>();
                if (!known_assertion_kind(a.kind)) {
                    reject("expectations[" + std::to_string(i) + "] unknown kind \"" +
                           a.kind + "\"");
                    bad = true;
                    break;
                }
                a.params = e.value("params", json::object());
                a.op_index = e.value("op_index", 0);
                if (a.op_index < 0 ||
                    a.op_index >= static_cast<int>(c.schema_list.size())) {
                    reject("expectations[" + std::to_string(i) + "] op_index out of range");
                    bad = true;
                    break;
                }
                c.expectations.push_back(std::move(a));
            }
            if (bad) continue;
        }

        if (j.contains("clock")) {
            if (!j["clock"].is_string()) {
                reject("clock must be an RFC 3339 string");
                continue;
            }
            auto ts = parse_timestamp(j["clock"].get<std::string>());
            if (!ts) {
                reject("clock is not a valid RFC 3339 timestamp");
                continue;
            }
            c.clock = ts;
        }

        seen_ids.insert(c.case_id);
        out.cases.push_back(std::move(c));
    }

    if (out.cases.empty()) {
        std::string msg = "no valid cases in " + path;
        if (!out.diagnostics.empty())
            msg += " (" + std::to_string(out.diagnostics.size()) + " lines rejected)";
        throw BenchError(BenchError::Code::NoValidCases, msg);
    }
    return out;
}

CandidateFile load_candidates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw BenchError(BenchError::Code::Io, "cannot open candidate file: " + path);

    CandidateFile out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("case_id") ||
            !j["case_id"].is_string() || !j.contains("schema_list") ||
            !j["schema_list"].is_array()) {
            out.diagnostics.push_back("line " + std::to_string(line_no) +
                                      ": expected {\"case_id\", \"schema_list\"}");
            continue;
        }
        const std::string id = j["case_id"].get<std::string>();
        if (out.lists.count(id)) {
            out.diagnostics.push_back("line " + std::to_string(line_no) +
                                      ": duplicate case_id \"" + id + "\" (first kept)");
            continue;
        }
        out.lists[id] = std::vector<json>(j["schema_list"].begin(), j["schema_list"].end());
    }
    return out;
}

// ---- metric helpers -------------------------------------------------------------

int eval_sma(const std::vector<json>& generated, const std::vector<SchemaInstance>& gold) {
    if (generated.size() != gold.size()) return 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        try {
            if (encode_instance(decode_instance(generated[i])) != encode_instance(gold[i]))
                return 0;
        } catch (const DecodeError&) {
            return 0;
        }
    }
    return 1;
}

double eval_sma_partial(const std::vector<json>& generated,
                        const std::vector<SchemaInstance>& gold) {
    const std::size_t longest = std::max(generated.size(), gold.size());
    if (longest == 0) return 1.0;
    const std::size_t overlap = std::min(generated.size(), gold.size());
    std::size_t matches = 0;
    for (std::size_t i = 0; i < overlap; ++i) {
        try {
            if (encode_instance(decode_instance(generated[i])) == encode_instance(gold[i]))
                ++matches;
        } catch (const DecodeError&) {
        }
    }
    return static_cast<double>(matches) / static_cast<double>(longest);
}

std::optional<double> kendall_tau(const std::vector<std::string>& expected,
                                  const std::vector<std::string>& actual) {
    std::vector<std::string> common;
    for (const auto& id : expected) {
        if (std::find(actual.begin(), actual.end(), id) != actual.end()) common.push_back(id);
    }
    if (common.size() < 2) return std::nullopt;
    auto pos_in = [](const std::vector<std::string>& v, const std::string& id) {
        return std::find(v.begin(), v.end(), id) - v.begin();
    };
    long concordant = 0, discordant = 0;
    for (std::size_t i = 0; i < common.size(); ++i) {
        for (std::size_t j = i + 1; j < common.size(); ++j) {
            const bool agrees = pos_in(actual, common[i]) < pos_in(actual, common[j]);
            (agrees ? concordant : discordant)++;
        }
    }
    return static_cast<double>(concordant - discordant) /
           static_cast<double>(concordant + discordant);
}

std::vector<Assertion> bind_assertions(const TypedOp& op, const ExecutionResult& result,
                                       int op_index, const BenchConfig& config) {
    Assertion a;
    a.op_index = op_index;
    switch (op.op) {
        case OpKind::Encode:
            a.kind = "encode";
            break;
        case OpKind::Update:
            a.kind = "update";
            a.params = {{"ids", result.affected_ids},
                        {"set", std::get<TypedUpdate>(op.args).set}};
            break;
        case OpKind::Label:
            a.kind = "label";
            a.params = {{"ids", result.affected_ids}};
            break;
        case OpKind::Promote:
            a.kind = "promote";
            a.params = {{"ids", result.affected_ids}};
            break;
        case OpKind::Demote:
            a.kind = "demote";
            a.params = {{"ids", result.affected_ids}};
            break;
        case OpKind::Merge: {
            a.kind = "merge";
            std::vector<std::string> sources(result.affected_ids.begin() +
                                                 (result.affected_ids.empty() ? 0 : 1),
                                             result.affected_ids.end());
            a.params = {{"source_ids", sources}};
            break;
        }
        case OpKind::Delete:
            a.kind = "delete";
            a.params = {{"n", -result.count_delta}};
            break;
        case OpKind::Split:
            a.kind = "split";
            a.params = {{"source_id",
                         result.affected_ids.empty() ? "" : result.affected_ids.front()}};
            break;
        case OpKind::Lock:
            a.kind = "lock";
            a.params = {{"ids", result.affected_ids},
                        {"mode", to_string(std::get<TypedLock>(op.args).mode)}};
            break;
        case OpKind::Expire:
            a.kind = "expire";
            a.params = {{"ids", result.affected_ids}};
            break;
        case OpKind::Retrieve:
            a.kind = "retrieve";
            a.params = {{"expected_ids", result.affected_ids}};
            break;
        case OpKind::Summarize:
            a.kind = "summarize";
            a.params = {{"tau", config.tau}};
            break;
    }
    return {std::move(a)};
}

// ---- assertion evaluation --------------------------------------------------------

namespace {

struct Snapshot {
    std::map<std::string, MemoryItem> items;
    std::int64_t active = 0;
    std::map<std::string, std::int64_t> triggers;
    std::vector<LineageRecord> lineage;
};

Snapshot take_snapshot(MemoryStore& store) {
    Snapshot snap;
    for (auto& item : store.all_items(true)) {
        snap.triggers[item.id] = store.trigger_count(item.id);
        snap.items.emplace(item.id, std::move(item));
    }
    snap.active = store.active_count();
    snap.lineage = store.lineage_records();
    return snap;
}

struct EvalContext {
    const Snapshot& before;
    const Snapshot& after;
    const ExecutionResult* result;  // null when the bound op never ran
    MemoryStore* store;
    double tau;
    std::int64_t now;
};

const MemoryItem* get(const Snapshot& snap, const std::string& id) {
    auto it = snap.items.find(id);
    return it == snap.items.end() ? nullptr : &it->second;
}

std::vector<std::string> ids_param(const json& params, const char* key) {
    std::vector<std::string> out;
    if (params.contains(key) && params[key].is_array()) {
        for (const auto& v : params[key]) {
            if (v.is_string()) out.push_back(v.get<std::string>());
        }
    }
    return out;
}

std::int64_t triggers_for(const Snapshot& snap, const std::string& id) {
    auto it = snap.triggers.find(id);
    return it == snap.triggers.end() ? 0 : it->second;
}

bool field_matches(const MemoryItem& item, const std::string& key, const json& value) {
    if (key == "text") return value.is_string() && item.text == value.get<std::string>();
    if (key == "type") {
        if (value.is_null()) return !item.type;
        return value.is_string() && item.type == value.get<std::string>();
    }
    if (key == "weight")
        return value.is_number() && std::abs(item.weight - value.get<double>()) < 1e-9;
    if (key == "tags") {
        if (!value.is_array()) return false;
        std::vector<std::string> want;
        for (const auto& t : value) {
            if (!t.is_string()) return false;
            want.push_back(t.get<std::string>());
        }
        return item.tags == want;
    }
    if (key == "facets") {
        if (!value.is_object()) return false;
        std::map<std::string, std::string> want;
        for (const auto& [k, v] : value.items()) {
            if (!v.is_string()) return false;
            want[k] = v.get<std::string>();
        }
        return item.facets == want;
    }
    if (key == "time") {
        if (value.is_null()) return !item.time_ns;
        if (!value.is_string()) return false;
        auto ns = parse_rfc3339(value.get<std::string>());
        return ns && item.time_ns && *ns == *item.time_ns;
    }
    if (key == "source" || key == "actor" || key == "location") {
        const auto& field = key == "source" ? item.source
                            : key == "actor" ? item.actor
                                             : item.location;
        if (value.is_null()) return !field;
        return value.is_string() && field == value.get<std::string>();
    }
    return false;
}

std::vector<std::string> result_item_ids(const ExecutionResult& r) {
    std::vector<std::string> ids;
    if (r.payload.contains("items") && r.payload["items"].is_array()) {
        for (const auto& item : r.payload["items"]) {
            if (item.is_object() && item.contains("id") && item["id"].is_string())
                ids.push_back(item["id"].get<std::string>());
        }
    }
    return ids;
}

AssertionOutcome eval_assertion(const Assertion& a, const EvalContext& ctx) {
    AssertionOutcome out;
    out.assertion = a;
    auto unsatisfied = [&](std::string note) {
        out.satisfied = false;
        out.note = std::move(note);
        return out;
    };

    if (a.kind == "encode") {
        if (ctx.after.active != ctx.before.active + 1)
            return unsatisfied("active count did not grow by one");
        std::size_t fresh = 0;
        for (const auto& [id, item] : ctx.after.items) {
            (void)item;
            if (!ctx.before.items.count(id)) ++fresh;
        }
        if (fresh != 1) return unsatisfied("expected exactly one new item");
        out.satisfied = true;
        return out;
    }

    if (a.kind == "update") {
        for (const auto& id : ids_param(a.params, "ids")) {
            const MemoryItem* item = get(ctx.after, id);
            if (!item) return unsatisfied("item " + id + " missing");
            if (a.params.contains("set") && a.params["set"].is_object()) {
                for (const auto& [key, value] : a.params["set"].items()) {
                    if (!field_matches(*item, key, value))
                        return unsatisfied("item " + id + " field " + key +
                                           " does not match");
                }
            }
        }
        if (ctx.before.lineage != ctx.after.lineage)
            return unsatisfied("lineage changed under update");
        out.satisfied = true;
        return out;
    }

    if (a.kind == "label") {
        for (const auto& id : ids_param(a.params, "ids")) {
            const MemoryItem* aft = get(ctx.after, id);
            const MemoryItem* bef = get(ctx.before, id);
            if (!aft || !bef) return unsatisfied("item " + id + " missing");
            if (aft->tags == bef->tags && aft->facets == bef->facets)
                return unsatisfied("item " + id + " tags and facets unchanged");
        }
        out.satisfied = true;
        return out;
    }

    if (a.kind == "promote") {
        for (const auto& id : ids_param(a.params, "ids")) {
            const MemoryItem* aft = get(ctx.after, id);
            const MemoryItem* bef = get(ctx.before, id);
            if (!aft || !bef) return unsatisfied("item " + id + " missing");
            const bool raised = aft->weight > bef->weight;
            const bool reminded = triggers_for(ctx.after, id) > triggers_for(ctx.before, id);
            if (!raised && !reminded)
                return unsatisfied("item " + id + " neither raised nor scheduled");
        }
        out.satisfied = true;
        return out;
    }

    if (a.kind == "demote") {
        for (const auto& id : ids_param(a.params, "ids")) {
            const MemoryItem* aft = get(ctx.after, id);
            const MemoryItem* bef = get(ctx.before, id);
            if (!aft || !bef) return unsatisfied("item " + id + " missing");
            const bool lowered = aft->weight < bef->weight;
            if (!lowered && !aft->archived())
                return unsatisfied("item " + id + " neither lowered nor archived");
            if (aft->deleted) return unsatisfied("item " + id + " was deleted");
        }
        out.satisfied = true;
        return out;
    }

    if (a.kind == "merge") {
        std::string primary;
        if (a.params.contains("primary_id") && a.params["primary_id"].is_string())
            primary = a.params["primary_id"].get<std::string>();
        else if (ctx.result && ctx.result->payload.contains("primary_id"))
            primary = ctx.result->payload["primary_id"].get<std::string>();
        if (primary.empty() || !get(ctx.after, primary))
            return unsatisfied("no merged item");
        for (const auto& id : ids_param(a.params, "source_ids")) {
            const MemoryItem* src = get(ctx.after, id);
            if (!src || src->merged_into != primary)
                return unsatisfied("source " + id + " does not point at " + primary);
        }
        out.satisfied = true;
        return out;
    }

    if (a.kind == "delete") {
        if (a.params.contains("n")) {
            const std::int64_t n = a.params["n"].get<std::int64_t>();
            if (ctx.before.active - ctx.after.active != n)
                return unsatisfied("active count did not drop by " + std::to_string(n));
            out.satisfied = true;
            return out;
        }
        for (const auto& id : ids_param(a.params, "ids")) {
            const MemoryItem* item = get(ctx.after, id);
            if (item && !item->deleted)
                return unsatisfied("item " + id + " still active");
        }
        out.satisfied = true;
        return out;
    }

    if (a.kind == "split") {
        const std::string source = a.params.value("source_id", "");
        if (source.empty() || !get(ctx.after, source))
            return unsatisfied("source item missing");
        std::size_t children = 0;
        for (const auto& [id, item] : ctx.after.items) {
            if (ctx.before.items.count(id)) continue;
            if (item.parent_id && *item.parent_id == source) ++children;
        }
        if (children < 2) return unsatisfied("fewer than two children were created");
        out.satisfied = true;
        return out;
    }

    if (a.kind == "lock") {
        for (const auto& id : ids_param(a.params, "ids")) {
            const MemoryItem* item = get(ctx.after, id);
            if (!item) return unsatisfied("item " + id + " missing");
            auto lock = item->effective_lock(ctx.now);
            if (!lock) return unsatisfied("item " + id + " holds no active lock");
            if (a.params.contains("mode") &&
                a.params["mode"].get<std::string>() != to_string(lock->mode))
                return unsatisfied("item " + id + " lock mode differs");
        }
        out.satisfied = true;
        return out;
    }

    if (a.kind == "expire") {
        for (const auto& id : ids_param(a.params, "ids")) {
            const MemoryItem* item = get(ctx.after, id);
            if (!item) return unsatisfied("item " + id + " missing");
            if (!item->expiry) return unsatisfied("item " + id + " has no expiry horizon");
            if (triggers_for(ctx.after, id) < 1)
                return unsatisfied("item " + id + " has no trigger row");
        }
        out.satisfied = true;
        return out;
    }

    if (a.kind == "retrieve") {
        if (!ctx.result || !ctx.result->ok())
            return unsatisfied("retrieval did not run cleanly");
        const auto actual = result_item_ids(*ctx.result);
        const auto expected = ids_param(a.params, "expected_ids");
        if (actual != expected) {
            std::string note = "returned [";
            for (const auto& id : actual) note += id + " ";
            note += "] expected [";
            for (const auto& id : expected) note += id + " ";
            note += "]";
            return unsatisfied(std::move(note));
        }
        out.satisfied = true;
        return out;
    }

    if (a.kind == "summarize") {
        if (!ctx.result || !ctx.result->ok())
            return unsatisfied("summarize did not run cleanly");
        const double tau = a.params.contains("tau") && a.params["tau"].is_number()
                               ? a.params["tau"].get<double>()
                               : ctx.tau;
        const json& p = ctx.result->payload;
        if (!p.contains("summary_id") || !p.contains("similarity"))
            return unsatisfied("payload misses summary fields");
        const std::string summary_id = p["summary_id"].get<std::string>();
        if (!get(ctx.after, summary_id)) return unsatisfied("summary item missing");
        if (p["similarity"].get<double>() < tau)
            return unsatisfied("similarity " + std::to_string(p["similarity"].get<double>()) +
                               " below " + std::to_string(tau));
        if (p.contains("source_ids")) {
            for (const auto& sid : p["source_ids"]) {
                const LineageRecord want{sid.get<std::string>(), summary_id, "summary"};
                const bool found =
                    std::any_of(ctx.after.lineage.begin(), ctx.after.lineage.end(),
                                [&](const LineageRecord& r) {
                                    return r.parent_id == want.parent_id &&
                                           r.child_id == want.child_id && r.kind == want.kind;
                                });
                if (!found)
                    return unsatisfied("no lineage from source " + want.parent_id);
            }
        }
        out.satisfied = true;
        return out;
    }

    if (a.kind == "sql") {
        if (!a.params.contains("sql") || !a.params["sql"].is_string())
            return unsatisfied("sql assertion without sql text");
        try {
            json actual = ctx.store->query_value(a.params["sql"].get<std::string>());
            if (actual != a.params.value("expect", json()))
                return unsatisfied("query returned " + actual.dump());
            out.satisfied = true;
            return out;
        } catch (const StoreError& e) {
            return unsatisfied(std::string("query failed: ") + e.what());
        }
    }

    return unsatisfied("unknown assertion kind \"" + a.kind + "\"");
}

OpKind op_kind_of(const json& raw) {
    if (raw.is_object() && raw.contains("op") && raw["op"].is_string()) {
        if (auto op = op_from_string(raw["op"].get<std::string>())) return *op;
    }
    return OpKind::Encode;
}

}  // namespace

// ---- case runner -----------------------------------------------------------------

CaseOutcome run_case(const BenchCase& bench_case,
                     const std::optional<std::vector<json>>& candidate,
                     bool candidate_file_given, const BenchConfig& config) {
    CaseOutcome out;
    out.case_id = bench_case.case_id;

    const std::optional<Timestamp> clock =
        bench_case.clock ? bench_case.clock : config.clock;
    if (!clock) {
        out.voided = true;
        out.void_reason = "no reference clock for this case";
        return out;
    }
    const std::int64_t now = clock->unix_nanos;
    auto services = config.services ? config.services
                                    : std::make_shared<LocalServices>();

    // Assertions: use the authored ones, otherwise bind per-verb templates by
    // replaying the gold list on a scratch store.
    std::vector<Assertion> assertions = bench_case.expectations;
    if (assertions.empty()) {
        MemoryStore scratch(":memory:", services, config.weights);
        bool setup_ok = true;
        for (const auto& prereq : bench_case.prerequisites) {
            if (!execute_pipeline(encode_instance_json(prereq), scratch, now, clock).ok()) {
                setup_ok = false;
                break;
            }
        }
        if (!setup_ok) {
            out.voided = true;
            out.void_reason = "prerequisite failed";
            return out;
        }
        for (std::size_t i = 0; i < bench_case.schema_list.size(); ++i) {
            auto po = execute_pipeline(encode_instance_json(bench_case.schema_list[i]),
                                       scratch, now, clock);
            if (!po.ok()) break;  // bind only what the gold run reaches
            TypedOp typed = parse(*po.instance, ParseContext{clock});
            for (auto& a :
                 bind_assertions(typed, po.result, static_cast<int>(i), config))
                assertions.push_back(std::move(a));
        }
    }

    // measured run
    MemoryStore store(":memory:", services, config.weights);
    for (const auto& prereq : bench_case.prerequisites) {
        auto po = execute_pipeline(encode_instance_json(prereq), store, now, clock);
        if (!po.ok()) {
            out.voided = true;
            out.void_reason = "prerequisite failed";
            return out;
        }
    }

    out.emr_total = static_cast<int>(assertions.size());
    if (candidate_file_given && !candidate) {
        out.missing_candidate = true;
        for (const auto& a : assertions)
            out.assertions.push_back({a, false, "no candidate answer for this case"});
        return out;  // sma = esr = emr_satisfied = 0
    }

    std::vector<json> generated;
    if (candidate) {
        generated = *candidate;
    } else {
        for (const auto& inst : bench_case.schema_list)
            generated.push_back(encode_instance_json(inst));
    }

    out.sma = eval_sma(generated, bench_case.schema_list);
    out.sma_partial = eval_sma_partial(generated, bench_case.schema_list);

    std::multimap<int, const Assertion*> by_index;
    for (const auto& a : assertions) by_index.emplace(a.op_index, &a);

    std::vector<double> taus;
    bool failed = false;
    bool all_ok = true;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        Snapshot before = take_snapshot(store);
        ExecutionResult result;
        if (failed) {
            result = ExecutionResult::skipped(op_kind_of(generated[i]));
        } else {
            result = execute_pipeline(generated[i], store, now, clock).result;
            if (!result.ok()) failed = true;
        }
        if (!result.ok()) all_ok = false;
        Snapshot after = take_snapshot(store);

        auto range = by_index.equal_range(static_cast<int>(i));
        for (auto it = range.first; it != range.second; ++it) {
            EvalContext ctx{before, after, &result, &store, config.tau, now};
            AssertionOutcome ao = eval_assertion(*it->second, ctx);
            if (it->second->kind == "retrieve" && result.ok()) {
                auto tau = kendall_tau(ids_param(it->second->params, "expected_ids"),
                                       result_item_ids(result));
                if (tau) taus.push_back(*tau);
            }
            if (ao.satisfied) ++out.emr_satisfied;
            out.assertions.push_back(std::move(ao));
        }
    }
    for (const auto& a : assertions) {
        if (a.op_index >= static_cast<int>(generated.size()))
            out.assertions.push_back(
                {a, false, "bound op was never part of the answer"});
    }
    out.esr = all_ok ? 1 : 0;
    if (!taus.empty()) {
        double sum = 0.0;
        for (double t : taus) sum += t;
        out.rank_tau = sum / static_cast<double>(taus.size());
    }
    return out;
}

MetricsReport run_bench(const std::vector<BenchCase>& cases,
                        const std::optional<CandidateFile>& candidates,
                        const BenchConfig& config) {
    MetricsReport report;
    report.cases_total = static_cast<int>(cases.size());

    double partial_sum = 0.0;
    std::vector<double> taus;
    for (const auto& c : cases) {
        std::optional<std::vector<json>> candidate;
        if (candidates) {
            auto it = candidates->lists.find(c.case_id);
            if (it != candidates->lists.end()) candidate = it->second;
        }
        CaseOutcome outcome = run_case(c, candidate, candidates.has_value(), config);
        if (outcome.voided) {
            ++report.cases_voided;
        } else {
            ++report.cases_scored;
            report.sma_hits += outcome.sma;
            report.esr_hits += outcome.esr;
            report.emr_satisfied += outcome.emr_satisfied;
            report.emr_total += outcome.emr_total;
            partial_sum += outcome.sma_partial;
            if (outcome.rank_tau) taus.push_back(*outcome.rank_tau);
        }
        report.cases.push_back(std::move(outcome));
    }

    if (report.cases_scored > 0) {
        report.sma = static_cast<double>(report.sma_hits) / report.cases_scored;
        report.esr = static_cast<double>(report.esr_hits) / report.cases_scored;
        report.sma_partial = partial_sum / report.cases_scored;
    }
    report.emr = report.emr_total > 0
                     ? static_cast<double>(report.emr_satisfied) / report.emr_total
                     : 1.0;
    if (!taus.empty()) {
        double sum = 0.0;
        for (double t : taus) sum += t;
        report.rank_tau = sum / static_cast<double>(taus.size());
    }
    return report;
}

json MetricsReport::to_json() const {
    json metrics{{"sma", sma},
                 {"esr", esr},
                 {"emr", emr},
                 {"sma_partial", sma_partial},
                 {"rank_tau", rank_tau ? json(*rank_tau) : json()},
                 {"counts",
                  {{"cases_total", cases_total},
                   {"cases_scored", cases_scored},
                   {"cases_voided", cases_voided},
                   {"sma_hits", sma_hits},
                   {"esr_hits", esr_hits},
                   {"emr_satisfied", emr_satisfied},
                   {"emr_total", emr_total}}}};
    json case_rows = json::array();
    for (const auto& c : cases) {
        json row{{"case_id", c.case_id},
                 {"voided", c.voided},
                 {"sma", c.sma},
                 {"esr", c.esr},
                 {"emr_satisfied", c.emr_satisfied},
                 {"emr_total", c.emr_total},
                 {"sma_partial", c.sma_partial}};
        if (c.voided) row["void_reason"] = c.void_reason;
        if (c.missing_candidate) row["missing_candidate"] = true;
        if (c.rank_tau) row["rank_tau"] = *c.rank_tau;
        json asserts = json::array();
        for (const auto& ao : c.assertions) {
            json a{{"kind", ao.assertion.kind},
                   {"op_index", ao.assertion.op_index},
                   {"satisfied", ao.satisfied}};
            if (!ao.note.empty()) a["note"] = ao.note;
            asserts.push_back(std::move(a));
        }
        row["assertions"] = std::move(asserts);
        case_rows.push_back(std::move(row));
    }
    return json{{"metrics", std::move(metrics)}, {"cases", std::move(case_rows)}};
}

std::string MetricsReport::to_table() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-28s %4s %4s %9s %12s\n", "case", "SMA", "ESR", "EMR",
                  "sma_partial");
    os << buf;
    for (const auto& c : cases) {
        if (c.voided) {
            std::snprintf(buf, sizeof(buf), "%-28s %s (%s)\n", c.case_id.c_str(), "voided",
                          c.void_reason.c_str());
            os << buf;
            continue;
        }
        std::snprintf(buf, sizeof(buf), "%-28s %4d %4d %6d/%-3d %12.3f\n", c.case_id.c_str(),
                      c.sma, c.esr, c.emr_satisfied, c.emr_total, c.sma_partial);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "overall: SMA %.4f  ESR %.4f  EMR %.4f  sma_partial %.4f  "
                  "(scored %d, voided %d)\n",
                  sma, esr, emr, sma_partial, cases_scored, cases_voided);
    os << buf;
    if (rank_tau) {
        std::snprintf(buf, sizeof(buf), "rank_tau %.4f (informational)\n", *rank_tau);
        os << buf;
    }
    return os.str();
}

}  // namespace memop
