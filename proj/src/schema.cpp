#include "memop/schema.hpp"

#include <utility>

namespace memop {

using nlohmann::json;

const char* to_string(OpKind op) {
    switch (op) {
        case OpKind::Encode: return "Encode";
        case OpKind::Update: return "Update";
        case OpKind::Label: return "Label";
        case OpKind::Promote: return "Promote";
        case OpKind::Demote: return "Demote";
        case OpKind::Merge: return "Merge";
        case OpKind::Delete: return "Delete";
        case OpKind::Split: return "Split";
        case OpKind::Lock: return "Lock";
        case OpKind::Expire: return "Expire";
        case OpKind::Retrieve: return "Retrieve";
        case OpKind::Summarize: return "Summarize";
    }
    return "?";
}

const char* to_string(Stage stage) {
    switch (stage) {
        case Stage::Enc: return "ENC";
        case Stage::Sto: return "STO";
        case Stage::Ret: return "RET";
    }
    return "?";
}

std::optional<OpKind> op_from_string(std::string_view s) {
    for (OpKind op : kAllOps) {
        if (s == to_string(op)) return op;
    }
    return std::nullopt;
}

std::optional<Stage> stage_from_string(std::string_view s) {
    if (s == "ENC") return Stage::Enc;
    if (s == "STO") return Stage::Sto;
    if (s == "RET") return Stage::Ret;
    return std::nullopt;
}

Stage infer_stage(OpKind op) {
    switch (op) {
        case OpKind::Encode:
            return Stage::Enc;
        case OpKind::Retrieve:
        case OpKind::Summarize:
            return Stage::Ret;
        default:
            return Stage::Sto;
    }
}

const char* to_string(DecodeError::Code code) {
    switch (code) {
        case DecodeError::Code::MalformedJson: return "malformed_json";
        case DecodeError::Code::UnknownField: return "unknown_field";
        case DecodeError::Code::UnknownOp: return "unknown_op";
        case DecodeError::Code::TypeMismatch: return "type_mismatch";
    }
    return "?";
}

namespace {

[[noreturn]] void fail(DecodeError::Code code, const std::string& path, const std::string& msg) {
    throw DecodeError(code, path, msg + " at " + path);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known)
            fail(DecodeError::Code::UnknownField, path + "/" + it.key(), "unknown field");
    }
}

const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

const json& expect_object(const json& v, const std::string& path) {
    if (!v.is_object()) fail(DecodeError::Code::TypeMismatch, path, "expected object");
    return v;
}

std::string expect_string(const json& v, const std::string& path) {
    if (!v.is_string()) fail(DecodeError::Code::TypeMismatch, path, "expected string");
    return v.get<std::string>();
}

bool expect_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) fail(DecodeError::Code::TypeMismatch, path, "expected boolean");
    return v.get<bool>();
}

double expect_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(DecodeError::Code::TypeMismatch, path, "expected number");
    return v.get<double>();
}

std::int64_t expect_integer(const json& v, const std::string& path) {
    if (!v.is_number_integer() && !v.is_number_unsigned())
        fail(DecodeError::Code::TypeMismatch, path, "expected integer");
    return v.get<std::int64_t>();
}

std::optional<std::string> opt_string(const json& obj, const std::string& path, const char* key) {
    const json* v = find(obj, key);
    if (!v) return std::nullopt;
    return expect_string(*v, path + "/" + key);
}

std::optional<bool> opt_bool(const json& obj, const std::string& path, const char* key) {
    const json* v = find(obj, key);
    if (!v) return std::nullopt;
    return expect_bool(*v, path + "/" + key);
}

std::optional<double> opt_number(const json& obj, const std::string& path, const char* key) {
    const json* v = find(obj, key);
    if (!v) return std::nullopt;
    return expect_number(*v, path + "/" + key);
}

std::optional<std::int64_t> opt_integer(const json& obj, const std::string& path,
                                        const char* key) {
    const json* v = find(obj, key);
    if (!v) return std::nullopt;
    return expect_integer(*v, path + "/" + key);
}

// Timestamps decode as raw text; parseability is a validator concern, so an
// unparseable string carries a zero instant here and gets flagged there.
std::optional<Timestamp> opt_timestamp(const json& obj, const std::string& path,
                                       const char* key) {
    const json* v = find(obj, key);
    if (!v) return std::nullopt;
    std::string text = expect_string(*v, path + "/" + key);
    if (auto parsed = parse_timestamp(text)) return parsed;
    return Timestamp{std::move(text), 0};
}

std::vector<std::string> get_string_array(const json& v, const std::string& path) {
    if (!v.is_array()) fail(DecodeError::Code::TypeMismatch, path, "expected array of strings");
    std::vector<std::string> out;
    out.reserve(v.size());
    std::size_t i = 0;
    for (const auto& item : v) {
        out.push_back(expect_string(item, path + "/" + std::to_string(i)));
        ++i;
    }
    return out;
}

std::vector<std::string> opt_string_array(const json& obj, const std::string& path,
                                          const char* key) {
    const json* v = find(obj, key);
    if (!v) return {};
    return get_string_array(*v, path + "/" + key);
}

std::map<std::string, std::string> opt_facets(const json& obj, const std::string& path,
                                              const char* key) {
    const json* v = find(obj, key);
    if (!v) return {};
    const std::string base = path + "/" + key;
    expect_object(*v, base);
    std::map<std::string, std::string> out;
    for (auto it = v->begin(); it != v->end(); ++it) {
        out[it.key()] = expect_string(it.value(), base + "/" + it.key());
    }
    return out;
}

Target decode_target(const json& v, const std::string& path) {
    expect_object(v, path);
    check_keys(v, path, {"ids", "filter", "search", "all"});

    int populated = 0;
    std::optional<Target> result;

    if (const json* ids = find(v, "ids")) {
        auto list = get_string_array(*ids, path + "/ids");
        if (!list.empty()) {
            ++populated;
            result = IdsTarget{std::move(list)};
        }
    }
    if (const json* f = find(v, "filter")) {
        const std::string fp = path + "/filter";
        expect_object(*f, fp);
        check_keys(*f, fp, {"has_tags", "type", "time_range", "weight_range", "limit"});
        FilterSpec spec;
        spec.has_tags = opt_string_array(*f, fp, "has_tags");
        spec.type = opt_string(*f, fp, "type");
        if (const json* tr = find(*f, "time_range")) {
            const std::string tp = fp + "/time_range";
            expect_object(*tr, tp);
            check_keys(*tr, tp, {"start", "end"});
            TimeRangeSpec range;
            range.start = opt_timestamp(*tr, tp, "start");
            range.end = opt_timestamp(*tr, tp, "end");
            if (range.start || range.end) spec.time_range = std::move(range);
        }
        if (const json* wr = find(*f, "weight_range")) {
            const std::string wp = fp + "/weight_range";
            expect_object(*wr, wp);
            check_keys(*wr, wp, {"min", "max"});
            WeightRangeSpec range;
            range.min = opt_number(*wr, wp, "min").value_or(0.0);
            range.max = opt_number(*wr, wp, "max").value_or(1.0);
            spec.weight_range = range;
        }
        spec.limit = opt_integer(*f, fp, "limit");
        const bool empty = spec.has_tags.empty() && !spec.type && !spec.time_range &&
                           !spec.weight_range && !spec.limit;
        if (!empty) {
            ++populated;
            result = std::move(spec);
        }
    }
    if (const json* s = find(v, "search")) {
        const std::string sp = path + "/search";
        expect_object(*s, sp);
        check_keys(*s, sp, {"intent", "overrides", "limit"});
        SearchSpec spec;
        const json* intent = find(*s, "intent");
        if (!intent)
            fail(DecodeError::Code::TypeMismatch, sp + "/intent", "search requires an intent");
        const std::string ip = sp + "/intent";
        expect_object(*intent, ip);
        check_keys(*intent, ip, {"query", "context"});
        const json* q = find(*intent, "query");
        if (!q) fail(DecodeError::Code::TypeMismatch, ip + "/query", "intent requires a query");
        spec.query = expect_string(*q, ip + "/query");
        spec.context = opt_string(*intent, ip, "context");
        if (const json* ov = find(*s, "overrides")) {
            const std::string op = sp + "/overrides";
            expect_object(*ov, op);
            check_keys(*ov, op, {"k", "order_by", "limit"});
            spec.overrides.k = opt_integer(*ov, op, "k");
            spec.overrides.order_by = opt_string(*ov, op, "order_by");
            spec.overrides.limit = opt_integer(*ov, op, "limit");
        }
        spec.limit = opt_integer(*s, sp, "limit");
        ++populated;
        result = std::move(spec);
    }
    if (const json* all = find(v, "all")) {
        if (expect_bool(*all, path + "/all")) {
            ++populated;
            result = AllTarget{};
        }
    }

    if (populated != 1)
        fail(DecodeError::Code::TypeMismatch, path, "target must populate exactly one variant");
    return std::move(*result);
}

OpArgs decode_args(OpKind op, const json* v, const std::string& path) {
    const json empty_obj = json::object();
    const json& a = v ? *v : empty_obj;
    if (v) expect_object(a, path);

    switch (op) {
        case OpKind::Encode: {
            check_keys(a, path,
                       {"payload", "tags", "type", "time", "source", "location", "facets",
                        "use_embedding"});
            EncodeArgs args;
            if (const json* payload = find(a, "payload")) {
                const std::string pp = path + "/payload";
                expect_object(*payload, pp);
                check_keys(*payload, pp, {"text"});
                args.payload_text = opt_string(*payload, pp, "text");
            }
            args.tags = opt_string_array(a, path, "tags");
            args.type = opt_string(a, path, "type");
            args.time = opt_timestamp(a, path, "time");
            args.source = opt_string(a, path, "source");
            args.location = opt_string(a, path, "location");
            args.facets = opt_facets(a, path, "facets");
            args.use_embedding = opt_bool(a, path, "use_embedding");
            return args;
        }
        case OpKind::Update: {
            check_keys(a, path, {"set"});
            UpdateArgs args;
            if (const json* set = find(a, "set")) {
                expect_object(*set, path + "/set");
                args.set = *set;
            }
            return args;
        }
        case OpKind::Label: {
            check_keys(a, path, {"tags", "facets", "mode"});
            LabelArgs args;
            args.tags = opt_string_array(a, path, "tags");
            args.facets = opt_facets(a, path, "facets");
            args.mode = opt_string(a, path, "mode");
            return args;
        }
        case OpKind::Promote: {
            check_keys(a, path, {"weight", "weight_delta", "reminder"});
            PromoteArgs args;
            args.weight = opt_number(a, path, "weight");
            args.weight_delta = opt_number(a, path, "weight_delta");
            if (const json* rem = find(a, "reminder")) {
                const std::string rp = path + "/reminder";
                expect_object(*rem, rp);
                check_keys(*rem, rp, {"cadence", "at"});
                ReminderSpec spec;
                spec.cadence = opt_string(*rem, rp, "cadence");
                spec.at = opt_timestamp(*rem, rp, "at");
                if (spec.cadence || spec.at) args.reminder = std::move(spec);
            }
            return args;
        }
        case OpKind::Demote: {
            check_keys(a, path, {"weight", "weight_delta", "archive"});
            DemoteArgs args;
            args.weight = opt_number(a, path, "weight");
            args.weight_delta = opt_number(a, path, "weight_delta");
            args.archive = opt_bool(a, path, "archive");
            return args;
        }
        case OpKind::Merge: {
            check_keys(a, path, {"strategy", "delete_children"});
            MergeArgs args;
            args.strategy = opt_string(a, path, "strategy");
            args.delete_children = opt_bool(a, path, "delete_children");
            return args;
        }
        case OpKind::Delete: {
            check_keys(a, path, {"mode"});
            DeleteArgs args;
            args.mode = opt_string(a, path, "mode");
            return args;
        }
        case OpKind::Split: {
            check_keys(a, path, {"strategy", "chunk_size"});
            SplitArgs args;
            args.strategy = opt_string(a, path, "strategy");
            args.chunk_size = opt_integer(a, path, "chunk_size");
            return args;
        }
        case OpKind::Lock: {
            check_keys(a, path, {"mode", "reason", "policy"});
            LockArgs args;
            args.mode = opt_string(a, path, "mode");
            args.reason = opt_string(a, path, "reason");
            if (const json* pol = find(a, "policy")) {
                const std::string pp = path + "/policy";
                expect_object(*pol, pp);
                check_keys(*pol, pp, {"allow", "deny", "reviewers", "expires"});
                LockPolicy policy;
                policy.allow = opt_string_array(*pol, pp, "allow");
                policy.deny = opt_string_array(*pol, pp, "deny");
                policy.reviewers = opt_string_array(*pol, pp, "reviewers");
                policy.expires = opt_timestamp(*pol, pp, "expires");
                if (!policy.allow.empty() || !policy.deny.empty() ||
                    !policy.reviewers.empty() || policy.expires)
                    args.policy = std::move(policy);
            }
            return args;
        }
        case OpKind::Expire: {
            check_keys(a, path, {"ttl", "until", "on_expire"});
            ExpireArgs args;
            args.ttl = opt_string(a, path, "ttl");
            args.until = opt_timestamp(a, path, "until");
            args.on_expire = opt_string(a, path, "on_expire");
            return args;
        }
        case OpKind::Retrieve: {
            check_keys(a, path, {"fields"});
            RetrieveArgs args;
            args.fields = opt_string_array(a, path, "fields");
            return args;
        }
        case OpKind::Summarize: {
            check_keys(a, path, {"focus", "max_tokens"});
            SummarizeArgs args;
            args.focus = opt_string(a, path, "focus");
            args.max_tokens = opt_integer(a, path, "max_tokens");
            return args;
        }
    }
    fail(DecodeError::Code::TypeMismatch, path, "unhandled op");
}

Meta decode_meta(const json& v, const std::string& path) {
    expect_object(v, path);
    check_keys(v, path, {"actor", "timestamp", "lang", "confirmation", "dry_run"});
    Meta meta;
    meta.actor = opt_string(v, path, "actor");
    meta.timestamp = opt_timestamp(v, path, "timestamp");
    meta.lang = opt_string(v, path, "lang");
    meta.confirmation = opt_bool(v, path, "confirmation");
    meta.dry_run = opt_bool(v, path, "dry_run");
    return meta;
}

}  // namespace

SchemaInstance decode_instance(const json& j) {
    if (!j.is_object())
        fail(DecodeError::Code::TypeMismatch, "", "instance must be a JSON object");
    check_keys(j, "", {"stage", "op", "target", "args", "meta"});

    SchemaInstance inst;
    const json* op = find(j, "op");
    if (!op) fail(DecodeError::Code::TypeMismatch, "/op", "missing op");
    const std::string op_name = expect_string(*op, "/op");
    auto kind = op_from_string(op_name);
    if (!kind) fail(DecodeError::Code::UnknownOp, "/op", "unknown op \"" + op_name + "\"");
    inst.op = *kind;

    inst.stage = opt_string(j, "", "stage");
    if (const json* target = find(j, "target")) inst.target = decode_target(*target, "/target");
    inst.args = decode_args(inst.op, find(j, "args"), "/args");
    if (const json* meta = find(j, "meta")) inst.meta = decode_meta(*meta, "/meta");
    return inst;
}

SchemaInstance decode_instance(std::string_view json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded())
        throw DecodeError(DecodeError::Code::MalformedJson, "", "malformed JSON");
    return decode_instance(j);
}

namespace {

void put(json& obj, const char* key, const std::optional<std::string>& v) {
    if (v) obj[key] = *v;
}

void put(json& obj, const char* key, const std::optional<bool>& v) {
    if (v) obj[key] = *v;
}

void put(json& obj, const char* key, const std::optional<double>& v) {
    if (v) obj[key] = *v;
}

void put_int(json& obj, const char* key, const std::optional<std::int64_t>& v) {
    if (v) obj[key] = *v;
}

void put(json& obj, const char* key, const std::optional<Timestamp>& v) {
    if (v) obj[key] = v->text;
}

void put(json& obj, const char* key, const std::vector<std::string>& v) {
    if (!v.empty()) obj[key] = v;
}

void put(json& obj, const char* key, const std::map<std::string, std::string>& v) {
    if (!v.empty()) obj[key] = v;
}

json encode_target(const Target& target) {
    json t = json::object();
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, IdsTarget>) {
                t["ids"] = v.ids;
            } else if constexpr (std::is_same_v<T, FilterSpec>) {
                json f = json::object();
                put(f, "has_tags", v.has_tags);
                put(f, "type", v.type);
                if (v.time_range) {
                    json tr = json::object();
                    put(tr, "start", v.time_range->start);
                    put(tr, "end", v.time_range->end);
                    f["time_range"] = std::move(tr);
                }
                if (v.weight_range) {
                    f["weight_range"] = {{"min", v.weight_range->min},
                                         {"max", v.weight_range->max}};
                }
                put_int(f, "limit", v.limit);
                t["filter"] = std::move(f);
            } else if constexpr (std::is_same_v<T, SearchSpec>) {
                json s = json::object();
                json intent = json::object();
                intent["query"] = v.query;
                put(intent, "context", v.context);
                s["intent"] = std::move(intent);
                json ov = json::object();
                put_int(ov, "k", v.overrides.k);
                put(ov, "order_by", v.overrides.order_by);
                put_int(ov, "limit", v.overrides.limit);
                if (!ov.empty()) s["overrides"] = std::move(ov);
                put_int(s, "limit", v.limit);
                t["search"] = std::move(s);
            } else {
                t["all"] = true;
            }
        },
        target);
    return t;
}

json encode_args(const OpArgs& args) {
    json a = json::object();
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, EncodeArgs>) {
                if (v.payload_text) a["payload"] = {{"text", *v.payload_text}};
                put(a, "tags", v.tags);
                put(a, "type", v.type);
                put(a, "time", v.time);
                put(a, "source", v.source);
                put(a, "location", v.location);
                put(a, "facets", v.facets);
                put(a, "use_embedding", v.use_embedding);
            } else if constexpr (std::is_same_v<T, UpdateArgs>) {
                if (!v.set.empty()) a["set"] = v.set;
            } else if constexpr (std::is_same_v<T, LabelArgs>) {
                put(a, "tags", v.tags);
                put(a, "facets", v.facets);
                put(a, "mode", v.mode);
            } else if constexpr (std::is_same_v<T, PromoteArgs>) {
                put(a, "weight", v.weight);
                put(a, "weight_delta", v.weight_delta);
                if (v.reminder) {
                    json r = json::object();
                    put(r, "cadence", v.reminder->cadence);
                    put(r, "at", v.reminder->at);
                    if (!r.empty()) a["reminder"] = std::move(r);
                }
            } else if constexpr (std::is_same_v<T, DemoteArgs>) {
                put(a, "weight", v.weight);
                put(a, "weight_delta", v.weight_delta);
                put(a, "archive", v.archive);
            } else if constexpr (std::is_same_v<T, MergeArgs>) {
                put(a, "strategy", v.strategy);
                put(a, "delete_children", v.delete_children);
            } else if constexpr (std::is_same_v<T, DeleteArgs>) {
                put(a, "mode", v.mode);
            } else if constexpr (std::is_same_v<T, SplitArgs>) {
                put(a, "strategy", v.strategy);
                put_int(a, "chunk_size", v.chunk_size);
            } else if constexpr (std::is_same_v<T, LockArgs>) {
                put(a, "mode", v.mode);
                put(a, "reason", v.reason);
                if (v.policy) {
                    json p = json::object();
                    put(p, "allow", v.policy->allow);
                    put(p, "deny", v.policy->deny);
                    put(p, "reviewers", v.policy->reviewers);
                    put(p, "expires", v.policy->expires);
                    if (!p.empty()) a["policy"] = std::move(p);
                }
            } else if constexpr (std::is_same_v<T, ExpireArgs>) {
                put(a, "ttl", v.ttl);
                put(a, "until", v.until);
                put(a, "on_expire", v.on_expire);
            } else if constexpr (std::is_same_v<T, RetrieveArgs>) {
                put(a, "fields", v.fields);
            } else if constexpr (std::is_same_v<T, SummarizeArgs>) {
                put(a, "focus", v.focus);
                put_int(a, "max_tokens", v.max_tokens);
            }
        },
        args);
    return a;
}

}  // namespace

json encode_instance_json(const SchemaInstance& inst) {
    json j = json::object();
    j["op"] = to_string(inst.op);
    if (inst.stage) j["stage"] = *inst.stage;
    if (inst.target) j["target"] = encode_target(*inst.target);

    json args = encode_args(inst.args);
    if (!args.empty()) j["args"] = std::move(args);

    json meta = json::object();
    put(meta, "actor", inst.meta.actor);
    put(meta, "timestamp", inst.meta.timestamp);
    put(meta, "lang", inst.meta.lang);
    put(meta, "confirmation", inst.meta.confirmation);
    put(meta, "dry_run", inst.meta.dry_run);
    if (!meta.empty()) j["meta"] = std::move(meta);
    return j;
}

std::string encode_instance(const SchemaInstance& inst) {
    return encode_instance_json(inst).dump();
}

}  // namespace memop
