#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "memop/bench.hpp"

using memop::BenchConfig;
using memop::BenchError;
using memop::MemoryStore;
using memop::ScoreWeights;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;    // the work ran but did not succeed
constexpr int kUsage = 2;     // bad invocation or unreadable environment

std::int64_t wall_clock_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string read_input(const std::string& path) {
    if (path == "-") {
        std::ostringstream buf;
        buf << std::cin.rdbuf();
        return buf.str();
    }
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open input: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// One JSON document (object = one instance, array = a sequence) or JSONL.
// Unparseable JSONL lines stay as discarded values so they fail in decode,
// holding their position in the sequence.
std::vector<json> parse_instances(const std::string& text) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw std::runtime_error("empty input");
    json whole = json::parse(text, nullptr, false);
    if (!whole.is_discarded()) {
        if (whole.is_array()) return std::vector<json>(whole.begin(), whole.end());
        return {whole};
    }
    std::vector<json> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(json::parse(line, nullptr, false));
    }
    return out;
}

struct ServiceOptions {
    std::string url;
    int dimension = 64;
    std::string weights_text;
};

std::shared_ptr<memop::ServiceInterface> make_services(const ServiceOptions& opt) {
    if (!opt.url.empty()) return std::make_shared<memop::HttpServices>(opt.url);
    return std::make_shared<memop::LocalServices>(opt.dimension);
}

ScoreWeights parse_weights(const std::string& text) {
    ScoreWeights w;
    if (text.empty()) return w;
    double v = 0, l = 0, ww = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%lf,%lf,%lf%c", &v, &l, &ww, &tail) != 3 || v < 0 ||
        l < 0 || ww < 0 || v + l + ww <= 0)
        throw std::runtime_error("score weights must be three non-negative numbers "
                                 "\"vector,lexical,weight\" with a positive sum");
    return {v, l, ww};
}

std::optional<memop::Timestamp> parse_clock(const std::string& text) {
    if (text.empty()) return std::nullopt;
    auto ts = memop::parse_timestamp(text);
    if (!ts) throw std::runtime_error("--clock is not an RFC 3339 timestamp: " + text);
    return ts;
}

json item_json(const memop::MemoryItem& item) {
    json j{{"id", item.id},
           {"text", item.text},
           {"tags", item.tags},
           {"facets", item.facets},
           {"weight", item.weight},
           {"deleted", item.deleted},
           {"created_at", memop::format_rfc3339_utc(item.created_ns)},
           {"updated_at", memop::format_rfc3339_utc(item.updated_ns)}};
    if (item.type) j["type"] = *item.type;
    if (item.time_ns) j["time"] = memop::format_rfc3339_utc(*item.time_ns);
    if (item.source) j["source"] = *item.source;
    if (item.actor) j["actor"] = *item.actor;
    if (item.location) j["location"] = *item.location;
    if (item.parent_id) j["parent_id"] = *item.parent_id;
    if (item.merged_into) j["merged_into"] = *item.merged_into;
    if (item.embedding) j["embedding_dim"] = item.embedding->size();
    if (item.expiry) {
        j["expiry"] = {{"until", memop::format_rfc3339_utc(item.expiry->until_ns)},
                       {"on_expire", memop::to_string(item.expiry->action)},
                       {"applied", item.expiry->applied}};
    }
    if (item.lock) {
        json lk{{"mode", memop::to_string(item.lock->mode)}};
        if (item.lock->reason) lk["reason"] = *item.lock->reason;
        if (item.lock->expires_ns)
            lk["expires"] = memop::format_rfc3339_utc(*item.lock->expires_ns);
        j["lock"] = std::move(lk);
    }
    if (item.reminder) {
        json rm = json::object();
        if (item.reminder->at_ns) rm["at"] = memop::format_rfc3339_utc(*item.reminder->at_ns);
        if (item.reminder->cadence) rm["cadence"] = *item.reminder->cadence;
        j["reminder"] = std::move(rm);
    }
    return j;
}

std::string result_line(const memop::ExecutionResult& r, std::size_t index) {
    std::ostringstream os;
    os << "[" << index << "] " << (r.ok() ? "ok " : "ERR ") << memop::to_string(r.op);
    if (r.dry_run) os << " (dry run)";
    if (!r.affected_ids.empty()) {
        os << " ids=";
        for (std::size_t i = 0; i < r.affected_ids.size(); ++i)
            os << (i ? "," : "") << r.affected_ids[i];
    }
    if (r.count_delta != 0)
        os << " delta=" << (r.count_delta > 0 ? "+" : "") << r.count_delta;
    if (!r.diagnostics.empty())
        os << "  " << r.diagnostics.front().code << ": " << r.diagnostics.front().message;
    return os.str();
}

memop::OpKind op_kind_of(const json& raw) {
    if (raw.is_object() && raw.contains("op") && raw["op"].is_string()) {
        if (auto op = memop::op_from_string(raw["op"].get<std::string>())) return *op;
    }
    return memop::OpKind::Encode;
}

int cmd_init(const std::string& db, bool force, const ServiceOptions& services) {
    if (db != ":memory:" && MemoryStore::database_exists(db)) {
        if (!force) {
            std::cerr << "memctl: " << db << " already exists (use --force to recreate)\n";
            return kUsage;
        }
        std::remove(db.c_str());
    }
    MemoryStore store(db, make_services(services));
    std::cout << json{{"ok", true}, {"db", db}, {"digest", store.snapshot_digest()}}.dump()
              << "\n";
    return kOk;
}

int cmd_validate(const std::string& input) {
    std::vector<json> instances = parse_instances(read_input(input));
    bool all_ok = true;
    for (const auto& raw : instances) {
        json row;
        try {
            memop::SchemaInstance inst = memop::decode_instance(raw);
            memop::ValidationReport report = memop::validate(inst);
            row = memop::to_json(report);
            if (report.ok) row["canonical"] = memop::encode_instance(inst);
        } catch (const memop::DecodeError& e) {
            row = {{"ok", false},
                   {"diagnostics",
                    json::array({{{"code", "E_DECODE"},
                                  {"path", e.path()},
                                  {"rule", "decode"},
                                  {"message", std::string(memop::to_string(e.code())) +
                                                  ": " + e.what()}}})}};
        }
        all_ok = all_ok && row["ok"].get<bool>();
        std::cout << row.dump() << "\n";
    }
    return all_ok ? kOk : kFailed;
}

int cmd_exec(const std::string& db, const std::string& input, const std::string& clock_text,
             bool dry_run, const std::string& format, const ServiceOptions& services,
             const std::string& weights_text) {
    if (db != ":memory:" && !MemoryStore::database_exists(db)) {
        std::cerr << "memctl: no database at " << db << " (run `memctl init` first)\n";
        return kUsage;
    }
    auto clock = parse_clock(clock_text);
    const std::int64_t now = clock ? clock->unix_nanos : wall_clock_ns();
    MemoryStore store(db, make_services(services), parse_weights(weights_text));

    std::vector<json> instances = parse_instances(read_input(input));
    bool failed = false;
    std::size_t index = 0;
    for (const auto& raw : instances) {
        memop::ExecutionResult result;
        if (failed) {
            result = memop::ExecutionResult::skipped(op_kind_of(raw));
        } else {
            result = memop::execute_pipeline(raw, store, now, clock,
                                             dry_run ? std::optional<bool>(true)
                                                     : std::nullopt)
                         .result;
            if (!result.ok()) failed = true;
        }
        if (format == "table")
            std::cout << result_line(result, index) << "\n";
        else
            std::cout << result.to_json().dump() << "\n";
        ++index;
    }
    return failed ? kFailed : kOk;
}

int cmd_bench(const std::string& cases_path, const std::string& candidate_path,
              const std::string& report_path, const std::string& clock_text, double tau,
              const std::string& format, const ServiceOptions& services,
              const std::string& weights_text) {
    memop::CaseFile case_file = memop::load_cases(cases_path);
    for (const auto& d : case_file.diagnostics)
        std::cerr << "memctl: " << cases_path << ": " << d << "\n";

    std::optional<memop::CandidateFile> candidates;
    if (!candidate_path.empty()) {
        candidates = memop::load_candidates(candidate_path);
        for (const auto& d : candidates->diagnostics)
            std::cerr << "memctl: " << candidate_path << ": " << d << "\n";
    }

    BenchConfig config;
    config.clock = parse_clock(clock_text);
    config.tau = tau;
    config.weights = parse_weights(weights_text);
    config.services = make_services(services);

    memop::MetricsReport report = memop::run_bench(case_file.cases, candidates, config);
    if (format == "table")
        std::cout << report.to_table();
    else
        std::cout << report.to_json().dump() << "\n";

    if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) {
            std::cerr << "memctl: cannot write report to " << report_path << "\n";
            return kUsage;
        }
        out << report.to_json().dump() << "\n";
    }

    const bool perfect = report.cases_voided == 0 && report.sma == 1.0 &&
                         report.esr == 1.0 && report.emr == 1.0;
    return perfect ? kOk : kFailed;
}

int cmd_repl(const std::string& db, const std::string& clock_text,
             const ServiceOptions& services, const std::string& weights_text) {
    auto clock = parse_clock(clock_text);
    MemoryStore store(db, make_services(services), parse_weights(weights_text));
    const bool interactive = isatty(STDIN_FILENO);
    if (interactive)
        std::cout << "memctl repl — one instance per line; .inspect <id>, .digest, "
                     ".count, .quit\n";

    std::string line;
    while (true) {
        if (interactive) std::cout << "> " << std::flush;
        if (!std::getline(std::cin, line)) break;
        const auto start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos) continue;
        line = line.substr(start);

        if (line == ".quit" || line == ".exit") break;
        if (line == ".digest") {
            std::cout << store.snapshot_digest() << "\n";
            continue;
        }
        if (line == ".count") {
            std::cout << store.active_count() << "\n";
            continue;
        }
        if (line.rfind(".inspect", 0) == 0) {
            std::istringstream cmd(line);
            std::string dot, id;
            cmd >> dot >> id;
            if (id.empty()) {
                std::cout << "usage: .inspect <id>\n";
                continue;
            }
            auto item = store.get_item(id);
            std::cout << (item ? item_json(*item).dump(2) : "null") << "\n";
            continue;
        }
        if (line[0] == '.') {
            std::cout << "unknown command " << line << "\n";
            continue;
        }

        const std::int64_t now = clock ? clock->unix_nanos : wall_clock_ns();
        json raw = json::parse(line, nullptr, false);
        auto outcome = memop::execute_pipeline(raw, store, now, clock);
        std::cout << outcome.result.to_json().dump() << "\n";
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"schema-driven memory operations over an embedded store"};
    app.require_subcommand(1);

    std::string db = ":memory:";
    std::string input = "-";
    std::string clock_text;
    std::string format = "json";
    std::string cases_path, candidate_path, report_path;
    bool dry_run = false;
    bool force = false;
    double tau = 0.5;
    ServiceOptions services;
    std::string weights_text;

    auto add_service_opts = [&](CLI::App* cmd) {
        cmd->add_option("--services-url", services.url,
                        "base URL of an embedding/summary service (default: built-in)")
            ->envname("MEMCTL_SERVICES_URL");
        cmd->add_option("--embedding-dim", services.dimension,
                        "dimension of the built-in embedding")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--score-weights", weights_text,
                        "relevance mix \"vector,lexical,weight\" (default 0.5,0.3,0.2)");
    };
    auto add_db_opt = [&](CLI::App* cmd, bool required) {
        auto* opt = cmd->add_option("--db", db, "SQLite database path or :memory:")
                        ->envname("MEMCTL_DB");
        if (required) opt->required();
    };

    auto* init = app.add_subcommand("init", "create an empty database");
    add_db_opt(init, true);
    init->add_flag("--force", force, "recreate the database if it exists");
    add_service_opts(init);

    auto* validate = app.add_subcommand("validate", "decode and validate instances");
    validate->add_option("input", input, "JSON/JSONL file, or - for stdin");

    auto* exec = app.add_subcommand("exec", "run an op sequence against a database");
    add_db_opt(exec, true);
    exec->add_option("input", input, "JSON/JSONL file, or - for stdin");
    exec->add_option("--clock", clock_text, "reference time, RFC 3339")
        ->envname("MEMCTL_CLOCK");
    exec->add_flag("--dry-run", dry_run, "force meta.dry_run on every instance");
    exec->add_option("--format", format, "json or table")
        ->check(CLI::IsMember({"json", "table"}));
    add_service_opts(exec);

    auto* bench = app.add_subcommand("bench", "score cases and report metrics");
    bench->add_option("--cases", cases_path, "JSONL case file")->required();
    bench->add_option("--candidate", candidate_path,
                      "JSONL candidate answers; omitted cases score zero");
    bench->add_option("--report", report_path, "write the JSON report here");
    bench->add_option("--clock", clock_text, "reference time, RFC 3339")
        ->envname("MEMCTL_CLOCK")
        ->required();
    bench->add_option("--tau", tau, "summary similarity threshold")
        ->check(CLI::Range(0.0, 1.0));
    bench->add_option("--format", format, "json or table")
        ->check(CLI::IsMember({"json", "table"}));
    add_service_opts(bench);

    auto* repl = app.add_subcommand("repl", "interactive instance-per-line session");
    add_db_opt(repl, true);
    repl->add_option("--clock", clock_text, "reference time, RFC 3339")
        ->envname("MEMCTL_CLOCK");
    add_service_opts(repl);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(init)) return cmd_init(db, force, services);
        if (app.got_subcommand(validate)) return cmd_validate(input);
        if (app.got_subcommand(exec))
            return cmd_exec(db, input, clock_text, dry_run, format, services, weights_text);
        if (app.got_subcommand(bench))
            return cmd_bench(cases_path, candidate_path, report_path, clock_text, tau,
                             format, services, weights_text);
        if (app.got_subcommand(repl))
            return cmd_repl(db, clock_text, services, weights_text);
    } catch (const BenchError& e) {
        std::cerr << "memctl: " << e.what() << "\n";
        return kUsage;
    } catch (const memop::StoreError& e) {
        std::cerr << "memctl: store error: " << e.what() << "\n";
        return kUsage;
    } catch (const memop::ServiceError& e) {
        std::cerr << "memctl: service error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "memctl: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
