#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memop/adapter.hpp"
#include "memop/store.hpp"

namespace memop {

// One step of the full pipeline over a raw JSON value: decode, validate,
// parse, dispatch. Failures at any stage land in `result` as an error with
// the responsible diagnostics; `phase` names how far the instance got.
struct PipelineOutcome {
    enum class Phase { Decode, Validate, Parse, Execute };

    Phase phase = Phase::Decode;
    std::optional<SchemaInstance> instance;
    ExecutionResult result;

    bool ok() const { return result.ok(); }
};

PipelineOutcome execute_pipeline(const nlohmann::json& raw, MemoryStore& store,
                                 std::int64_t now_ns,
                                 const std::optional<Timestamp>& clock,
                                 std::optional<bool> force_dry_run = std::nullopt);

struct Assertion {
    std::string kind;  // verb template name, or "sql"
    nlohmann::json params = nlohmann::json::object();
    int op_index = 0;
};

struct BenchCase {
    std::string case_id;
    std::map<std::string, std::string> nl;
    std::string instruction_type;  // direct | indirect
    std::string structure;         // single | workflow
    std::vector<SchemaInstance> prerequisites;
    std::vector<SchemaInstance> schema_list;
    std::vector<Assertion> expectations;  // empty = auto-bind from the gold list
    std::optional<Timestamp> clock;
    int line = 0;
};

class BenchError : public std::runtime_error {
public:
    enum class Code { Io, NoValidCases };

    BenchError(Code code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Code code() const { return code_; }

private:
    Code code_;
};

struct CaseFile {
    std::vector<BenchCase> cases;
    std::vector<std::string> diagnostics;  // one line per rejected input line
};

// JSONL loader; malformed or invalid lines are skipped with a line-numbered
// diagnostic. Throws Io when unreadable, NoValidCases when nothing survives.
CaseFile load_cases(const std::string& path);

struct CandidateFile {
    std::map<std::string, std::vector<nlohmann::json>> lists;
    std::vector<std::string> diagnostics;
};

// JSONL of {"case_id", "schema_list"} rows; instances stay raw JSON so the
// measured run can exercise decode failures.
CandidateFile load_candidates(const std::string& path);

struct AssertionOutcome {
    Assertion assertion;
    bool satisfied = false;
    std::string note;
};

struct CaseOutcome {
    std::string case_id;
    bool voided = false;          // prerequisite failure: excluded everywhere
    std::string void_reason;
    bool missing_candidate = false;
    int sma = 0;
    int esr = 0;
    int emr_satisfied = 0;
    int emr_total = 0;
    double sma_partial = 0.0;
    std::optional<double> rank_tau;
    std::vector<AssertionOutcome> assertions;
};

struct MetricsReport {
    int cases_total = 0;
    int cases_scored = 0;
    int cases_voided = 0;
    int sma_hits = 0;
    int esr_hits = 0;
    int emr_satisfied = 0;
    int emr_total = 0;
    double sma = 0.0;
    double esr = 0.0;
    double emr = 0.0;
    double sma_partial = 0.0;
    std::optional<double> rank_tau;
    std::vector<CaseOutcome> cases;

    nlohmann::json to_json() const;  // canonical, byte-stable
    std::string to_table() const;
};

struct BenchConfig {
    std::optional<Timestamp> clock;  // fallback when a case carries none
    double tau = 0.5;                // summarize similarity threshold
    ScoreWeights weights;
    std::shared_ptr<ServiceInterface> services;  // default: LocalServices
};

// Schema-match accuracy: 1 iff the lists align position by position on
// canonical bytes. Partial credit is the matched fraction of the longer list.
int eval_sma(const std::vector<nlohmann::json>& generated,
             const std::vector<SchemaInstance>& gold);
double eval_sma_partial(const std::vector<nlohmann::json>& generated,
                        const std::vector<SchemaInstance>& gold);

// Per-verb expectation templates instantiated from a gold op's dispatch outcome.
std::vector<Assertion> bind_assertions(const TypedOp& op, const ExecutionResult& result,
                                       int op_index, const BenchConfig& config);

// Rank correlation over the ids both lists share; nullopt under two common.
std::optional<double> kendall_tau(const std::vector<std::string>& expected,
                                  const std::vector<std::string>& actual);

CaseOutcome run_case(const BenchCase& bench_case,
                     const std::optional<std::vector<nlohmann::json>>& candidate,
                     bool candidate_file_given, const BenchConfig& config);

MetricsReport run_bench(const std::vector<BenchCase>& cases,
                        const std::optional<CandidateFile>& candidates,
                        const BenchConfig& config);

}  // namespace memop
