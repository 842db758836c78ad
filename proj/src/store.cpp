#include "memop/store.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>

#include <sqlite3.h>

#include "memop/text.hpp"
#include "memop/time.hpp"

namespace memop {

using nlohmann::json;

bool MemoryItem::archived() const {
    auto it = facets.find("archived");
    return it != facets.end() && it->second == "true";
}

namespace {

[[noreturn]] void fail_exec(std::string code, std::string path, std::string message) {
    throw ExecutionError({std::move(code), std::move(path), "exec", std::move(message)});
}

[[noreturn]] void fail_sql(sqlite3* db, const std::string& context) {
    throw StoreError(StoreError::Code::Sql, context + ": " + sqlite3_errmsg(db));
}

// RAII prepared statement with 1-based binds.
class Stmt {
public:
    Stmt(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK)
            fail_sql(db, std::string("prepare \"") + sql + "\"");
    }
    ~Stmt() { sqlite3_finalize(stmt_); }

    Stmt(const Stmt&) = delete;
    Stmt& operator=(const Stmt&) = delete;

    Stmt& bind_int(int i, std::int64_t v) {
        sqlite3_bind_int64(stmt_, i, v);
        return *this;
    }
    Stmt& bind_real(int i, double v) {
        sqlite3_bind_double(stmt_, i, v);
        return *this;
    }
    Stmt& bind_text(int i, std::string_view v) {
        sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
        return *this;
    }
    Stmt& bind_null(int i) {
        sqlite3_bind_null(stmt_, i);
        return *this;
    }
    Stmt& bind_opt_text(int i, const std::optional<std::string>& v) {
        return v ? bind_text(i, *v) : bind_null(i);
    }
    Stmt& bind_opt_int(int i, const std::optional<std::int64_t>& v) {
        return v ? bind_int(i, *v) : bind_null(i);
    }
    Stmt& bind_blob(int i, const void* data, std::size_t size) {
        sqlite3_bind_blob(stmt_, i, data, static_cast<int>(size), SQLITE_TRANSIENT);
        return *this;
    }

    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        fail_sql(db_, "step");
    }

    bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
    std::int64_t col_int(int col) const { return sqlite3_column_int64(stmt_, col); }
    double col_real(int col) const { return sqlite3_column_double(stmt_, col); }
    std::string col_text(int col) const {
        const unsigned char* p = sqlite3_column_text(stmt_, col);
        if (!p) return {};
        return std::string(reinterpret_cast<const char*>(p),
                           static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)));
    }
    std::optional<std::string> col_opt_text(int col) const {
        if (is_null(col)) return std::nullopt;
        return col_text(col);
    }
    std::optional<std::int64_t> col_opt_int(int col) const {
        if (is_null(col)) return std::nullopt;
        return col_int(col);
    }
    std::optional<std::vector<double>> col_blob_doubles(int col) const {
        if (is_null(col)) return std::nullopt;
        const void* data = sqlite3_column_blob(stmt_, col);
        const std::size_t bytes = static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col));
        std::vector<double> v(bytes / sizeof(double));
        if (!v.empty()) std::memcpy(v.data(), data, v.size() * sizeof(double));
        return v;
    }
    sqlite3_stmt* raw() { return stmt_; }

private:
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

void exec_sql(sqlite3* db, const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown error";
        sqlite3_free(err);
        throw StoreError(StoreError::Code::Sql, std::string(sql) + ": " + msg);
    }
}

std::optional<std::int64_t> parse_id(const std::string& s) {
    if (s.empty() || s.size() > 18) return std::nullopt;
    std::int64_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return std::nullopt;
        v = v * 10 + (c - '0');
    }
    return v;
}

std::string id_text(std::int64_t id) { return std::to_string(id); }

std::vector<std::string> tags_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    std::vector<std::string> out;
    if (j.is_array()) {
        for (const auto& t : j) {
            if (t.is_string()) out.push_back(t.get<std::string>());
        }
    }
    return out;
}

std::map<std::string, std::string> facets_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    std::map<std::string, std::string> out;
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it.value().is_string()) out[it.key()] = it.value().get<std::string>();
        }
    }
    return out;
}

std::vector<OpKind> ops_from_json(const std::string& text) {
    std::vector<OpKind> out;
    json j = json::parse(text, nullptr, false);
    if (j.is_array()) {
        for (const auto& name : j) {
            if (!name.is_string()) continue;
            if (auto op = op_from_string(name.get<std::string>())) out.push_back(*op);
        }
    }
    return out;
}

std::string ops_to_json(const std::vector<OpKind>& ops) {
    json j = json::array();
    for (OpKind op : ops) j.push_back(to_string(op));
    return j.dump();
}

constexpr const char* kItemSelect =
    "SELECT i.id, i.text, i.type, i.tags, i.facets, i.weight, i.embedding, i.time_ns, "
    "i.source, i.actor, i.location, i.parent_id, i.merged_into, i.deleted, "
    "i.expiry_until_ns, i.expiry_action, i.expiry_applied, i.reminder_at_ns, "
    "i.reminder_cadence, i.created_ns, i.updated_ns, "
    "l.mode, l.reason, l.allow, l.deny, l.reviewers, l.expires_ns "
    "FROM memory_items i LEFT JOIN locks l ON l.item_id = i.id ";

ExpireAction expire_action_from_text(const std::string& s) {
    if (s == "demote") return ExpireAction::Demote;
    if (s == "archive") return ExpireAction::Archive;
    if (s == "anonymize") return ExpireAction::Anonymize;
    return ExpireAction::DeleteSoft;
}

MemoryItem item_from_row(const Stmt& st) {
    MemoryItem item;
    item.id = id_text(st.col_int(0));
    item.text = st.col_text(1);
    item.type = st.col_opt_text(2);
    item.tags = tags_from_json(st.col_text(3));
    item.facets = facets_from_json(st.col_text(4));
    item.weight = st.col_real(5);
    item.embedding = st.col_blob_doubles(6);
    item.time_ns = st.col_opt_int(7);
    item.source = st.col_opt_text(8);
    item.actor = st.col_opt_text(9);
    item.location = st.col_opt_text(10);
    if (auto p = st.col_opt_int(11)) item.parent_id = id_text(*p);
    if (auto m = st.col_opt_int(12)) item.merged_into = id_text(*m);
    item.deleted = st.col_int(13) != 0;
    if (auto until = st.col_opt_int(14)) {
        ExpiryInfo e;
        e.until_ns = *until;
        e.action = expire_action_from_text(st.col_text(15));
        e.applied = st.col_int(16) != 0;
        item.expiry = e;
    }
    if (!st.is_null(17) || !st.is_null(18)) {
        ReminderInfo r;
        r.at_ns = st.col_opt_int(17);
        r.cadence = st.col_opt_text(18);
        item.reminder = r;
    }
    item.created_ns = st.col_int(19);
    item.updated_ns = st.col_int(20);
    if (!st.is_null(21)) {
        LockInfo lock;
        lock.mode = st.col_text(21) == "append_only" ? LockMode::AppendOnly
                                                     : LockMode::ReadOnly;
        lock.reason = st.col_opt_text(22);
        lock.allow = ops_from_json(st.col_text(23));
        lock.deny = ops_from_json(st.col_text(24));
        for (const auto& r : tags_from_json(st.col_text(25)))
            lock.reviewers.push_back(r);
        lock.expires_ns = st.col_opt_int(26);
        item.lock = lock;
    }
    return item;
}

bool denies(const MemoryItem& item, OpKind op, std::int64_t now) {
    auto lock = item.effective_lock(now);
    if (!lock) return false;
    return std::find(lock->deny.begin(), lock->deny.end(), op) != lock->deny.end();
}

// Governance gate for one item under one mutating op. Retrieval never calls
// this; denied items are silently omitted from reads instead.
std::optional<Diagnostic> mutation_block(const MemoryItem& item, const TypedOp& op,
                                         std::int64_t now) {
    const auto lock = item.effective_lock(now);
    if (lock &&
        std::find(lock->deny.begin(), lock->deny.end(), op.op) != lock->deny.end())
        return Diagnostic{"E_POLICY_DENIED", "/target", "exec",
                          "item " + item.id + " denies " + to_string(op.op)};

    const bool hard_delete = op.op == OpKind::Delete &&
                             std::get<TypedDelete>(op.args).mode == DeleteMode::Hard;
    if (lock && hard_delete)
        return Diagnostic{"E_LOCKED", "/target", "exec",
                          "item " + item.id + " is locked and cannot be hard-deleted"};

    if (lock && lock->mode == LockMode::ReadOnly)
        return Diagnostic{"E_LOCKED", "/target", "exec",
                          "item " + item.id + " is read_only"};

    if (lock && lock->mode == LockMode::AppendOnly) {
        bool blocked = false;
        switch (op.op) {
            case OpKind::Update:
            case OpKind::Delete:
                blocked = true;
                break;
            case OpKind::Label:
                blocked = std::get<TypedLabel>(op.args).mode != LabelMode::Add;
                break;
            case OpKind::Merge:
                blocked = std::get<TypedMerge>(op.args).delete_children;
                break;
            default:
                break;
        }
        if (blocked)
            return Diagnostic{"E_LOCKED", "/target", "exec",
                              "item " + item.id + " is append_only; " +
                                  to_string(op.op) + " would rewrite it"};
    }

    if (item.expired(now) && (op.op == OpKind::Update || op.op == OpKind::Expire))
        return Diagnostic{"E_EXPIRED", "/target", "exec",
                          "item " + item.id + " has expired"};
    return std::nullopt;
}

json render_time(std::int64_t ns) { return format_rfc3339_utc(ns); }

}  // namespace

// ---- construction -----------------------------------------------------------

MemoryStore::MemoryStore(const std::string& path, std::shared_ptr<ServiceInterface> services,
                         ScoreWeights weights)
    : services_(std::move(services)), weights_(weights) {
    if (sqlite3_open(path.c_str(), &db_) != SQLITE_OK) {
        const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        throw StoreError(StoreError::Code::Io, "cannot open " + path + ": " + msg);
    }
    init_schema();
}

MemoryStore::~MemoryStore() { sqlite3_close(db_); }

bool MemoryStore::database_exists(const std::string& path) {
    if (path == ":memory:" || path.empty()) return false;
    std::error_code ec;
    return std::filesystem::exists(path, ec);
}

void MemoryStore::init_schema() {
    exec_sql(db_, R"sql(
CREATE TABLE IF NOT EXISTS memory_items (
  id INTEGER PRIMARY KEY,
  text TEXT NOT NULL,
  type TEXT,
  tags TEXT NOT NULL DEFAULT '[]',
  facets TEXT NOT NULL DEFAULT '{}',
  weight REAL NOT NULL DEFAULT 0.5,
  embedding BLOB,
  time_ns INTEGER,
  source TEXT,
  actor TEXT,
  location TEXT,
  parent_id INTEGER,
  merged_into INTEGER,
  deleted INTEGER NOT NULL DEFAULT 0,
  expiry_until_ns INTEGER,
  expiry_action TEXT,
  expiry_applied INTEGER NOT NULL DEFAULT 0,
  reminder_at_ns INTEGER,
  reminder_cadence TEXT,
  created_ns INTEGER NOT NULL,
  updated_ns INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS lineage (
  parent_id INTEGER NOT NULL,
  child_id INTEGER NOT NULL,
  kind TEXT NOT NULL,
  PRIMARY KEY (parent_id, child_id, kind)
);
CREATE TABLE IF NOT EXISTS locks (
  item_id INTEGER PRIMARY KEY,
  mode TEXT NOT NULL,
  reason TEXT,
  allow TEXT NOT NULL DEFAULT '[]',
  deny TEXT NOT NULL DEFAULT '[]',
  reviewers TEXT NOT NULL DEFAULT '[]',
  expires_ns INTEGER,
  created_ns INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS item_triggers (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  item_id INTEGER NOT NULL,
  kind TEXT NOT NULL,
  at_ns INTEGER,
  cadence TEXT,
  action TEXT
);
CREATE TABLE IF NOT EXISTS audit_log (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  actor TEXT,
  op TEXT NOT NULL,
  affected TEXT NOT NULL DEFAULT '[]',
  before_digest TEXT NOT NULL,
  after_digest TEXT NOT NULL,
  ts_ns INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS counters (
  name TEXT PRIMARY KEY,
  value INTEGER NOT NULL
);
INSERT OR IGNORE INTO counters(name, value) VALUES ('item_seq', 0);
CREATE INDEX IF NOT EXISTS idx_items_deleted ON memory_items(deleted);
)sql");
}

bool MemoryStore::supports(OpKind) const { return true; }

// ---- low-level access -------------------------------------------------------

namespace {

std::optional<MemoryItem> load_item(sqlite3* db, std::int64_t id) {
    Stmt st(db, (std::string(kItemSelect) + "WHERE i.id = ?").c_str());
    st.bind_int(1, id);
    if (!st.step()) return std::nullopt;
    return item_from_row(st);
}

std::vector<MemoryItem> load_items_where(sqlite3* db, const std::string& where_order) {
    Stmt st(db, (std::string(kItemSelect) + where_order).c_str());
    std::vector<MemoryItem> items;
    while (st.step()) items.push_back(item_from_row(st));
    return items;
}

}  // namespace

std::optional<MemoryItem> MemoryStore::get_item(const std::string& id) {
    auto num = parse_id(id);
    if (!num) return std::nullopt;
    return load_item(db_, *num);
}

std::vector<MemoryItem> MemoryStore::all_items(bool include_deleted) {
    return load_items_where(db_, include_deleted ? "ORDER BY i.id"
                                                 : "WHERE i.deleted = 0 ORDER BY i.id");
}

std::int64_t MemoryStore::active_count() {
    Stmt st(db_, "SELECT COUNT(*) FROM memory_items WHERE deleted = 0");
    st.step();
    return st.col_int(0);
}

std::int64_t MemoryStore::trigger_count(const std::optional<std::string>& item_id) {
    if (!item_id) {
        Stmt st(db_, "SELECT COUNT(*) FROM item_triggers");
        st.step();
        return st.col_int(0);
    }
    auto num = parse_id(*item_id);
    if (!num) return 0;
    Stmt st(db_, "SELECT COUNT(*) FROM item_triggers WHERE item_id = ?");
    st.bind_int(1, *num);
    st.step();
    return st.col_int(0);
}

std::vector<LineageRecord> MemoryStore::lineage_records() {
    Stmt st(db_, "SELECT parent_id, child_id, kind FROM lineage "
                 "ORDER BY parent_id, child_id, kind");
    std::vector<LineageRecord> out;
    while (st.step())
        out.push_back({id_text(st.col_int(0)), id_text(st.col_int(1)), st.col_text(2)});
    return out;
}

std::vector<AuditRecord> MemoryStore::audit_entries() {
    Stmt st(db_, "SELECT seq, actor, op, affected, before_digest, after_digest, ts_ns "
                 "FROM audit_log ORDER BY seq");
    std::vector<AuditRecord> out;
    while (st.step()) {
        AuditRecord rec;
        rec.seq = st.col_int(0);
        rec.actor = st.col_opt_text(1);
        rec.op = st.col_text(2);
        rec.affected = tags_from_json(st.col_text(3));
        rec.before_digest = st.col_text(4);
        rec.after_digest = st.col_text(5);
        rec.ts_ns = st.col_int(6);
        out.push_back(std::move(rec));
    }
    return out;
}

json MemoryStore::query_value(const std::string& sql) {
    sqlite3_stmt* raw = nullptr;
    if (sqlite3_prepare_v2(db_, sql.c_str(), -1, &raw, nullptr) != SQLITE_OK) {
        std::string msg = sqlite3_errmsg(db_);
        throw StoreError(StoreError::Code::BadQuery, "cannot prepare query: " + msg);
    }
    struct Guard {
        sqlite3_stmt* s;
        ~Guard() { sqlite3_finalize(s); }
    } guard{raw};
    if (!sqlite3_stmt_readonly(raw))
        throw StoreError(StoreError::Code::BadQuery, "only read-only queries are allowed");
    const int rc = sqlite3_step(raw);
    if (rc == SQLITE_DONE) return json();
    if (rc != SQLITE_ROW) fail_sql(db_, "query step");
    switch (sqlite3_column_type(raw, 0)) {
        case SQLITE_INTEGER: return json(sqlite3_column_int64(raw, 0));
        case SQLITE_FLOAT: return json(sqlite3_column_double(raw, 0));
        case SQLITE_TEXT:
            return json(std::string(reinterpret_cast<const char*>(sqlite3_column_text(raw, 0))));
        case SQLITE_NULL: return json();
        default: return json();
    }
}

// ---- scoring and resolution -------------------------------------------------

ScoreBreakdown MemoryStore::score_item(const std::string& query,
                                       const MemoryItem& item) const {
    ScoreBreakdown b;
    std::string haystack = item.text;
    for (const auto& tag : item.tags) {
        haystack += ' ';
        haystack += tag;
    }
    const double lex = lexical_overlap(query, haystack);
    double cos = 0.0;
    if (item.embedding && !item.embedding->empty()) {
        cos = cosine_similarity(services_->embed(query), *item.embedding);
        b.vector_part = weights_.vector * cos;
        b.lexical_part = weights_.lexical * lex;
        b.weight_part = weights_.weight * item.weight;
    } else {
        // no vector evidence: redistribute its share onto the other terms
        const double rest = weights_.lexical + weights_.weight;
        const double wl = rest > 0.0 ? weights_.lexical / rest : 0.0;
        const double ww = rest > 0.0 ? weights_.weight / rest : 0.0;
        b.lexical_part = wl * lex;
        b.weight_part = ww * item.weight;
    }
    b.matched = b.vector_part + b.lexical_part > 0.0;
    b.total = b.vector_part + b.lexical_part + b.weight_part;
    return b;
}

namespace {

bool filter_matches(const ResolvedFilter& f, const MemoryItem& item) {
    for (const auto& tag : f.has_tags) {
        if (std::find(item.tags.begin(), item.tags.end(), tag) == item.tags.end())
            return false;
    }
    if (f.type && item.type != *f.type) return false;
    if (f.time_range) {
        if (!item.time_ns) return false;
        if (*item.time_ns < f.time_range->start_ns || *item.time_ns > f.time_range->end_ns)
            return false;
    }
    if (f.weight_range &&
        (item.weight < f.weight_range->first || item.weight > f.weight_range->second))
        return false;
    return true;
}

void sort_time_desc(std::vector<MemoryItem>& items) {
    std::stable_sort(items.begin(), items.end(), [](const MemoryItem& a, const MemoryItem& b) {
        if (a.time_ns.has_value() != b.time_ns.has_value()) return a.time_ns.has_value();
        if (a.time_ns && b.time_ns && *a.time_ns != *b.time_ns)
            return *a.time_ns > *b.time_ns;
        return *parse_id(a.id) < *parse_id(b.id);
    });
}

bool hidden_at_retrieval(const MemoryItem& item, OpKind op, std::int64_t now,
                         bool explicit_ids) {
    if (item.deleted) return true;
    if (item.expired(now)) return true;
    if (item.archived() && !explicit_ids) return true;
    if (denies(item, op, now)) return true;
    return false;
}

}  // namespace

std::vector<std::string> MemoryStore::resolve(const ResolvedTarget& target, OpKind op,
                                              std::int64_t now_ns) {
    const Stage stage = infer_stage(op);

    if (const auto* ids = std::get_if<ResolvedIds>(&target)) {
        std::vector<std::string> missing;
        std::vector<std::string> found;
        for (const auto& id : ids->ids) {
            auto num = parse_id(id);
            std::optional<MemoryItem> item = num ? load_item(db_, *num) : std::nullopt;
            if (!item) {
                missing.push_back(id);
                continue;
            }
            if (stage == Stage::Ret && hidden_at_retrieval(*item, op, now_ns, true)) continue;
            found.push_back(id);
        }
        if (!missing.empty()) {
            std::string joined;
            for (const auto& id : missing) {
                if (!joined.empty()) joined += ", ";
                joined += id;
            }
            fail_exec("E_UNKNOWN_ID", "/target/ids", "unknown ids: " + joined);
        }
        return found;
    }

    if (const auto* filter = std::get_if<ResolvedFilter>(&target)) {
        auto items = load_items_where(db_, "WHERE i.deleted = 0");
        std::vector<MemoryItem> matched;
        for (auto& item : items) {
            if (!filter_matches(*filter, item)) continue;
            if (stage == Stage::Ret && hidden_at_retrieval(item, op, now_ns, false)) continue;
            matched.push_back(std::move(item));
        }
        sort_time_desc(matched);
        std::vector<std::string> out;
        for (const auto& item : matched) {
            if (filter->limit && static_cast<std::int64_t>(out.size()) >= *filter->limit)
                break;
            out.push_back(item.id);
        }
        return out;
    }

    if (const auto* search = std::get_if<ResolvedSearch>(&target)) {
        auto items = load_items_where(db_, "WHERE i.deleted = 0");
        struct Scored {
            std::string id;
            double score;
            std::int64_t num;
        };
        std::vector<Scored> scored;
        for (const auto& item : items) {
            if (item.archived()) continue;  // search never reaches the archive
            if (stage == Stage::Ret && hidden_at_retrieval(item, op, now_ns, false)) continue;
            ScoreBreakdown b = score_item(search->query, item);
            if (!b.matched) continue;  // weight prior alone is not a match
            scored.push_back({item.id, b.total, *parse_id(item.id)});
        }
        std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.num < b.num;
        });
        std::vector<std::string> out;
        for (const auto& s : scored) {
            if (search->limit && static_cast<std::int64_t>(out.size()) >= *search->limit)
                break;
            out.push_back(s.id);
        }
        return out;
    }

    // all: every active item, ascending id
    auto items = load_items_where(db_, "WHERE i.deleted = 0 ORDER BY i.id");
    std::vector<std::string> out;
    for (const auto& item : items) {
        if (stage == Stage::Ret && hidden_at_retrieval(item, op, now_ns, false)) continue;
        out.push_back(item.id);
    }
    return out;
}

// ---- digest -------------------------------------------------------------------

std::string MemoryStore::digest_in_tx() {
    json doc;
    {
        json items = json::array();
        Stmt st(db_, "SELECT id, text, type, tags, facets, weight, embedding, time_ns, "
                     "source, actor, location, parent_id, merged_into, deleted, "
                     "expiry_until_ns, expiry_action, expiry_applied, reminder_at_ns, "
                     "reminder_cadence, created_ns, updated_ns "
                     "FROM memory_items ORDER BY id");
        while (st.step()) {
            json row = json::array();
            row.push_back(st.col_int(0));
            row.push_back(st.col_text(1));
            row.push_back(st.is_null(2) ? json() : json(st.col_text(2)));
            row.push_back(json::parse(st.col_text(3)));
            row.push_back(json::parse(st.col_text(4)));
            row.push_back(st.col_real(5));
            if (st.is_null(6)) {
                row.push_back(json());
            } else {
                auto blob = st.col_blob_doubles(6);
                std::string_view bytes(reinterpret_cast<const char*>(blob->data()),
                                       blob->size() * sizeof(double));
                row.push_back(fnv1a64_hex(bytes));
            }
            for (int c = 7; c <= 20; ++c) {
                if (st.is_null(c)) {
                    row.push_back(json());
                } else if (c == 15) {
                    row.push_back(st.col_text(c));
                } else {
                    row.push_back(st.col_int(c));
                }
            }
            items.push_back(std::move(row));
        }
        doc["items"] = std::move(items);
    }
    {
        json rows = json::array();
        Stmt st(db_, "SELECT parent_id, child_id, kind FROM lineage "
                     "ORDER BY parent_id, child_id, kind");
        while (st.step())
            rows.push_back(json::array({st.col_int(0), st.col_int(1), st.col_text(2)}));
        doc["lineage"] = std::move(rows);
    }
    {
        json rows = json::array();
        Stmt st(db_, "SELECT item_id, mode, reason, allow, deny, reviewers, expires_ns "
                     "FROM locks ORDER BY item_id");
        while (st.step()) {
            rows.push_back(json::array(
                {st.col_int(0), st.col_text(1), st.is_null(2) ? json() : json(st.col_text(2)),
                 json::parse(st.col_text(3)), json::parse(st.col_text(4)),
                 json::parse(st.col_text(5)), st.is_null(6) ? json() : json(st.col_int(6))}));
        }
        doc["locks"] = std::move(rows);
    }
    {
        json rows = json::array();
        Stmt st(db_, "SELECT seq, item_id, kind, at_ns, cadence, action FROM item_triggers "
                     "ORDER BY seq");
        while (st.step()) {
            rows.push_back(json::array(
                {st.col_int(0), st.col_int(1), st.col_text(2),
                 st.is_null(3) ? json() : json(st.col_int(3)),
                 st.is_null(4) ? json() : json(st.col_text(4)),
                 st.is_null(5) ? json() : json(st.col_text(5))}));
        }
        doc["item_triggers"] = std::move(rows);
    }
    return fnv1a64_hex(doc.dump());
}

std::string MemoryStore::snapshot_digest() { return digest_in_tx(); }

// ---- execution ----------------------------------------------------------------

struct MemoryStore::ExecContext {
    MemoryStore& store;
    sqlite3* db;
    const TypedOp& op;
    std::int64_t now;

    const ResolvedTarget& target() const {
        if (!op.target)
            fail_exec("E_EMPTY_TARGET", "/target", "operation requires a target");
        return *op.target;
    }

    std::vector<MemoryItem> load_targets() {
        std::vector<std::string> ids = store.resolve(target(), op.op, now);
        std::vector<MemoryItem> items;
        items.reserve(ids.size());
        for (const auto& id : ids) {
            auto item = load_item(db, *parse_id(id));
            if (item) items.push_back(std::move(*item));
        }
        return items;
    }

    void require_unblocked(const std::vector<MemoryItem>& items) {
        for (const auto& item : items) {
            if (auto block = mutation_block(item, op, now)) throw ExecutionError(*block);
        }
    }

    std::int64_t next_id() {
        exec_sql(db, "UPDATE counters SET value = value + 1 WHERE name = 'item_seq'");
        Stmt st(db, "SELECT value FROM counters WHERE name = 'item_seq'");
        st.step();
        return st.col_int(0);
    }

    std::int64_t insert_item(const std::string& text, const std::optional<std::string>& type,
                             const std::vector<std::string>& tags,
                             const std::map<std::string, std::string>& facets, double weight,
                             const std::optional<std::vector<double>>& embedding,
                             std::optional<std::int64_t> time_ns,
                             const std::optional<std::string>& source,
                             const std::optional<std::string>& actor,
                             const std::optional<std::string>& location,
                             std::optional<std::int64_t> parent_id) {
        const std::int64_t id = next_id();
        Stmt st(db, "INSERT INTO memory_items (id, text, type, tags, facets, weight, "
                    "embedding, time_ns, source, actor, location, parent_id, created_ns, "
                    "updated_ns) VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?)");
        st.bind_int(1, id);
        st.bind_text(2, text);
        st.bind_opt_text(3, type);
        st.bind_text(4, json(tags).dump());
        st.bind_text(5, json(facets).dump());
        st.bind_real(6, weight);
        if (embedding && !embedding->empty())
            st.bind_blob(7, embedding->data(), embedding->size() * sizeof(double));
        else
            st.bind_null(7);
        st.bind_opt_int(8, time_ns);
        st.bind_opt_text(9, source);
        st.bind_opt_text(10, actor);
        st.bind_opt_text(11, location);
        st.bind_opt_int(12, parent_id);
        st.bind_int(13, now);
        st.bind_int(14, now);
        st.step();
        return id;
    }

    void save_tags(const std::string& id, const std::vector<std::string>& tags) {
        Stmt st(db, "UPDATE memory_items SET tags = ?, updated_ns = ? WHERE id = ?");
        st.bind_text(1, json(tags).dump()).bind_int(2, now).bind_int(3, *parse_id(id));
        st.step();
    }

    void save_facets(const std::string& id, const std::map<std::string, std::string>& facets) {
        Stmt st(db, "UPDATE memory_items SET facets = ?, updated_ns = ? WHERE id = ?");
        st.bind_text(1, json(facets).dump()).bind_int(2, now).bind_int(3, *parse_id(id));
        st.step();
    }

    void save_weight(const std::string& id, double weight) {
        Stmt st(db, "UPDATE memory_items SET weight = ?, updated_ns = ? WHERE id = ?");
        st.bind_real(1, weight).bind_int(2, now).bind_int(3, *parse_id(id));
        st.step();
    }

    void add_lineage(std::int64_t parent, std::int64_t child, const char* kind) {
        Stmt st(db, "INSERT OR IGNORE INTO lineage (parent_id, child_id, kind) VALUES (?,?,?)");
        st.bind_int(1, parent).bind_int(2, child).bind_text(3, kind);
        st.step();
    }

    void add_trigger(std::int64_t item, const char* kind, std::optional<std::int64_t> at,
                     const std::optional<std::string>& cadence,
                     const std::optional<std::string>& action) {
        Stmt st(db, "INSERT INTO item_triggers (item_id, kind, at_ns, cadence, action) "
                    "VALUES (?,?,?,?,?)");
        st.bind_int(1, item)
            .bind_text(2, kind)
            .bind_opt_int(3, at)
            .bind_opt_text(4, cadence)
            .bind_opt_text(5, action);
        st.step();
    }

    ExecutionResult ok_result(std::vector<std::string> affected, std::int64_t delta,
                              json payload = json::object(),
                              std::vector<Diagnostic> warnings = {}) {
        ExecutionResult r;
        r.op = op.op;
        r.affected_ids = std::move(affected);
        r.count_delta = delta;
        r.payload = std::move(payload);
        r.diagnostics = std::move(warnings);
        return r;
    }

    ExecutionResult run() {
        switch (op.op) {
            case OpKind::Encode: return encode();
            case OpKind::Update: return update();
            case OpKind::Label: return label();
            case OpKind::Promote: return promote();
            case OpKind::Demote: return demote();
            case OpKind::Merge: return merge();
            case OpKind::Delete: return del();
            case OpKind::Split: return split();
            case OpKind::Lock: return lock();
            case OpKind::Expire: return expire();
            case OpKind::Retrieve: return retrieve();
            case OpKind::Summarize: return summarize();
        }
        fail_exec("E_UNSUPPORTED_OP", "/op", "unhandled op");
    }

    ExecutionResult encode() {
        const auto& args = std::get<TypedEncode>(op.args);
        std::optional<std::vector<double>> embedding;
        if (args.use_embedding) embedding = store.services_->embed(args.text);
        std::optional<std::int64_t> time_ns;
        if (args.time) time_ns = args.time->unix_nanos;
        const std::int64_t id =
            insert_item(args.text, args.type, args.tags, args.facets, 0.5, embedding,
                        time_ns, args.source, op.meta.actor, args.location, std::nullopt);
        return ok_result({id_text(id)}, 1, json{{"id", id_text(id)}});
    }

    ExecutionResult update() {
        const auto& args = std::get<TypedUpdate>(op.args);
        auto items = load_targets();
        require_unblocked(items);

        // reject the whole set before touching anything
        for (auto it = args.set.begin(); it != args.set.end(); ++it) {
            const std::string& key = it.key();
            const json& value = it.value();
            const bool nullable = key == "type" || key == "time" || key == "source" ||
                                  key == "actor" || key == "location";
            if (key == "text") {
                if (!value.is_string())
                    fail_exec("E_BAD_VALUE", "/args/set/text", "text must be a string");
            } else if (key == "weight") {
                if (!value.is_number())
                    fail_exec("E_BAD_VALUE", "/args/set/weight", "weight must be a number");
            } else if (key == "tags") {
                if (!value.is_array())
                    fail_exec("E_BAD_VALUE", "/args/set/tags", "tags must be an array");
                for (const auto& t : value)
                    if (!t.is_string())
                        fail_exec("E_BAD_VALUE", "/args/set/tags", "tags must be strings");
            } else if (key == "facets") {
                if (!value.is_object())
                    fail_exec("E_BAD_VALUE", "/args/set/facets", "facets must be an object");
                for (const auto& [k, v] : value.items()) {
                    (void)k;
                    if (!v.is_string())
                        fail_exec("E_BAD_VALUE", "/args/set/facets",
                                  "facet values must be strings");
                }
            } else if (nullable) {
                if (!value.is_string() && !value.is_null())
                    fail_exec("E_BAD_VALUE", "/args/set/" + key,
                              key + " must be a string or null");
                if (key == "time" && value.is_string() &&
                    !parse_rfc3339(value.get<std::string>()))
                    fail_exec("E_BAD_VALUE", "/args/set/time",
                              "time must be an RFC 3339 timestamp");
            } else {
                fail_exec("E_UNKNOWN_FIELD", "/args/set/" + key,
                          "\"" + key + "\" is not an updatable field");
            }
        }

        std::vector<std::string> affected;
        for (const auto& item : items) {
            const std::int64_t id = *parse_id(item.id);
            for (auto it = args.set.begin(); it != args.set.end(); ++it) {
                const std::string& key = it.key();
                const json& value = it.value();
                if (key == "text") {
                    Stmt st(db, "UPDATE memory_items SET text = ? WHERE id = ?");
                    st.bind_text(1, value.get<std::string>()).bind_int(2, id);
                    st.step();
                } else if (key == "weight") {
                    Stmt st(db, "UPDATE memory_items SET weight = ? WHERE id = ?");
                    st.bind_real(1, std::clamp(value.get<double>(), 0.0, 1.0)).bind_int(2, id);
                    st.step();
                } else if (key == "tags") {
                    std::vector<std::string> tags;
                    for (const auto& t : value) {
                        const auto s = t.get<std::string>();
                        if (std::find(tags.begin(), tags.end(), s) == tags.end())
                            tags.push_back(s);
                    }
                    Stmt st(db, "UPDATE memory_items SET tags = ? WHERE id = ?");
                    st.bind_text(1, json(tags).dump()).bind_int(2, id);
                    st.step();
                } else if (key == "facets") {
                    Stmt st(db, "UPDATE memory_items SET facets = ? WHERE id = ?");
                    st.bind_text(1, value.dump()).bind_int(2, id);
                    st.step();
                } else if (key == "time") {
                    Stmt st(db, "UPDATE memory_items SET time_ns = ? WHERE id = ?");
                    if (value.is_null())
                        st.bind_null(1);
                    else
                        st.bind_int(1, *parse_rfc3339(value.get<std::string>()));
                    st.bind_int(2, id);
                    st.step();
                } else {
                    Stmt st(db, ("UPDATE memory_items SET " + key + " = ? WHERE id = ?").c_str());
                    if (value.is_null())
                        st.bind_null(1);
                    else
                        st.bind_text(1, value.get<std::string>());
                    st.bind_int(2, id);
                    st.step();
                }
            }
            Stmt st(db, "UPDATE memory_items SET updated_ns = ? WHERE id = ?");
            st.bind_int(1, now).bind_int(2, id);
            st.step();
            affected.push_back(item.id);
        }
        return ok_result(std::move(affected), 0);
    }

    ExecutionResult label() {
        const auto& args = std::get<TypedLabel>(op.args);
        auto items = load_targets();
        require_unblocked(items);

        std::vector<std::string> affected;
        for (auto& item : items) {
            std::vector<std::string> tags = item.tags;
            std::map<std::string, std::string> facets = item.facets;
            switch (args.mode) {
                case LabelMode::Add:
                    for (const auto& t : args.tags) {
                        if (std::find(tags.begin(), tags.end(), t) == tags.end())
                            tags.push_back(t);
                    }
                    for (const auto& [k, v] : args.facets) facets[k] = v;
                    break;
                case LabelMode::Replace:
                    if (!args.tags.empty()) tags = args.tags;
                    if (!args.facets.empty()) facets = args.facets;
                    break;
                case LabelMode::Remove:
                    for (const auto& t : args.tags)
                        tags.erase(std::remove(tags.begin(), tags.end(), t), tags.end());
                    for (const auto& [k, v] : args.facets) {
                        (void)v;
                        facets.erase(k);
                    }
                    break;
            }
            save_tags(item.id, tags);
            save_facets(item.id, facets);
            affected.push_back(item.id);
        }
        return ok_result(std::move(affected), 0);
    }

    ExecutionResult promote() {
        const auto& args = std::get<TypedPromote>(op.args);
        auto items = load_targets();
        require_unblocked(items);

        std::vector<std::string> affected;
        std::vector<Diagnostic> warnings;
        bool decreased = false;
        for (const auto& item : items) {
            const double next = normalize_weight(item.weight, args.weight, args.weight_delta);
            if (next < item.weight) decreased = true;
            save_weight(item.id, next);
            if (args.reminder) {
                Stmt st(db, "UPDATE memory_items SET reminder_at_ns = ?, reminder_cadence = ?, "
                            "updated_ns = ? WHERE id = ?");
                st.bind_opt_int(1, args.reminder->at_ns)
                    .bind_opt_text(2, args.reminder->cadence)
                    .bind_int(3, now)
                    .bind_int(4, *parse_id(item.id));
                st.step();
                add_trigger(*parse_id(item.id), "reminder", args.reminder->at_ns,
                            args.reminder->cadence, std::nullopt);
            }
            affected.push_back(item.id);
        }
        if (decreased)
            warnings.push_back({"W_WEIGHT_NOT_INCREASED", "/args", "exec",
                                "Promote lowered at least one weight"});
        return ok_result(std::move(affected), 0, json::object(), std::move(warnings));
    }

    ExecutionResult demote() {
        const auto& args = std::get<TypedDemote>(op.args);
        auto items = load_targets();
        require_unblocked(items);

        std::vector<std::string> affected;
        std::vector<Diagnostic> warnings;
        bool increased = false;
        for (auto& item : items) {
            const double next = normalize_weight(item.weight, args.weight, args.weight_delta);
            if (next > item.weight) increased = true;
            save_weight(item.id, next);
            if (args.archive) {
                auto facets = item.facets;
                facets["archived"] = "true";
                save_facets(item.id, facets);
            }
            affected.push_back(item.id);
        }
        if (increased)
            warnings.push_back({"W_WEIGHT_NOT_DECREASED", "/args", "exec",
                                "Demote raised at least one weight"});
        return ok_result(std::move(affected), 0, json::object(), std::move(warnings));
    }

    ExecutionResult merge() {
        const auto& args = std::get<TypedMerge>(op.args);
        auto items = load_targets();
        if (items.size() < 2)
            fail_exec("E_TOO_FEW_SOURCES", "/target",
                      "Merge needs at least two sources, got " +
                          std::to_string(items.size()));
        require_unblocked(items);

        std::vector<std::string> texts;
        std::vector<std::string> tags;
        std::map<std::string, std::string> facets;
        double weight = 0.0;
        std::optional<std::int64_t> earliest;
        for (const auto& item : items) {
            texts.push_back(item.text);
            for (const auto& t : item.tags) {
                if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
            }
            for (const auto& [k, v] : item.facets) facets.emplace(k, v);
            weight = std::max(weight, item.weight);
            if (item.time_ns && (!earliest || *item.time_ns < *earliest))
                earliest = item.time_ns;
        }

        const std::string merged = store.services_->merge_text(texts);
        auto embedding = store.services_->embed(merged);
        const std::int64_t primary = insert_item(
            merged, items.front().type, tags, facets, weight, embedding, earliest,
            std::nullopt, op.meta.actor, std::nullopt, std::nullopt);

        std::int64_t delta = 1;
        std::vector<std::string> affected{id_text(primary)};
        for (const auto& item : items) {
            const std::int64_t src = *parse_id(item.id);
            add_lineage(src, primary, "merge");
            Stmt st(db, "UPDATE memory_items SET merged_into = ?, updated_ns = ? WHERE id = ?");
            st.bind_int(1, primary).bind_int(2, now).bind_int(3, src);
            st.step();
            if (args.delete_children) {
                Stmt del(db, "UPDATE memory_items SET deleted = 1, updated_ns = ? "
                             "WHERE id = ? AND deleted = 0");
                del.bind_int(1, now).bind_int(2, src);
                del.step();
                if (!item.deleted) --delta;
            }
            affected.push_back(item.id);
        }
        return ok_result(std::move(affected), delta, json{{"primary_id", id_text(primary)}});
    }

    ExecutionResult del() {
        const auto& args = std::get<TypedDelete>(op.args);
        auto items = load_targets();
        require_unblocked(items);

        std::int64_t delta = 0;
        std::vector<std::string> affected;
        for (const auto& item : items) {
            const std::int64_t id = *parse_id(item.id);
            if (args.mode == DeleteMode::Soft) {
                if (!item.deleted) {
                    Stmt st(db, "UPDATE memory_items SET deleted = 1, updated_ns = ? "
                                "WHERE id = ?");
                    st.bind_int(1, now).bind_int(2, id);
                    st.step();
                    --delta;
                }
            } else {
                if (!item.deleted) --delta;
                for (const char* sql :
                     {"DELETE FROM memory_items WHERE id = ?", "DELETE FROM locks WHERE item_id = ?",
                      "DELETE FROM item_triggers WHERE item_id = ?",
                      "DELETE FROM lineage WHERE parent_id = ? OR child_id = ?"}) {
                    Stmt st(db, sql);
                    st.bind_int(1, id);
                    if (std::string_view(sql).find("lineage") != std::string_view::npos)
                        st.bind_int(2, id);
                    st.step();
                }
                // no dangling provenance pointers to a row that no longer exists
                Stmt unlink(db, "UPDATE memory_items SET merged_into = NULL WHERE merged_into = ?");
                unlink.bind_int(1, id);
                unlink.step();
                Stmt unparent(db, "UPDATE memory_items SET parent_id = NULL WHERE parent_id = ?");
                unparent.bind_int(1, id);
                unparent.step();
            }
            affected.push_back(item.id);
        }
        return ok_result(std::move(affected), delta);
    }

    ExecutionResult split() {
        const auto& args = std::get<TypedSplit>(op.args);
        auto items = load_targets();
        if (items.empty())
            fail_exec("E_EMPTY_TARGET", "/target", "Split target resolved to nothing");
        if (items.size() > 1)
            fail_exec("E_TARGET_ARITY", "/target",
                      "Split takes a single source, target resolved to " +
                          std::to_string(items.size()));
        require_unblocked(items);
        const MemoryItem& source = items.front();

        std::vector<std::string> parts = args.strategy == SplitStrategy::Sentences
                                             ? split_sentences(source.text)
                                             : split_chunks(source.text, args.chunk_size);
        if (parts.size() < 2)
            fail_exec("E_NOT_SPLITTABLE", "/target",
                      "item " + source.id + " does not divide into multiple parts");

        const std::int64_t src = *parse_id(source.id);
        std::vector<std::string> child_ids;
        for (const auto& part : parts) {
            std::optional<std::vector<double>> embedding;
            if (source.embedding) embedding = store.services_->embed(part);
            const std::int64_t child =
                insert_item(part, source.type, source.tags, {}, source.weight, embedding,
                            source.time_ns, source.source, op.meta.actor, source.location,
                            src);
            add_lineage(src, child, "split");
            child_ids.push_back(id_text(child));
        }
        auto facets = source.facets;
        facets["split"] = "true";
        save_facets(source.id, facets);

        std::vector<std::string> affected{source.id};
        affected.insert(affected.end(), child_ids.begin(), child_ids.end());
        return ok_result(std::move(affected), static_cast<std::int64_t>(child_ids.size()),
                         json{{"child_ids", child_ids}});
    }

    ExecutionResult lock() {
        const auto& args = std::get<TypedLock>(op.args);
        auto items = load_targets();

        for (const auto& item : items) {
            if (denies(item, OpKind::Lock, now))
                fail_exec("E_POLICY_DENIED", "/target",
                          "item " + item.id + " denies Lock");
            auto existing = item.effective_lock(now);
            if (existing && existing->mode != args.mode)
                fail_exec("E_ALREADY_LOCKED", "/target",
                          "item " + item.id + " already holds a " +
                              to_string(existing->mode) + " lock");
        }

        std::vector<std::string> affected;
        for (const auto& item : items) {
            Stmt st(db, "INSERT INTO locks (item_id, mode, reason, allow, deny, reviewers, "
                        "expires_ns, created_ns) VALUES (?,?,?,?,?,?,?,?) "
                        "ON CONFLICT(item_id) DO UPDATE SET mode = excluded.mode, "
                        "reason = excluded.reason, allow = excluded.allow, "
                        "deny = excluded.deny, reviewers = excluded.reviewers, "
                        "expires_ns = excluded.expires_ns, created_ns = excluded.created_ns");
            st.bind_int(1, *parse_id(item.id))
                .bind_text(2, to_string(args.mode))
                .bind_opt_text(3, args.reason)
                .bind_text(4, ops_to_json(args.allow))
                .bind_text(5, ops_to_json(args.deny))
                .bind_text(6, json(args.reviewers).dump())
                .bind_opt_int(7, args.expires_ns)
                .bind_int(8, now);
            st.step();
            affected.push_back(item.id);
        }
        return ok_result(std::move(affected), 0);
    }

    ExecutionResult expire() {
        const auto& args = std::get<TypedExpire>(op.args);
        auto items = load_targets();
        require_unblocked(items);

        std::vector<std::string> affected;
        for (const auto& item : items) {
            Stmt st(db, "UPDATE memory_items SET expiry_until_ns = ?, expiry_action = ?, "
                        "expiry_applied = 0, updated_ns = ? WHERE id = ?");
            st.bind_int(1, args.until_ns)
                .bind_text(2, to_string(args.on_expire))
                .bind_int(3, now)
                .bind_int(4, *parse_id(item.id));
            st.step();
            add_trigger(*parse_id(item.id), "expiry", args.until_ns, std::nullopt,
                        to_string(args.on_expire));
            affected.push_back(item.id);
        }
        return ok_result(std::move(affected), 0);
    }

    json render_item(const MemoryItem& item, const std::vector<std::string>& fields,
                     std::optional<double> score) {
        json full = json::object();
        full["id"] = item.id;
        full["text"] = item.text;
        if (item.type) full["type"] = *item.type;
        full["tags"] = item.tags;
        full["facets"] = item.facets;
        full["weight"] = item.weight;
        if (item.time_ns) full["time"] = render_time(*item.time_ns);
        if (item.source) full["source"] = *item.source;
        if (item.actor) full["actor"] = *item.actor;
        if (item.location) full["location"] = *item.location;
        if (item.parent_id) full["parent_id"] = *item.parent_id;
        if (item.merged_into) full["merged_into"] = *item.merged_into;
        if (score) full["score"] = *score;
        if (fields.empty()) return full;

        full["created_at"] = render_time(item.created_ns);
        full["updated_at"] = render_time(item.updated_ns);
        if (item.embedding) full["embedding"] = *item.embedding;
        json out = json::object();
        out["id"] = item.id;
        for (const auto& f : fields) {
            if (full.contains(f)) out[f] = full[f];
        }
        return out;
    }

    void apply_order_by(std::vector<MemoryItem>& items, OrderBy order) {
        if (order == OrderBy::Relevance) return;
        std::stable_sort(items.begin(), items.end(),
                         [&](const MemoryItem& a, const MemoryItem& b) {
                             if (a.time_ns.has_value() != b.time_ns.has_value())
                                 return a.time_ns.has_value();
                             if (a.time_ns && b.time_ns && *a.time_ns != *b.time_ns)
                                 return order == OrderBy::TimeDesc ? *a.time_ns > *b.time_ns
                                                                   : *a.time_ns < *b.time_ns;
                             return *parse_id(a.id) < *parse_id(b.id);
                         });
    }

    ExecutionResult retrieve() {
        const auto& args = std::get<TypedRetrieve>(op.args);
        auto items = load_targets();

        const auto* search = std::get_if<ResolvedSearch>(&target());
        std::vector<std::optional<double>> scores(items.size());
        if (search) {
            for (std::size_t i = 0; i < items.size(); ++i)
                scores[i] = store.score_item(search->query, items[i]).total;
            if (search->order_by != OrderBy::Relevance) {
                // re-rank the already-selected top-k by time
                std::vector<MemoryItem> sorted = items;
                apply_order_by(sorted, search->order_by);
                std::vector<std::optional<double>> resorted;
                for (const auto& item : sorted) {
                    for (std::size_t i = 0; i < items.size(); ++i) {
                        if (items[i].id == item.id) {
                            resorted.push_back(scores[i]);
                            break;
                        }
                    }
                }
                items = std::move(sorted);
                scores = std::move(resorted);
            }
        }

        json rendered = json::array();
        std::vector<std::string> affected;
        for (std::size_t i = 0; i < items.size(); ++i) {
            rendered.push_back(render_item(items[i], args.fields, scores[i]));
            affected.push_back(items[i].id);
        }
        return ok_result(std::move(affected), 0, json{{"items", std::move(rendered)}});
    }

    ExecutionResult summarize() {
        const auto& args = std::get<TypedSummarize>(op.args);
        auto items = load_targets();
        if (const auto* search = std::get_if<ResolvedSearch>(&target()))
            apply_order_by(items, search->order_by);
        if (items.empty())
            fail_exec("E_EMPTY_TARGET", "/target", "Summarize target resolved to nothing");

        std::vector<std::string> texts;
        std::vector<std::string> source_ids;
        for (const auto& item : items) {
            texts.push_back(item.text);
            source_ids.push_back(item.id);
        }
        const std::string summary =
            store.services_->summarize(texts, args.focus, args.max_tokens);

        std::string joined;
        for (const auto& t : texts) {
            if (!joined.empty()) joined += ' ';
            joined += t;
        }
        double similarity = 0.0;
        if (!normalize_whitespace(summary).empty() && !normalize_whitespace(joined).empty())
            similarity = cosine_similarity(store.services_->embed(summary),
                                           store.services_->embed(joined));

        auto embedding = normalize_whitespace(summary).empty()
                             ? std::optional<std::vector<double>>{}
                             : std::optional<std::vector<double>>(
                                   store.services_->embed(summary));
        const std::int64_t summary_id =
            insert_item(summary, std::string("summary"), {}, {}, 0.5, embedding, now,
                        std::nullopt, op.meta.actor, std::nullopt, std::nullopt);
        for (const auto& id : source_ids) add_lineage(*parse_id(id), summary_id, "summary");

        json payload{{"summary_id", id_text(summary_id)},
                     {"text", summary},
                     {"source_ids", source_ids},
                     {"similarity", similarity}};
        return ok_result({id_text(summary_id)}, 1, std::move(payload));
    }
};

void MemoryStore::sweep_expired(std::int64_t now_ns) {
    struct Due {
        std::int64_t id;
        ExpireAction action;
    };
    std::vector<Due> due;
    {
        Stmt st(db_, "SELECT id, expiry_action FROM memory_items WHERE deleted = 0 "
                     "AND expiry_applied = 0 AND expiry_until_ns IS NOT NULL "
                     "AND expiry_until_ns < ? ORDER BY id");
        st.bind_int(1, now_ns);
        while (st.step()) due.push_back({st.col_int(0), expire_action_from_text(st.col_text(1))});
    }
    for (const auto& d : due) {
        switch (d.action) {
            case ExpireAction::DeleteSoft: {
                Stmt st(db_, "UPDATE memory_items SET deleted = 1 WHERE id = ?");
                st.bind_int(1, d.id);
                st.step();
                break;
            }
            case ExpireAction::Demote: {
                Stmt st(db_, "UPDATE memory_items SET weight = 0.1 WHERE id = ?");
                st.bind_int(1, d.id);
                st.step();
                break;
            }
            case ExpireAction::Archive: {
                auto item = load_item(db_, d.id);
                auto facets = item->facets;
                facets["archived"] = "true";
                Stmt st(db_, "UPDATE memory_items SET facets = ? WHERE id = ?");
                st.bind_text(1, json(facets).dump()).bind_int(2, d.id);
                st.step();
                break;
            }
            case ExpireAction::Anonymize: {
                auto item = load_item(db_, d.id);
                auto facets = item->facets;
                facets.erase("entities");
                facets.erase("entity");
                Stmt st(db_, "UPDATE memory_items SET actor = NULL, source = NULL, "
                             "location = NULL, facets = ? WHERE id = ?");
                st.bind_text(1, json(facets).dump()).bind_int(2, d.id);
                st.step();
                break;
            }
        }
        Stmt mark(db_, "UPDATE memory_items SET expiry_applied = 1, updated_ns = ? "
                       "WHERE id = ?");
        mark.bind_int(1, now_ns).bind_int(2, d.id);
        mark.step();
    }
}

ExecutionResult MemoryStore::execute_inner(const TypedOp& op, std::int64_t now_ns) {
    ExecContext ctx{*this, db_, op, now_ns};
    return ctx.run();
}

ExecutionResult MemoryStore::execute(const TypedOp& op, std::int64_t now_ns) {
    const std::string before = digest_in_tx();
    exec_sql(db_, "BEGIN IMMEDIATE");
    ExecutionResult result;
    try {
        sweep_expired(now_ns);
        result = execute_inner(op, now_ns);
    } catch (const ExecutionError& e) {
        result = ExecutionResult::failure(op.op, e.diagnostic());
    } catch (const ServiceError& e) {
        result = ExecutionResult::failure(
            op.op, {"E_SERVICE", "/args", "exec", std::string("model service failed: ") +
                                                      e.what()});
    }
    result.op = op.op;
    result.dry_run = op.meta.dry_run;

    if (op.meta.dry_run || !result.ok()) {
        exec_sql(db_, "ROLLBACK");
        return result;
    }

    const std::string after = digest_in_tx();
    {
        json affected = result.affected_ids;
        Stmt st(db_, "INSERT INTO audit_log (actor, op, affected, before_digest, "
                     "after_digest, ts_ns) VALUES (?,?,?,?,?,?)");
        st.bind_opt_text(1, op.meta.actor)
            .bind_text(2, to_string(op.op))
            .bind_text(3, affected.dump())
            .bind_text(4, before)
            .bind_text(5, after)
            .bind_int(6, now_ns);
        st.step();
    }
    exec_sql(db_, "COMMIT");
    return result;
}

}  // namespace memop
