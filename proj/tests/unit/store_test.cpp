#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <memory>

#include "memop/store.hpp"
#include "memop/text.hpp"

using namespace memop;
using nlohmann::json;

namespace {

constexpr const char* kClock = "2025-10-01T00:00:00Z";

std::int64_t ts(const char* s) { return *parse_rfc3339(s); }

TypedOp op_at(const char* text, const char* clock = kClock) {
    return parse(decode_instance(std::string_view(text)),
                 ParseContext{parse_timestamp(clock)});
}

struct Fixture {
    std::shared_ptr<LocalServices> services = std::make_shared<LocalServices>();
    MemoryStore store{":memory:", services};

    ExecutionResult exec(const char* text, const char* clock = kClock) {
        return store.execute(op_at(text, clock), ts(clock));
    }

    ExecutionResult encode(const std::string& text, const std::string& extra_args = "",
                           const char* clock = kClock) {
        std::string inst = R"({"op":"Encode","args":{"payload":{"text":")" + text + R"("})" +
                           extra_args + "}}";
        return store.execute(op_at(inst.c_str(), clock), ts(clock));
    }
};

void expect_ok(const ExecutionResult& r) {
    if (!r.ok()) {
        for (const auto& d : r.diagnostics)
            MESSAGE(d.code, " ", d.path, " ", d.rule, " ", d.message);
    }
    REQUIRE(r.ok());
}

void expect_err(const ExecutionResult& r, const char* code) {
    REQUIRE_FALSE(r.ok());
    REQUIRE_FALSE(r.diagnostics.empty());
    CHECK(r.diagnostics.front().code == code);
    CHECK(r.diagnostics.front().rule == "exec");
}

}  // namespace

TEST_CASE("encode inserts an item with fixed initial weight") {
    Fixture f;
    auto r = f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"Key task: refine OKR review mechanism"},
        "type":"note","tags":["OKR","priority","OKR"],
        "facets":{"subject":"okr","topic":"review"},
        "time":"2025-09-28T12:00:00+08:00","source":"miro_board","location":"hq"},
        "meta":{"actor":"ops-bot"}})");
    expect_ok(r);
    CHECK(r.op == OpKind::Encode);
    CHECK(r.affected_ids == std::vector<std::string>{"1"});
    CHECK(r.count_delta == 1);
    CHECK(r.payload == json{{"id", "1"}});

    auto item = f.store.get_item("1");
    REQUIRE(item);
    CHECK(item->text == "Key task: refine OKR review mechanism");
    CHECK(item->type == "note");
    CHECK(item->tags == std::vector<std::string>{"OKR", "priority"});
    CHECK(item->facets.at("subject") == "okr");
    CHECK(item->weight == 0.5);
    CHECK(item->time_ns == ts("2025-09-28T04:00:00Z"));
    CHECK(item->source == "miro_board");
    CHECK(item->actor == "ops-bot");
    CHECK(item->location == "hq");
    REQUIRE(item->embedding);
    CHECK(item->embedding == f.services->embed(item->text));
    CHECK(item->created_ns == ts(kClock));
    CHECK(item->updated_ns == ts(kClock));
    CHECK_FALSE(item->deleted);
    CHECK(f.store.active_count() == 1);

    auto plain = f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"no vector for this one"},"use_embedding":false}})");
    expect_ok(plain);
    auto second = f.store.get_item("2");
    REQUIRE(second);
    CHECK_FALSE(second->embedding.has_value());
    CHECK_FALSE(second->actor.has_value());
}

TEST_CASE("ids come from a counter that never reuses") {
    Fixture f;
    expect_ok(f.encode("first"));
    expect_ok(f.encode("second"));
    expect_ok(f.exec(R"({"op":"Delete","target":{"ids":["2"]},
        "args":{"mode":"hard"},"meta":{"confirmation":true}})"));
    auto r = f.encode("third");
    expect_ok(r);
    CHECK(r.affected_ids == std::vector<std::string>{"3"});
    CHECK(f.store.get_item("2") == std::nullopt);
}

TEST_CASE("update rewrites whitelisted fields") {
    Fixture f;
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"draft plan"},"type":"note","tags":["old"],
        "time":"2025-09-01T00:00:00Z","source":"wiki"}})"));

    SUBCASE("every updatable field, including nulling optionals") {
        auto r = f.exec(R"({"op":"Update","target":{"ids":["1"]},"args":{"set":{
            "text":"final plan","weight":0.75,"tags":["a","b","a"],
            "facets":{"state":"done"},"time":"2025-09-02T08:00:00Z",
            "source":null,"actor":"alice","location":"berlin","type":"plan"}}})",
                        "2025-10-02T00:00:00Z");
        expect_ok(r);
        CHECK(r.affected_ids == std::vector<std::string>{"1"});
        CHECK(r.count_delta == 0);
        auto item = f.store.get_item("1");
        REQUIRE(item);
        CHECK(item->text == "final plan");
        CHECK(item->weight == 0.75);
        CHECK(item->tags == std::vector<std::string>{"a", "b"});
        CHECK(item->facets.at("state") == "done");
        CHECK(item->time_ns == ts("2025-09-02T08:00:00Z"));
        CHECK_FALSE(item->source.has_value());
        CHECK(item->actor == "alice");
        CHECK(item->location == "berlin");
        CHECK(item->type == "plan");
        CHECK(item->updated_ns == ts("2025-10-02T00:00:00Z"));
        CHECK(item->created_ns == ts(kClock));
        CHECK(f.store.lineage_records().empty());
    }

    SUBCASE("weight clamps into the unit interval") {
        // range-checked literals never reach the store, but computed updates
        // may still push past the bounds via repeated deltas elsewhere; the
        // store clamps whatever it is told to write
        expect_ok(f.exec(R"({"op":"Update","target":{"ids":["1"]},
            "args":{"set":{"weight":1}}})"));
        CHECK(f.store.get_item("1")->weight == 1.0);
        expect_ok(f.exec(R"({"op":"Update","target":{"ids":["1"]},
            "args":{"set":{"weight":0}}})"));
        CHECK(f.store.get_item("1")->weight == 0.0);
    }

    SUBCASE("unknown field rejects the whole set before touching anything") {
        auto before = f.store.snapshot_digest();
        auto r = f.exec(R"({"op":"Update","target":{"ids":["1"]},
            "args":{"set":{"text":"poisoned","priority":"high"}}})");
        expect_err(r, "E_UNKNOWN_FIELD");
        CHECK(r.diagnostics.front().path == "/args/set/priority");
        CHECK(f.store.get_item("1")->text == "draft plan");
        CHECK(f.store.snapshot_digest() == before);
    }

    SUBCASE("set values must have the field's type") {
        expect_err(f.exec(R"({"op":"Update","target":{"ids":["1"]},
            "args":{"set":{"text":3}}})"), "E_BAD_VALUE");
        expect_err(f.exec(R"({"op":"Update","target":{"ids":["1"]},
            "args":{"set":{"tags":"okr"}}})"), "E_BAD_VALUE");
        expect_err(f.exec(R"({"op":"Update","target":{"ids":["1"]},
            "args":{"set":{"tags":[1]}}})"), "E_BAD_VALUE");
        expect_err(f.exec(R"({"op":"Update","target":{"ids":["1"]},
            "args":{"set":{"facets":{"k":1}}}})"), "E_BAD_VALUE");
        expect_err(f.exec(R"({"op":"Update","target":{"ids":["1"]},
            "args":{"set":{"time":"not a time"}}})"), "E_BAD_VALUE");
        expect_err(f.exec(R"({"op":"Update","target":{"ids":["1"]},
            "args":{"set":{"source":7}}})"), "E_BAD_VALUE");
    }
}

TEST_CASE("label modes add, replace, and remove") {
    Fixture f;
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"note"},"tags":["keep","drop"],"facets":{"a":"1","b":"2"}}})"));

    expect_ok(f.exec(R"({"op":"Label","target":{"ids":["1"]},
        "args":{"tags":["keep","fresh"],"facets":{"b":"22","c":"3"}}})"));
    auto item = f.store.get_item("1");
    CHECK(item->tags == std::vector<std::string>{"keep", "drop", "fresh"});
    CHECK(item->facets == std::map<std::string, std::string>{
                              {"a", "1"}, {"b", "22"}, {"c", "3"}});

    expect_ok(f.exec(R"({"op":"Label","target":{"ids":["1"]},
        "args":{"mode":"remove","tags":["drop"],"facets":{"a":""}}})"));
    item = f.store.get_item("1");
    CHECK(item->tags == std::vector<std::string>{"keep", "fresh"});
    CHECK(item->facets == std::map<std::string, std::string>{{"b", "22"}, {"c", "3"}});

    expect_ok(f.exec(R"({"op":"Label","target":{"ids":["1"]},
        "args":{"mode":"replace","tags":["only"]}})"));
    item = f.store.get_item("1");
    CHECK(item->tags == std::vector<std::string>{"only"});
    // replace with no facets provided leaves the existing facets alone
    CHECK(item->facets == std::map<std::string, std::string>{{"b", "22"}, {"c", "3"}});

    expect_ok(f.exec(R"({"op":"Label","target":{"ids":["1"]},
        "args":{"mode":"replace","facets":{"z":"9"}}})"));
    item = f.store.get_item("1");
    CHECK(item->tags == std::vector<std::string>{"only"});
    CHECK(item->facets == std::map<std::string, std::string>{{"z", "9"}});
}

TEST_CASE("promote raises weight and can attach a reminder") {
    Fixture f;
    expect_ok(f.encode("task one"));
    expect_ok(f.encode("task two"));

    SUBCASE("absolute weight") {
        auto r = f.exec(R"({"op":"Promote","target":{"ids":["1","2"]},
            "args":{"weight":0.9}})");
        expect_ok(r);
        CHECK(r.affected_ids == std::vector<std::string>{"1", "2"});
        CHECK(r.diagnostics.empty());
        CHECK(f.store.get_item("1")->weight == 0.9);
        CHECK(f.store.get_item("2")->weight == 0.9);
    }

    SUBCASE("delta clamps at the top") {
        expect_ok(f.exec(R"({"op":"Promote","target":{"ids":["1"]},
            "args":{"weight_delta":0.4}})"));
        CHECK(f.store.get_item("1")->weight == doctest::Approx(0.9));
        expect_ok(f.exec(R"({"op":"Promote","target":{"ids":["1"]},
            "args":{"weight_delta":0.4}})"));
        CHECK(f.store.get_item("1")->weight == 1.0);
    }

    SUBCASE("lowering through promote succeeds but warns") {
        auto r = f.exec(R"({"op":"Promote","target":{"ids":["1"]},
            "args":{"weight":0.3}})");
        expect_ok(r);
        REQUIRE(r.diagnostics.size() == 1);
        CHECK(r.diagnostics.front().code == "W_WEIGHT_NOT_INCREASED");
        CHECK(f.store.get_item("1")->weight == 0.3);
    }

    SUBCASE("reminder stores the trigger") {
        auto r = f.exec(R"({"op":"Promote","target":{"ids":["1"]},
            "args":{"weight_delta":0,
                    "reminder":{"at":"2025-10-15T09:00:00Z","cadence":"weekly"}}})");
        expect_ok(r);
        auto item = f.store.get_item("1");
        REQUIRE(item->reminder);
        CHECK(item->reminder->at_ns == ts("2025-10-15T09:00:00Z"));
        CHECK(item->reminder->cadence == "weekly");
        CHECK(f.store.trigger_count(std::string("1")) == 1);
        CHECK(f.store.trigger_count() == 1);
        CHECK(f.store.query_value(
                  "SELECT kind FROM item_triggers WHERE item_id = 1") == json("reminder"));
    }
}

TEST_CASE("demote lowers weight and can archive") {
    Fixture f;
    expect_ok(f.encode("fading note"));

    SUBCASE("delta clamps at zero") {
        expect_ok(f.exec(R"({"op":"Demote","target":{"ids":["1"]},
            "args":{"weight_delta":-0.2}})"));
        CHECK(f.store.get_item("1")->weight == doctest::Approx(0.3));
        expect_ok(f.exec(R"({"op":"Demote","target":{"ids":["1"]},
            "args":{"weight_delta":-0.5}})"));
        CHECK(f.store.get_item("1")->weight == 0.0);
    }

    SUBCASE("archive flags the facet and keeps the item active") {
        auto r = f.exec(R"({"op":"Demote","target":{"ids":["1"]},
            "args":{"weight":0.2,"archive":true}})");
        expect_ok(r);
        auto item = f.store.get_item("1");
        CHECK(item->archived());
        CHECK(item->facets.at("archived") == "true");
        CHECK_FALSE(item->deleted);
        CHECK(f.store.active_count() == 1);
    }

    SUBCASE("raising through demote warns") {
        auto r = f.exec(R"({"op":"Demote","target":{"ids":["1"]},
            "args":{"weight":0.8}})");
        expect_ok(r);
        REQUIRE(r.diagnostics.size() == 1);
        CHECK(r.diagnostics.front().code == "W_WEIGHT_NOT_DECREASED");
    }
}

TEST_CASE("merge combines sources into a new primary") {
    Fixture f;
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"Standup summary Monday: retrieval fixes shipped."},
        "type":"standup","tags":["team","retrieval"],"facets":{"day":"mon","room":"a"},
        "time":"2025-09-02T09:00:00Z"}})"));
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"standup summary monday: retrieval fixes shipped. Deploy went clean."},
        "type":"digest","tags":["deploy","team"],"facets":{"day":"tue","owner":"b"},
        "time":"2025-09-01T09:00:00Z"}})"));
    expect_ok(f.exec(R"({"op":"Promote","target":{"ids":["2"]},"args":{"weight":0.8}})"));

    SUBCASE("sources stay by default") {
        auto r = f.exec(R"({"op":"Merge","target":{"ids":["1","2"]},"args":{}})");
        expect_ok(r);
        CHECK(r.affected_ids == std::vector<std::string>{"3", "1", "2"});
        CHECK(r.count_delta == 1);
        CHECK(r.payload == json{{"primary_id", "3"}});

        auto merged = f.store.get_item("3");
        REQUIRE(merged);
        CHECK(merged->text == f.services->merge_text(
                                  {f.store.get_item("1")->text, f.store.get_item("2")->text}));
        CHECK(merged->type == "standup");  // first source wins
        CHECK(merged->tags == std::vector<std::string>{"team", "retrieval", "deploy"});
        CHECK(merged->facets == std::map<std::string, std::string>{
                                    {"day", "mon"}, {"owner", "b"}, {"room", "a"}});
        CHECK(merged->weight == 0.8);
        CHECK(merged->time_ns == ts("2025-09-01T09:00:00Z"));  // earliest source time
        REQUIRE(merged->embedding);

        CHECK(f.store.get_item("1")->merged_into == "3");
        CHECK(f.store.get_item("2")->merged_into == "3");
        CHECK_FALSE(f.store.get_item("1")->deleted);
        CHECK(f.store.lineage_records() ==
              std::vector<LineageRecord>{{"1", "3", "merge"}, {"2", "3", "merge"}});
        CHECK(f.store.active_count() == 3);
    }

    SUBCASE("delete_children retires the sources") {
        auto r = f.exec(R"({"op":"Merge","target":{"ids":["1","2"]},
            "args":{"delete_children":true}})");
        expect_ok(r);
        CHECK(r.count_delta == -1);  // one new item, two sources gone
        CHECK(f.store.get_item("1")->deleted);
        CHECK(f.store.get_item("2")->deleted);
        CHECK(f.store.active_count() == 1);
    }

    SUBCASE("fewer than two resolved sources is an error") {
        auto r = f.exec(R"({"op":"Merge","target":{"ids":["1"]},"args":{}})");
        expect_err(r, "E_TOO_FEW_SOURCES");
    }
}

TEST_CASE("delete flags softly or removes hard with cascade") {
    Fixture f;
    expect_ok(f.encode("one"));
    expect_ok(f.encode("two"));
    expect_ok(f.encode("three"));

    SUBCASE("soft delete keeps the rows") {
        auto r = f.exec(R"({"op":"Delete","target":{"ids":["1","2"]},"args":{}})");
        expect_ok(r);
        CHECK(r.count_delta == -2);
        CHECK(r.affected_ids == std::vector<std::string>{"1", "2"});
        CHECK(f.store.active_count() == 1);
        CHECK(f.store.all_items(true).size() == 3);
        CHECK(f.store.all_items(false).size() == 1);
        CHECK(f.store.get_item("1")->deleted);

        // deleting an already-deleted item again changes nothing
        auto again = f.exec(R"({"op":"Delete","target":{"ids":["1"]},"args":{}})");
        expect_ok(again);
        CHECK(again.count_delta == 0);
    }

    SUBCASE("hard delete cascades the victim's lock and trigger rows") {
        // arm a trigger first: expiring a read_only item would be blocked
        expect_ok(f.exec(R"({"op":"Expire","target":{"ids":["3"]},
            "args":{"until":"2099-01-01T00:00:00Z"}})"));
        expect_ok(f.exec(R"({"op":"Lock","target":{"ids":["3"]},
            "args":{"mode":"read_only","policy":{"expires":"2025-10-02T00:00:00Z"}}})"));
        CHECK(f.store.query_value("SELECT COUNT(*) FROM locks") == json(1));
        CHECK(f.store.trigger_count(std::string("3")) == 1);

        // once the lock lapses the hard delete goes through and sweeps up
        auto r = f.exec(R"({"op":"Delete","target":{"ids":["3"]},
            "args":{"mode":"hard"},"meta":{"confirmation":true}})",
                        "2025-10-03T00:00:00Z");
        expect_ok(r);
        CHECK(r.count_delta == -1);
        CHECK(f.store.get_item("3") == std::nullopt);
        CHECK(f.store.query_value("SELECT COUNT(*) FROM locks") == json(0));
        CHECK(f.store.trigger_count(std::string("3")) == 0);
    }

    SUBCASE("hard delete unlinks provenance pointers") {
        expect_ok(f.exec(R"({"op":"Merge","target":{"ids":["1","2"]},"args":{}})"));
        REQUIRE(f.store.get_item("1")->merged_into == "4");

        auto r = f.exec(R"({"op":"Delete","target":{"ids":["4"]},
            "args":{"mode":"hard"},"meta":{"confirmation":true}})");
        expect_ok(r);
        CHECK(f.store.lineage_records().empty());
        CHECK_FALSE(f.store.get_item("1")->merged_into.has_value());
        CHECK_FALSE(f.store.get_item("2")->merged_into.has_value());

        expect_ok(f.exec(R"({"op":"Encode","args":{
            "payload":{"text":"First part stands alone. Second part stands alone."}}})"));
        expect_ok(f.exec(R"({"op":"Split","target":{"ids":["5"]},
            "args":{"strategy":"sentences"}})"));
        REQUIRE(f.store.get_item("6")->parent_id == "5");
        expect_ok(f.exec(R"({"op":"Delete","target":{"ids":["5"]},
            "args":{"mode":"hard"},"meta":{"confirmation":true}})"));
        CHECK_FALSE(f.store.get_item("6")->parent_id.has_value());
        CHECK(f.store.get_item("6")->text == "First part stands alone.");
        CHECK(f.store.lineage_records().empty());
    }
}

TEST_CASE("split fans one item out into children") {
    Fixture f;
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"First finding: caching wins. Second finding: logs drift. Third finding: tests lag."},
        "type":"report","tags":["q3"],"facets":{"team":"infra"},
        "time":"2025-09-10T00:00:00Z","source":"retro","location":"board"}})"));

    SUBCASE("sentence strategy inherits everything but facets") {
        auto r = f.exec(R"({"op":"Split","target":{"ids":["1"]},
            "args":{"strategy":"sentences"},"meta":{"actor":"splitter"}})");
        expect_ok(r);
        CHECK(r.count_delta == 3);
        CHECK(r.affected_ids == std::vector<std::string>{"1", "2", "3", "4"});
        CHECK(r.payload == json{{"child_ids", {"2", "3", "4"}}});

        auto first = f.store.get_item("2");
        REQUIRE(first);
        CHECK(first->text == "First finding: caching wins.");
        CHECK(first->type == "report");
        CHECK(first->tags == std::vector<std::string>{"q3"});
        CHECK(first->facets.empty());
        CHECK(first->weight == 0.5);
        CHECK(first->time_ns == ts("2025-09-10T00:00:00Z"));
        CHECK(first->source == "retro");
        CHECK(first->actor == "splitter");
        CHECK(first->location == "board");
        CHECK(first->parent_id == "1");
        REQUIRE(first->embedding);
        CHECK(first->embedding == f.services->embed(first->text));

        auto source = f.store.get_item("1");
        CHECK(source->facets.at("split") == "true");
        CHECK_FALSE(source->deleted);
        CHECK(f.store.lineage_records() ==
              std::vector<LineageRecord>{
                  {"1", "2", "split"}, {"1", "3", "split"}, {"1", "4", "split"}});
    }

    SUBCASE("chunk strategy cuts on codepoints") {
        expect_ok(f.exec(R"({"op":"Encode","args":{
            "payload":{"text":"项目回顾计划"},"use_embedding":false}})"));
        auto r = f.exec(R"({"op":"Split","target":{"ids":["2"]},
            "args":{"strategy":"chunks","chunk_size":2}})");
        expect_ok(r);
        REQUIRE(r.payload.at("child_ids").size() == 3);
        CHECK(f.store.get_item("3")->text == "项目");
        CHECK(f.store.get_item("4")->text == "回顾");
        CHECK(f.store.get_item("5")->text == "计划");
        CHECK_FALSE(f.store.get_item("3")->embedding.has_value());
    }

    SUBCASE("unsplittable and multi-target are errors") {
        expect_ok(f.encode("indivisible"));
        expect_err(f.exec(R"({"op":"Split","target":{"ids":["2"]},
            "args":{"strategy":"sentences"}})"), "E_NOT_SPLITTABLE");
        expect_err(f.exec(R"({"op":"Split","target":{"ids":["1","2"]},
            "args":{"strategy":"sentences"}})"), "E_TARGET_ARITY");
        expect_err(f.exec(R"({"op":"Split","target":{"filter":{"has_tags":["nope"],"limit":5}},
            "args":{"strategy":"sentences"}})"), "E_EMPTY_TARGET");
    }
}

TEST_CASE("lock modes and relocking") {
    Fixture f;
    expect_ok(f.encode("guarded"));

    SUBCASE("lock persists policy fields") {
        auto r = f.exec(R"({"op":"Lock","target":{"ids":["1"]},
            "args":{"mode":"read_only","reason":"freeze for audit",
                    "policy":{"allow":["Retrieve"],"deny":["Update"],
                              "reviewers":["sec"],"expires":"2025-12-31T00:00:00Z"}}})");
        expect_ok(r);
        auto lock = f.store.get_item("1")->lock;
        REQUIRE(lock);
        CHECK(lock->mode == LockMode::ReadOnly);
        CHECK(lock->reason == "freeze for audit");
        CHECK(lock->allow == std::vector<OpKind>{OpKind::Retrieve});
        CHECK(lock->deny == std::vector<OpKind>{OpKind::Update});
        CHECK(lock->reviewers == std::vector<std::string>{"sec"});
        CHECK(lock->expires_ns == ts("2025-12-31T00:00:00Z"));
    }

    SUBCASE("same mode refreshes, different mode conflicts") {
        expect_ok(f.exec(R"({"op":"Lock","target":{"ids":["1"]},
            "args":{"mode":"read_only","policy":{"expires":"2025-10-05T00:00:00Z"}}})"));
        expect_ok(f.exec(R"({"op":"Lock","target":{"ids":["1"]},
            "args":{"mode":"read_only","policy":{"expires":"2026-01-01T00:00:00Z"}}})"));
        CHECK(f.store.get_item("1")->lock->expires_ns == ts("2026-01-01T00:00:00Z"));

        auto r = f.exec(R"({"op":"Lock","target":{"ids":["1"]},
            "args":{"mode":"append_only"}})");
        expect_err(r, "E_ALREADY_LOCKED");
    }

    SUBCASE("a lock that denies Lock cannot be replaced") {
        expect_ok(f.exec(R"({"op":"Lock","target":{"ids":["1"]},
            "args":{"mode":"append_only","policy":{"deny":["Lock"]}}})"));
        expect_err(f.exec(R"({"op":"Lock","target":{"ids":["1"]},
            "args":{"mode":"append_only"}})"), "E_POLICY_DENIED");
    }

    SUBCASE("an expired lock stops governing") {
        expect_ok(f.exec(R"({"op":"Lock","target":{"ids":["1"]},
            "args":{"mode":"read_only","policy":{"expires":"2025-10-02T00:00:00Z"}}})"));
        expect_err(f.exec(R"({"op":"Update","target":{"ids":["1"]},
            "args":{"set":{"text":"blocked"}}})"), "E_LOCKED");
        auto later = f.exec(R"({"op":"Update","target":{"ids":["1"]},
            "args":{"set":{"text":"allowed again"}}})", "2025-10-03T00:00:00Z");
        expect_ok(later);
        CHECK(f.store.get_item("1")->text == "allowed again");
    }
}

TEST_CASE("governance over mutations") {
    Fixture f;
    expect_ok(f.encode("alpha"));
    expect_ok(f.encode("beta"));

    SUBCASE("read_only blocks every rewrite") {
        expect_ok(f.exec(R"({"op":"Lock","target":{"ids":["1"]},
            "args":{"mode":"read_only"}})"));
        for (const char* inst : {
                 R"({"op":"Update","target":{"ids":["1"]},"args":{"set":{"text":"x"}}})",
                 R"({"op":"Label","target":{"ids":["1"]},"args":{"tags":["t"]}})",
                 R"({"op":"Promote","target":{"ids":["1"]},"args":{"weight":0.9}})",
                 R"({"op":"Demote","target":{"ids":["1"]},"args":{"weight":0.1}})",
                 R"({"op":"Delete","target":{"ids":["1"]},"args":{}})",
                 R"({"op":"Merge","target":{"ids":["1","2"]},"args":{}})",
                 R"({"op":"Split","target":{"ids":["1"]},"args":{"strategy":"sentences"}})",
                 R"({"op":"Expire","target":{"ids":["1"]},"args":{"until":"2099-01-01T00:00:00Z"}})",
             }) {
            expect_err(f.exec(inst), "E_LOCKED");
        }
    }

    SUBCASE("append_only permits additive changes only") {
        expect_ok(f.exec(R"({"op":"Lock","target":{"ids":["1"]},
            "args":{"mode":"append_only"}})"));
        expect_ok(f.exec(R"({"op":"Label","target":{"ids":["1"]},
            "args":{"tags":["extra"]}})"));
        expect_ok(f.exec(R"({"op":"Promote","target":{"ids":["1"]},
            "args":{"weight":0.9}})"));
        expect_ok(f.exec(R"({"op":"Demote","target":{"ids":["1"]},
            "args":{"weight":0.4}})"));
        expect_ok(f.exec(R"({"op":"Expire","target":{"ids":["1"]},
            "args":{"until":"2099-01-01T00:00:00Z"}})"));
        expect_ok(f.exec(R"({"op":"Merge","target":{"ids":["1","2"]},"args":{}})"));

        expect_err(f.exec(R"({"op":"Update","target":{"ids":["1"]},
            "args":{"set":{"text":"x"}}})"), "E_LOCKED");
        expect_err(f.exec(R"({"op":"Delete","target":{"ids":["1"]},"args":{}})"),
                   "E_LOCKED");
        expect_err(f.exec(R"({"op":"Label","target":{"ids":["1"]},
            "args":{"mode":"remove","tags":["extra"]}})"), "E_LOCKED");
        expect_err(f.exec(R"({"op":"Label","target":{"ids":["1"]},
            "args":{"mode":"replace","tags":["new"]}})"), "E_LOCKED");
        expect_err(f.exec(R"({"op":"Merge","target":{"ids":["1","2"]},
            "args":{"delete_children":true}})"), "E_LOCKED");
    }

    SUBCASE("any unexpired lock blocks hard delete") {
        expect_ok(f.exec(R"({"op":"Lock","target":{"ids":["1"]},
            "args":{"mode":"append_only"}})"));
        auto r = f.exec(R"({"op":"Delete","target":{"ids":["1"]},
            "args":{"mode":"hard"},"meta":{"confirmation":true}})");
        expect_err(r, "E_LOCKED");
        CHECK(r.diagnostics.front().message.find("hard-deleted") != std::string::npos);
    }

    SUBCASE("policy deny beats an otherwise permissive mode") {
        expect_ok(f.exec(R"({"op":"Lock","target":{"ids":["1"]},
            "args":{"mode":"append_only","policy":{"deny":["Promote"]}}})"));
        expect_err(f.exec(R"({"op":"Promote","target":{"ids":["1"]},
            "args":{"weight":0.9}})"), "E_POLICY_DENIED");
        expect_ok(f.exec(R"({"op":"Label","target":{"ids":["1"]},
            "args":{"tags":["fine"]}})"));
    }

    SUBCASE("a failed item rejects the whole batch") {
        expect_ok(f.exec(R"({"op":"Lock","target":{"ids":["2"]},
            "args":{"mode":"read_only"}})"));
        auto before = f.store.snapshot_digest();
        expect_err(f.exec(R"({"op":"Promote","target":{"ids":["1","2"]},
            "args":{"weight":0.9}})"), "E_LOCKED");
        CHECK(f.store.get_item("1")->weight == 0.5);
        CHECK(f.store.snapshot_digest() == before);
    }
}

TEST_CASE("expire sets the horizon and refuses expired items") {
    Fixture f;
    expect_ok(f.encode("scratch"));

    auto r = f.exec(R"({"op":"Expire","target":{"ids":["1"]},
        "args":{"ttl":"P7D","on_expire":"demote"}})");
    expect_ok(r);
    auto item = f.store.get_item("1");
    REQUIRE(item->expiry);
    CHECK(item->expiry->until_ns == ts("2025-10-08T00:00:00Z"));
    CHECK(item->expiry->action == ExpireAction::Demote);
    CHECK_FALSE(item->expiry->applied);
    CHECK(f.store.trigger_count(std::string("1")) == 1);
    CHECK(f.store.query_value(
              "SELECT action FROM item_triggers WHERE item_id = 1") == json("demote"));

    // re-arming before the horizon is fine
    expect_ok(f.exec(R"({"op":"Expire","target":{"ids":["1"]},
        "args":{"until":"2025-10-20T00:00:00Z"}})"));
    CHECK(f.store.get_item("1")->expiry->until_ns == ts("2025-10-20T00:00:00Z"));
    CHECK(f.store.get_item("1")->expiry->action == ExpireAction::DeleteSoft);

    // once past the horizon the item accepts neither Update nor Expire
    expect_err(f.exec(R"({"op":"Update","target":{"ids":["1"]},
        "args":{"set":{"text":"too late"}}})", "2025-11-01T00:00:00Z"), "E_EXPIRED");
    expect_err(f.exec(R"({"op":"Expire","target":{"ids":["1"]},
        "args":{"until":"2099-01-01T00:00:00Z"}})", "2025-11-01T00:00:00Z"), "E_EXPIRED");
}

TEST_CASE("the expiry sweep applies each action once") {
    Fixture f;
    expect_ok(f.encode("goes away"));
    expect_ok(f.encode("loses weight"));
    expect_ok(f.encode("gets archived"));
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"personal data"},"source":"crm","location":"munich",
        "facets":{"entities":"alice;bob","kind":"contact"}},
        "meta":{"actor":"importer"}})"));

    const char* horizon = R"("until":"2025-10-02T00:00:00Z")";
    auto arm = [&](const char* id, const char* action) {
        std::string inst = std::string(R"({"op":"Expire","target":{"ids":[")") + id +
                           R"("]},"args":{)" + horizon + R"(,"on_expire":")" + action +
                           R"("}})";
        expect_ok(f.store.execute(op_at(inst.c_str()), ts(kClock)));
    };
    arm("1", "delete_soft");
    arm("2", "demote");
    arm("3", "archive");
    arm("4", "anonymize");

    SUBCASE("nothing happens while the horizon is ahead") {
        expect_ok(f.encode("trigger op", "", "2025-10-01T12:00:00Z"));
        CHECK_FALSE(f.store.get_item("1")->deleted);
        CHECK(f.store.get_item("2")->weight == 0.5);
    }

    SUBCASE("the first op past the horizon applies everything") {
        expect_ok(f.encode("trigger op", "", "2025-10-03T00:00:00Z"));

        CHECK(f.store.get_item("1")->deleted);
        CHECK(f.store.get_item("2")->weight == 0.1);
        CHECK(f.store.get_item("3")->archived());
        auto anon = f.store.get_item("4");
        CHECK_FALSE(anon->actor.has_value());
        CHECK_FALSE(anon->source.has_value());
        CHECK_FALSE(anon->location.has_value());
        CHECK(anon->facets == std::map<std::string, std::string>{{"kind", "contact"}});
        for (const char* id : {"1", "2", "3", "4"})
            CHECK(f.store.get_item(id)->expiry->applied);

        // applied means applied: restoring the weight sticks through later sweeps
        expect_ok(f.exec(R"({"op":"Promote","target":{"ids":["2"]},
            "args":{"weight":0.9}})", "2025-10-04T00:00:00Z"));
        expect_ok(f.encode("another op", "", "2025-10-05T00:00:00Z"));
        CHECK(f.store.get_item("2")->weight == 0.9);
    }

    SUBCASE("a failing op rolls the sweep back with it") {
        auto before = f.store.snapshot_digest();
        auto r = f.store.execute(
            op_at(R"({"op":"Update","target":{"ids":["99"]},"args":{"set":{"text":"x"}}})",
                  "2025-10-03T00:00:00Z"),
            ts("2025-10-03T00:00:00Z"));
        expect_err(r, "E_UNKNOWN_ID");
        CHECK(f.store.snapshot_digest() == before);
        CHECK_FALSE(f.store.get_item("1")->deleted);
    }

    SUBCASE("a read commits the sweep") {
        auto before = f.store.snapshot_digest();
        auto r = f.exec(R"({"op":"Retrieve","target":{"filter":{"type":"none_such"}},
            "args":{}})", "2025-10-03T00:00:00Z");
        expect_ok(r);
        CHECK(f.store.get_item("1")->deleted);
        CHECK(f.store.snapshot_digest() != before);
        auto audit = f.store.audit_entries();
        REQUIRE(audit.size() == 9);
        CHECK(audit.back().op == "Retrieve");
        CHECK(audit.back().before_digest != audit.back().after_digest);
    }
}

TEST_CASE("resolve maps targets to concrete ids") {
    Fixture f;
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"okr planning notes"},"type":"note","tags":["okr","work"],
        "time":"2025-09-20T00:00:00Z"}})"));
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"okr review checklist"},"type":"note","tags":["okr"],
        "time":"2025-09-25T00:00:00Z"}})"));
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"grocery list"},"type":"list","tags":["home"]}})"));

    const auto now = ts(kClock);

    SUBCASE("ids pass through in order; unknown ids fail loudly") {
        auto got = f.store.resolve(ResolvedIds{{"2", "1"}}, OpKind::Update, now);
        CHECK(got == std::vector<std::string>{"2", "1"});

        try {
            f.store.resolve(ResolvedIds{{"1", "9", "x"}}, OpKind::Update, now);
            FAIL("expected ExecutionError");
        } catch (const ExecutionError& e) {
            CHECK(e.diagnostic().code == "E_UNKNOWN_ID");
            CHECK(e.diagnostic().path == "/target/ids");
            CHECK(e.diagnostic().message == "unknown ids: 9, x");
        }
    }

    SUBCASE("filter is conjunctive") {
        ResolvedFilter tags_and_type;
        tags_and_type.has_tags = {"okr", "work"};
        CHECK(f.store.resolve(tags_and_type, OpKind::Retrieve, now) ==
              std::vector<std::string>{"1"});

        tags_and_type.has_tags = {"okr"};
        tags_and_type.type = "list";
        CHECK(f.store.resolve(tags_and_type, OpKind::Retrieve, now).empty());

        ResolvedFilter in_window;
        in_window.time_range = TimeRange{ts("2025-09-22T00:00:00Z"),
                                         ts("2025-09-30T00:00:00Z")};
        // item 3 has no timestamp, so a time window can never match it
        CHECK(f.store.resolve(in_window, OpKind::Retrieve, now) ==
              std::vector<std::string>{"2"});

        ResolvedFilter by_weight;
        by_weight.weight_range = {0.5, 0.5};
        CHECK(f.store.resolve(by_weight, OpKind::Retrieve, now) ==
              std::vector<std::string>{"2", "1", "3"});
    }

    SUBCASE("filter orders by time desc with undated items last") {
        ResolvedFilter all;
        CHECK(f.store.resolve(all, OpKind::Retrieve, now) ==
              std::vector<std::string>{"2", "1", "3"});
        all.limit = 2;
        CHECK(f.store.resolve(all, OpKind::Retrieve, now) ==
              std::vector<std::string>{"2", "1"});
    }

    SUBCASE("search ranks by the hybrid score and gates on evidence") {
        expect_ok(f.exec(R"({"op":"Promote","target":{"ids":["2"]},
            "args":{"weight":0.9}})"));
        ResolvedSearch search;
        search.query = "okr review";
        CHECK(f.store.resolve(search, OpKind::Retrieve, now) ==
              std::vector<std::string>{"2", "1"});

        search.limit = 1;
        CHECK(f.store.resolve(search, OpKind::Retrieve, now) ==
              std::vector<std::string>{"2"});

        // high weight alone is no evidence: the grocery list never matches
        expect_ok(f.exec(R"({"op":"Promote","target":{"ids":["3"]},
            "args":{"weight":1}})"));
        search.query = "okr";
        search.limit = std::nullopt;
        auto got = f.store.resolve(search, OpKind::Retrieve, now);
        CHECK(std::find(got.begin(), got.end(), "3") == got.end());
    }

    SUBCASE("equal scores fall back to ascending id") {
        expect_ok(f.encode("zebra quail"));
        expect_ok(f.encode("zebra quail"));
        ResolvedSearch search;
        search.query = "zebra";
        search.limit = 2;
        CHECK(f.store.resolve(search, OpKind::Retrieve, now) ==
              std::vector<std::string>{"4", "5"});
    }

    SUBCASE("all lists active items ascending") {
        expect_ok(f.exec(R"({"op":"Delete","target":{"ids":["2"]},"args":{}})"));
        CHECK(f.store.resolve(ResolvedAll{}, OpKind::Retrieve, now) ==
              std::vector<std::string>{"1", "3"});
    }
}

TEST_CASE("retrieval hides what governance or lifecycle says it must") {
    Fixture f;
    expect_ok(f.encode("visible record"));
    expect_ok(f.encode("archived record"));
    expect_ok(f.encode("denied record"));
    expect_ok(f.encode("expired record"));
    expect_ok(f.exec(R"({"op":"Demote","target":{"ids":["2"]},
        "args":{"weight":0.2,"archive":true}})"));
    expect_ok(f.exec(R"({"op":"Lock","target":{"ids":["3"]},
        "args":{"mode":"read_only","policy":{"deny":["Retrieve"]}}})"));
    expect_ok(f.exec(R"({"op":"Expire","target":{"ids":["4"]},
        "args":{"until":"2025-10-02T00:00:00Z"}})"));

    const auto later = ts("2025-10-03T00:00:00Z");

    SUBCASE("filter retrieval omits archived, denied, and expired") {
        CHECK(f.store.resolve(ResolvedFilter{}, OpKind::Retrieve, later) ==
              std::vector<std::string>{"1"});
    }

    SUBCASE("explicit ids reach archived rows but not denied or expired ones") {
        CHECK(f.store.resolve(ResolvedIds{{"1", "2", "3", "4"}}, OpKind::Retrieve, later) ==
              std::vector<std::string>{"1", "2"});
    }

    SUBCASE("search skips the archive even though mutation can reach it") {
        ResolvedSearch search;
        search.query = "archived record";
        auto got = f.store.resolve(search, OpKind::Retrieve, ts(kClock));
        std::sort(got.begin(), got.end());
        // item 2 is archived, item 3 denies Retrieve; 1 and 4 share "record"
        CHECK(got == std::vector<std::string>{"1", "4"});
        // mutation by explicit id still reaches the archived row
        expect_ok(f.exec(R"({"op":"Promote","target":{"ids":["2"]},
            "args":{"weight":0.6}})"));
        CHECK(f.store.get_item("2")->weight == 0.6);
    }

    SUBCASE("denied items do not error a retrieval, they vanish from it") {
        auto r = f.exec(R"({"op":"Retrieve","target":{"ids":["3"]},"args":{}})");
        expect_ok(r);
        CHECK(r.affected_ids.empty());
        CHECK(r.payload.at("items").empty());
    }
}

TEST_CASE("retrieve renders items with optional projection") {
    Fixture f;
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"okr planning notes"},"type":"note","tags":["okr"],
        "time":"2025-09-20T00:00:00Z","source":"wiki"}})"));
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"okr review checklist"},"tags":["okr"],
        "time":"2025-09-25T00:00:00Z"}})"));

    SUBCASE("full rendering carries scores under search") {
        auto r = f.exec(R"({"op":"Retrieve","target":{"search":{
            "intent":{"query":"okr planning"}}},"args":{}})");
        expect_ok(r);
        const auto& items = r.payload.at("items");
        REQUIRE(items.size() == 2);
        CHECK(items[0].at("id") == "1");
        CHECK(items[0].at("text") == "okr planning notes");
        CHECK(items[0].at("source") == "wiki");
        const double expected =
            f.store.score_item("okr planning", *f.store.get_item("1")).total;
        CHECK(items[0].at("score").get<double>() == doctest::Approx(expected));
        CHECK(items[0].at("score").get<double>() > items[1].at("score").get<double>());
        CHECK_FALSE(items[0].contains("embedding"));
        CHECK_FALSE(items[0].contains("created_at"));
    }

    SUBCASE("order_by time reorders the selected set but keeps each score") {
        auto r = f.exec(R"({"op":"Retrieve","target":{"search":{
            "intent":{"query":"okr planning"},"overrides":{"order_by":"time_desc"}}},
            "args":{}})");
        expect_ok(r);
        CHECK(r.affected_ids == std::vector<std::string>{"2", "1"});
        const auto& items = r.payload.at("items");
        const double score1 =
            f.store.score_item("okr planning", *f.store.get_item("1")).total;
        CHECK(items[1].at("score").get<double>() == doctest::Approx(score1));
    }

    SUBCASE("fields narrow the object but id always stays") {
        auto r = f.exec(R"({"op":"Retrieve","target":{"ids":["1"]},
            "args":{"fields":["text","created_at","embedding","bogus"]}})");
        expect_ok(r);
        const auto& item = r.payload.at("items").at(0);
        CHECK(item.at("id") == "1");
        CHECK(item.at("text") == "okr planning notes");
        CHECK(item.at("created_at") == "2025-10-01T00:00:00Z");
        CHECK(item.contains("embedding"));
        CHECK_FALSE(item.contains("bogus"));
        CHECK_FALSE(item.contains("source"));
        CHECK_FALSE(item.contains("score"));
    }

    SUBCASE("ids without search carry no score") {
        auto r = f.exec(R"({"op":"Retrieve","target":{"ids":["2","1"]},"args":{}})");
        expect_ok(r);
        CHECK(r.affected_ids == std::vector<std::string>{"2", "1"});
        CHECK_FALSE(r.payload.at("items").at(0).contains("score"));
    }
}

TEST_CASE("summarize writes a derived item with provenance") {
    Fixture f;
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"Root cause was a routing misconfig. Fix released at 20:41."},
        "time":"2025-09-28T13:00:00Z"}})"));
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"Customer impact: 12% of API calls failed for 34 minutes."},
        "time":"2025-09-28T12:30:00Z"}})"));

    auto r = f.exec(R"({"op":"Summarize","target":{"ids":["1","2"]},
        "args":{"focus":"root cause","max_tokens":32},"meta":{"actor":"briefer"}})");
    expect_ok(r);
    CHECK(r.count_delta == 1);
    CHECK(r.affected_ids == std::vector<std::string>{"3"});
    CHECK(r.payload.at("summary_id") == "3");
    CHECK(r.payload.at("source_ids") == json({"1", "2"}));

    const std::string t1 = f.store.get_item("1")->text;
    const std::string t2 = f.store.get_item("2")->text;
    const std::string expected_summary = f.services->summarize({t1, t2}, "root cause", 32);
    CHECK(r.payload.at("text") == expected_summary);
    const double expected_similarity = cosine_similarity(
        f.services->embed(expected_summary), f.services->embed(t1 + " " + t2));
    CHECK(r.payload.at("similarity").get<double>() == doctest::Approx(expected_similarity));

    auto summary = f.store.get_item("3");
    REQUIRE(summary);
    CHECK(summary->type == "summary");
    CHECK(summary->text == expected_summary);
    CHECK(summary->time_ns == ts(kClock));
    CHECK(summary->actor == "briefer");
    CHECK(summary->weight == 0.5);
    CHECK(f.store.lineage_records() ==
          std::vector<LineageRecord>{{"1", "3", "summary"}, {"2", "3", "summary"}});

    SUBCASE("search targets honor order_by for the source sequence") {
        auto ordered = f.exec(R"({"op":"Summarize","target":{"search":{
            "intent":{"query":"root cause api"},"overrides":{"order_by":"time_asc"},
            "limit":5}},"args":{}})");
        expect_ok(ordered);
        auto ids = ordered.payload.at("source_ids").get<std::vector<std::string>>();
        REQUIRE(ids.size() >= 2);
        CHECK(ids.front() == "2");  // earliest timestamp first
    }

    SUBCASE("an empty source set is an error") {
        expect_err(f.exec(R"({"op":"Summarize","target":{"filter":{"has_tags":["none"]}},
            "args":{}})"), "E_EMPTY_TARGET");
    }
}

TEST_CASE("errors and dry runs leave no trace") {
    Fixture f;
    expect_ok(f.encode("baseline"));
    const auto digest = f.store.snapshot_digest();
    const auto audit_count = f.store.audit_entries().size();

    SUBCASE("a dry run reports its would-be effect and rolls back") {
        auto r = f.exec(R"({"op":"Encode","args":{"payload":{"text":"phantom"}},
            "meta":{"dry_run":true}})");
        expect_ok(r);
        CHECK(r.dry_run);
        CHECK(r.payload == json{{"id", "2"}});
        CHECK(f.store.snapshot_digest() == digest);
        CHECK(f.store.active_count() == 1);
        CHECK(f.store.audit_entries().size() == audit_count);

        // the rolled-back id is handed out again for real
        auto real = f.encode("actual");
        CHECK(real.affected_ids == std::vector<std::string>{"2"});
    }

    SUBCASE("a failed op keeps the digest bit-identical") {
        auto r = f.exec(R"({"op":"Update","target":{"ids":["1","99"]},
            "args":{"set":{"text":"x"}}})");
        expect_err(r, "E_UNKNOWN_ID");
        CHECK(r.affected_ids.empty());
        CHECK(f.store.snapshot_digest() == digest);
        CHECK(f.store.audit_entries().size() == audit_count);
    }
}

TEST_CASE("every committed op appends one audit row") {
    Fixture f;
    expect_ok(f.exec(R"({"op":"Encode","args":{"payload":{"text":"a"}},
        "meta":{"actor":"alice"}})"));
    expect_ok(f.exec(R"({"op":"Promote","target":{"ids":["1"]},
        "args":{"weight":0.9},"meta":{"actor":"bob"}})", "2025-10-02T00:00:00Z"));
    expect_ok(f.exec(R"({"op":"Retrieve","target":{"ids":["1"]},"args":{}})",
                     "2025-10-03T00:00:00Z"));

    auto audit = f.store.audit_entries();
    REQUIRE(audit.size() == 3);
    CHECK(audit[0].seq < audit[1].seq);
    CHECK(audit[0].actor == "alice");
    CHECK(audit[0].op == "Encode");
    CHECK(audit[0].affected == std::vector<std::string>{"1"});
    CHECK(audit[0].ts_ns == ts(kClock));
    CHECK(audit[1].actor == "bob");
    CHECK(audit[1].op == "Promote");
    CHECK(audit[1].ts_ns == ts("2025-10-02T00:00:00Z"));

    // digests chain: each op starts where the previous one ended
    CHECK(audit[0].after_digest == audit[1].before_digest);
    CHECK(audit[1].after_digest == audit[2].before_digest);
    CHECK(audit[0].before_digest != audit[0].after_digest);
    // a pure read commits without changing content
    CHECK(audit[2].before_digest == audit[2].after_digest);
    CHECK(audit[2].after_digest == f.store.snapshot_digest());
    // the audit trail itself stays outside the digest, or reads would mutate it
}

TEST_CASE("query_value answers read-only scalar queries") {
    Fixture f;
    expect_ok(f.encode("one"));
    expect_ok(f.encode("two"));

    CHECK(f.store.query_value("SELECT COUNT(*) FROM memory_items") == json(2));
    CHECK(f.store.query_value("SELECT text FROM memory_items WHERE id = 1") == json("one"));
    CHECK(f.store.query_value("SELECT weight FROM memory_items WHERE id = 1") == json(0.5));
    CHECK(f.store.query_value("SELECT id FROM memory_items WHERE id = 99").is_null());

    CHECK_THROWS_AS(f.store.query_value("DELETE FROM memory_items"), StoreError);
    CHECK_THROWS_AS(f.store.query_value("UPDATE memory_items SET weight = 1"), StoreError);
    CHECK_THROWS_AS(f.store.query_value("SELEC nope"), StoreError);
    try {
        f.store.query_value("INSERT INTO counters VALUES ('x', 1)");
        FAIL("expected StoreError");
    } catch (const StoreError& e) {
        CHECK(e.code() == StoreError::Code::BadQuery);
    }
    // nothing mutated along the way
    CHECK(f.store.query_value("SELECT COUNT(*) FROM memory_items") == json(2));
}

TEST_CASE("hybrid scores blend vector, lexical, and weight evidence") {
    Fixture f;
    CHECK(f.store.weights().vector == 0.5);
    CHECK(f.store.weights().lexical == 0.3);
    CHECK(f.store.weights().weight == 0.2);

    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"okr planning notes"},"tags":["quarterly"]}})"));
    expect_ok(f.exec(R"({"op":"Encode","args":{
        "payload":{"text":"okr planning notes"},"use_embedding":false}})"));
    expect_ok(f.encode("zebra quail"));

    const auto with_vec = *f.store.get_item("1");
    const auto no_vec = *f.store.get_item("2");
    const auto unrelated = *f.store.get_item("3");

    SUBCASE("embedded items use all three terms") {
        auto b = f.store.score_item("okr planning", with_vec);
        const double cos = cosine_similarity(f.services->embed("okr planning"),
                                             *with_vec.embedding);
        const double lex = lexical_overlap("okr planning", "okr planning notes quarterly");
        CHECK(b.vector_part == doctest::Approx(0.5 * cos));
        CHECK(b.lexical_part == doctest::Approx(0.3 * lex));
        CHECK(b.weight_part == doctest::Approx(0.2 * 0.5));
        CHECK(b.total == doctest::Approx(b.vector_part + b.lexical_part + b.weight_part));
        CHECK(b.matched);
    }

    SUBCASE("tags count as lexical haystack") {
        auto b = f.store.score_item("quarterly", with_vec);
        CHECK(b.lexical_part == doctest::Approx(0.3 * 1.0));
    }

    SUBCASE("without an embedding the remaining terms re-split its share") {
        auto b = f.store.score_item("okr", no_vec);
        CHECK(b.vector_part == 0.0);
        CHECK(b.lexical_part == doctest::Approx(0.6 * 1.0));
        CHECK(b.weight_part == doctest::Approx(0.4 * 0.5));
        CHECK(b.total == doctest::Approx(0.8));
        CHECK(b.matched);
    }

    SUBCASE("weight alone never counts as a match") {
        auto b = f.store.score_item("okr", unrelated);
        CHECK(b.vector_part == 0.0);
        CHECK(b.lexical_part == 0.0);
        CHECK(b.weight_part > 0.0);
        CHECK_FALSE(b.matched);
    }

    SUBCASE("custom weights change the mix") {
        auto services = std::make_shared<LocalServices>();
        MemoryStore lexical_only(":memory:", services, ScoreWeights{0.0, 1.0, 0.0});
        MemoryItem probe;
        probe.text = "okr";
        probe.weight = 1.0;
        auto b = lexical_only.score_item("okr", probe);
        CHECK(b.total == doctest::Approx(1.0));
        CHECK(b.weight_part == 0.0);
    }
}

TEST_CASE("a file-backed store persists across reopen") {
    const auto path =
        (std::filesystem::temp_directory_path() / "memop_store_roundtrip.sqlite3").string();
    std::filesystem::remove(path);
    CHECK_FALSE(MemoryStore::database_exists(path));
    CHECK_FALSE(MemoryStore::database_exists(":memory:"));

    std::string digest;
    {
        Fixture f;
        MemoryStore store(path, f.services);
        auto r = store.execute(op_at(R"({"op":"Encode","args":{
            "payload":{"text":"durable note"},"tags":["keep"]}})"), ts(kClock));
        REQUIRE(r.ok());
        digest = store.snapshot_digest();
    }

    CHECK(MemoryStore::database_exists(path));
    {
        auto services = std::make_shared<LocalServices>();
        MemoryStore store(path, services);
        auto item = store.get_item("1");
        REQUIRE(item);
        CHECK(item->text == "durable note");
        CHECK(store.snapshot_digest() == digest);
        // the id counter picks up where it left off
        auto r = store.execute(op_at(R"({"op":"Encode","args":{
            "payload":{"text":"second"}}})"), ts(kClock));
        CHECK(r.affected_ids == std::vector<std::string>{"2"});
    }
    std::filesystem::remove(path);
}
