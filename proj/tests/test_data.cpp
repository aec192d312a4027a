#include <doctest.h>

#include <set>
#include <sstream>

#include "support.hpp"
#include "todprime/data.hpp"
#include "todprime/errors.hpp"

using namespace todprime;
using tpt::json;

namespace {

std::string dump(const TaskDataset& ds) {
    std::ostringstream out;
    write_dataset(ds, out);
    return out.str();
}

TaskDataset load_records(const tpt::TempDir& dir, const std::vector<json>& records, TaskKind kind) {
    const auto p = dir / "data.jsonl";
    tpt::write_lines(p, records);
    return load_dataset(p, kind);
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Ok;
}

}  // namespace

TEST_CASE("load NLU records") {
    tpt::TempDir dir;
    const auto p = dir / "nlu.jsonl";
    tpt::write_file(p, R"({"id":"1","text":"add to playlist kojak","slots":{"name":"kojak"},"intent":"addtoplaylist"})"
                       "\n");
    const auto ds = load_dataset(p, TaskKind::Intent);
    const auto& train = ds.corpus<NluItem>().train;
    REQUIRE(train.size() == 1);
    CHECK(train[0].text == "add to playlist kojak");
    CHECK(train[0].slots == SlotValueMap{{"name", "kojak"}});
    CHECK(ds.labels == LabelSet({"addtoplaylist"}));
    CHECK(ds.test_size() == 0);
}

TEST_CASE("lower-casing and None values") {
    tpt::TempDir dir;
    const auto ds = load_records(
        dir, {{{"id", "1"}, {"text", "Play  Kojak"}, {"intent", "PlayMusic"}, {"slots", {{"Artist", "Kojak"}, {"album", "None"}, {"genre", ""}}}}},
        TaskKind::SlotFilling);
    const auto& it = ds.corpus<NluItem>().train.at(0);
    CHECK(it.text == "play kojak");
    CHECK(it.intent == "playmusic");
    CHECK(it.slots == SlotValueMap{{"artist", "kojak"}});
}

TEST_CASE("schema errors") {
    tpt::TempDir dir;
    const auto p = dir / "bad.jsonl";
    SUBCASE("empty file") {
        tpt::write_file(p, "");
        try {
            load_dataset(p, TaskKind::Intent);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(e.line() == 0);
        }
    }
    SUBCASE("malformed line 3") {
        tpt::write_file(p, R"({"id":"1","text":"a","intent":"x","slots":{}})" "\n"
                           R"({"id":"2","text":"b","intent":"y","slots":{}})" "\n"
                           "{not json\n");
        try {
            load_dataset(p, TaskKind::Intent);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(e.line() == 3);
        }
    }
    SUBCASE("duplicate id") {
        tpt::write_file(p, R"({"id":"1","text":"a","intent":"x","slots":{}})" "\n"
                           R"({"id":"1","text":"b","intent":"y","slots":{}})" "\n");
        CHECK(code_of([&] { load_dataset(p, TaskKind::Intent); }) == ErrorCode::DuplicateId);
    }
    SUBCASE("missing file") {
        CHECK(code_of([&] { load_dataset(dir / "absent.jsonl", TaskKind::Intent); }) == ErrorCode::Io);
    }
    SUBCASE("DST user turn without state") {
        tpt::write_lines(p, {{{"dialogue_id", "d"}, {"turns", {{{"speaker", "user"}, {"text", "hi"}}}}}});
        CHECK(code_of([&] { load_dataset(p, TaskKind::Dst); }) == ErrorCode::Schema);
    }
    SUBCASE("NLG act that does not parse") {
        tpt::write_lines(p, {{{"id", "1"}, {"act", "inform(name=x"}, {"reference", "x"}}});
        CHECK(code_of([&] { load_dataset(p, TaskKind::Nlg); }) == ErrorCode::Schema);
    }
    SUBCASE("bad split") {
        tpt::write_lines(p, {{{"id", "1"}, {"text", "a"}, {"intent", "x"}, {"slots", json::object()}, {"split", "dev"}}});
        CHECK(code_of([&] { load_dataset(p, TaskKind::Intent); }) == ErrorCode::Schema);
    }
}

TEST_CASE("reload idempotence for every task") {
    tpt::TempDir dir;
    const std::vector<std::pair<TaskKind, std::vector<json>>> corpora{
        {TaskKind::Intent, tpt::intent_corpus(10)},  {TaskKind::SlotFilling, tpt::slot_corpus(10)},
        {TaskKind::Dst, tpt::dst_corpus(5)},          {TaskKind::Act, tpt::act_corpus(10)},
        {TaskKind::Nlg, tpt::nlg_corpus(10)}};
    for (const auto& [kind, records] : corpora) {
        CAPTURE(to_string(kind));
        const auto a = load_records(dir, records, kind);
        const auto p2 = dir / "again.jsonl";
        tpt::write_file(p2, dump(a));
        const auto b = load_dataset(p2, kind);
        CHECK(dump(a) == dump(b));
        CHECK(a.labels == b.labels);
        CHECK(a.domain_slots == b.domain_slots);
        CHECK(a.train_size() == b.train_size());
        CHECK(a.test_size() == b.test_size());
    }
}

TEST_CASE("separate train and test files") {
    tpt::TempDir dir;
    auto records = tpt::intent_corpus(0);
    tpt::write_lines(dir / "train.jsonl", records);
    tpt::write_lines(dir / "test.jsonl", {records[0], records[9]});
    CHECK(code_of([&] { load_dataset(dir / "train.jsonl", dir / "test.jsonl", TaskKind::Intent); }) ==
          ErrorCode::DuplicateId);
    auto t = records[0];
    t["id"] = "fresh";
    tpt::write_lines(dir / "test.jsonl", {t});
    const auto ds = load_dataset(dir / "train.jsonl", dir / "test.jsonl", TaskKind::Intent);
    CHECK(ds.test_size() == 1);
    CHECK(ds.train_size() == records.size());
}

TEST_CASE("DST turn updates") {
    const std::vector<SlotValueMap> cum{{{"area", "north"}}, {{"area", "north"}, {"food", "thai"}},
                                        {{"area", "south"}, {"food", "thai"}}, {{"area", "south"}, {"food", "thai"}}};
    const auto up = turn_updates(cum);
    REQUIRE(up.size() == 4);
    CHECK(up[0] == SlotValueMap{{"area", "north"}});
    CHECK(up[1] == SlotValueMap{{"food", "thai"}});
    CHECK(up[2] == SlotValueMap{{"area", "south"}});
    CHECK(up[3].empty());
}

TEST_CASE("sample_shots") {
    tpt::TempDir dir;
    const auto intent = load_records(dir, tpt::intent_corpus(10), TaskKind::Intent);

    SUBCASE("determinism") {
        const auto a = sample_shots(intent, 1, 7);
        const auto b = sample_shots(intent, 1, 7);
        CHECK(a.pools == b.pools);
        CHECK(sample_shots(intent, 3, 8).pools != sample_shots(intent, 3, 9).pools);
    }
    SUBCASE("interleaved positives and negatives") {
        const auto p = sample_shots(intent, 3, 1, 2);
        for (const auto& [label, shots] : p.pools) {
            REQUIRE(shots.size() == 9);
            for (std::size_t i = 0; i < shots.size(); ++i)
                CHECK(shots[i].polarity == (i % 3 == 0 ? Polarity::Positive : Polarity::Negative));
        }
    }
    SUBCASE("cap for slot filling") {
        const auto ds = load_records(dir, tpt::slot_corpus(4, 40), TaskKind::SlotFilling);
        const auto p = sample_shots(ds, 50, 3);
        CHECK(p.k == 15);
        std::size_t positives = 0;
        for (const auto& s : p.at(slot_pool_key("playmusic", "artist")))
            positives += s.polarity == Polarity::Positive;
        CHECK(positives == 15);
        // "day" is filled in every weather item; its None shots come from playmusic.
        for (const auto& s : p.at(slot_pool_key("getweather", "day")))
            if (s.polarity == Polarity::Negative) CHECK(s.source_id.rfind("playmusic_", 0) == 0);
        CHECK_FALSE(p.warnings.empty());
    }
    SUBCASE("class without training items") {
        auto records = tpt::intent_corpus(4);
        records.push_back({{"id", "lonely"}, {"text", "only in test"}, {"intent", "rare"}, {"slots", json::object()},
                           {"split", "test"}});
        const auto ds = load_records(dir, records, TaskKind::Intent);
        try {
            sample_shots(ds, 1, 0);
            FAIL("expected InsufficientData");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InsufficientData);
            CHECK(std::string(e.what()).find("rare") != std::string::npos);
        }
    }
    SUBCASE("pools never contain test items") {
        const std::vector<std::pair<TaskKind, std::vector<json>>> corpora{
            {TaskKind::Intent, tpt::intent_corpus(20)}, {TaskKind::SlotFilling, tpt::slot_corpus(20)},
            {TaskKind::Dst, tpt::dst_corpus(10)},        {TaskKind::Act, tpt::act_corpus(20)},
            {TaskKind::Nlg, tpt::nlg_corpus(20)}};
        for (const auto& [kind, records] : corpora) {
            const auto ds = load_records(dir, records, kind);
            std::set<std::string> test_ids;
            for (const auto& r : records)
                if (r.value("split", "") == "test") test_ids.insert(r.value("id", r.value("dialogue_id", "")));
            for (std::uint64_t seed = 0; seed < 5; ++seed)
                for (const auto& [key, shots] : sample_shots(ds, 10, seed).pools)
                    for (const auto& s : shots) {
                        const std::string id = s.source_id.substr(0, s.source_id.find('#'));
                        CHECK(test_ids.count(id) == 0);
                    }
        }
    }
}
