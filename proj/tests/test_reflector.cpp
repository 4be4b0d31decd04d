// SPDX-License-Identifier: Apache-2.0
#include <agenttune/reflector.hpp>

#include "fixtures.hpp"

#include <doctest.h>

using namespace agenttune;
using fixture::digest;
using fixture::simkv_config;

namespace {

/// Root {64, 8, 2, none} at 74.616 and one child with write_buffer_mb 512.
struct WbPair {
    SearchTree tree{"throughput_kops", Objective::Maximize};
    Experience experience;
    std::vector<std::pair<std::string, std::string>> edges;

    explicit WbPair(double child_value = 254.648) {
        const auto& root = tree.add_root(simkv_config(64), {}, {2, 1024, 60});
        tree.record_result(root.id, digest(74.616, root.id));
        const auto child = tree.add_child(root.id, simkv_config(512), 1).id;
        tree.record_result(child, digest(child_value, child));
        edges = {{"n0000", child}};
        experience.nodes = {&tree.node("n0000"), &tree.node(child)};
        experience.edges = edges;
    }
};

std::string one_insight(double confidence, const std::string& sources = "[\"n0000\", \"n0001\"]") {
    return "```json\n[{\"text\": \"bigger write buffer helps\", \"prediction\": {\"param\": \"write_buffer_mb\", "
           "\"direction\": \"increase\", \"metric\": \"throughput_kops\", \"effect\": \"improves\"}, "
           "\"initial_confidence\": " +
           format_double(confidence) + ", \"source_nodes\": " + sources + "}]\n```";
}

} // namespace

TEST_CASE("greedy reflection on a write-buffer pair yields the write-buffer insight") {
    auto task = fixture::simkv_task();
    auto prompts = PromptSet::defaults();
    MemoryStore memory;
    LlmGateway gw(std::make_shared<GreedyBackend>(), fixture::fast_gateway());
    Reflector r(gw, prompts, memory, task);
    WbPair pair;
    auto ids = r.generate_insights(pair.experience, 1);
    REQUIRE(ids.size() == 1);
    const auto* in = memory.find(ids[0]);
    REQUIRE(in);
    REQUIRE(in->prediction);
    CHECK(in->prediction->param == "write_buffer_mb");
    CHECK(in->prediction->direction == ParamDirection::Increase);
    CHECK(in->prediction->metric == "throughput_kops");
    CHECK(in->prediction->effect == Effect::Improves);
    CHECK(in->confidence >= kMinInitialConfidence);
    CHECK(in->confidence <= kMaxInitialConfidence);
    CHECK(in->tier == Tier::STM);
    CHECK(in->source_nodes == std::vector<std::string>{"n0000", "n0001"});
    CHECK(in->tags.contains("simkv"));
    CHECK(in->tags.contains("throughput_kops"));

    // a second pass over the same experience only reinforces provenance
    auto again = r.generate_insights(pair.experience, 2);
    CHECK(again.empty());
    CHECK(memory.stm().size() == 1);
}

TEST_CASE("reflection needs two benchmarked nodes") {
    auto task = fixture::simkv_task();
    auto prompts = PromptSet::defaults();
    MemoryStore memory;
    LlmGateway gw(std::make_shared<GreedyBackend>(), fixture::fast_gateway());
    Reflector r(gw, prompts, memory, task);
    WbPair pair;
    Experience single;
    single.nodes = {&pair.tree.node("n0000")};
    CHECK(r.generate_insights(single, 1).empty());
    CHECK(gw.transcript().empty());
}

TEST_CASE("initial confidence is clamped and sources are checked") {
    auto task = fixture::simkv_task();
    auto prompts = PromptSet::defaults();
    MemoryStore memory;
    auto backend = std::make_shared<ScriptedBackend>(std::vector<TranscriptEntry>{
        fixture::entry(RequestKind::GenerateInsights, one_insight(0.99, "[\"n0001\", \"n7777\"]")),
    });
    LlmGateway gw(backend, fixture::fast_gateway());
    Reflector r(gw, prompts, memory, task);
    WbPair pair;
    auto ids = r.generate_insights(pair.experience, 1);
    REQUIRE(ids.size() == 1);
    CHECK(memory.find(ids[0])->confidence == doctest::Approx(0.9));
    CHECK(memory.find(ids[0])->source_nodes == std::vector<std::string>{"n0001"});
}

TEST_CASE("duplicate predictions in one batch merge") {
    auto task = fixture::simkv_task();
    auto prompts = PromptSet::defaults();
    MemoryStore memory;
    const std::string two =
        "[{\"text\": \"a\", \"prediction\": {\"param\": \"write_buffer_mb\", \"direction\": \"increase\", \"metric\": "
        "\"throughput_kops\", \"effect\": \"improves\"}, \"initial_confidence\": 0.3},"
        " {\"text\": \"b\", \"prediction\": {\"param\": \"write_buffer_mb\", \"direction\": \"decrease\", \"metric\": "
        "\"throughput_kops\", \"effect\": \"degrades\"}, \"initial_confidence\": 0.6},"
        " {\"text\": \"c\", \"prediction\": {\"param\": \"no_such_knob\", \"direction\": \"increase\", \"metric\": "
        "\"throughput_kops\", \"effect\": \"improves\"}},"
        " {\"text\": \"free text only\"}]";
    auto backend = std::make_shared<ScriptedBackend>(
        std::vector<TranscriptEntry>{fixture::entry(RequestKind::GenerateInsights, two)});
    LlmGateway gw(backend, fixture::fast_gateway());
    Reflector r(gw, prompts, memory, task);
    WbPair pair;
    auto ids = r.generate_insights(pair.experience, 1);
    REQUIRE(ids.size() == 3);
    CHECK(memory.find(ids[0])->confidence == doctest::Approx(0.6));
    CHECK_FALSE(memory.find(ids[1])->prediction); // unknown parameter dropped, text kept
    CHECK(memory.find(ids[1])->text == "c");
    CHECK(memory.find(ids[2])->confidence == doctest::Approx(0.5));
    CHECK(r.stats().merged_duplicates == 1);
}

TEST_CASE("malformed generation produces nothing") {
    auto task = fixture::simkv_task();
    auto prompts = PromptSet::defaults();
    MemoryStore memory;
    auto backend = std::make_shared<ScriptedBackend>(
        std::vector<TranscriptEntry>{fixture::entry(RequestKind::GenerateInsights, "no insights today")});
    LlmGateway gw(backend, fixture::fast_gateway());
    Reflector r(gw, prompts, memory, task);
    WbPair pair;
    CHECK(r.generate_insights(pair.experience, 1).empty());
    CHECK(memory.all().empty());
    CHECK(r.stats().malformed_generations == 1);
}

TEST_CASE("review: votes are checked against the evidence") {
    auto task = fixture::simkv_task();
    auto prompts = PromptSet::defaults();
    WbPair pair;
    const auto evidence = evidence_from(pair.tree, pair.edges);
    REQUIRE(evidence.size() == 1);

    Insight in;
    in.text = "bigger write buffer helps";
    in.prediction = Prediction{"write_buffer_mb", ParamDirection::Increase, "throughput_kops", Effect::Improves};
    in.source_nodes = {"n0000"};

    SUBCASE("greedy upvotes and the vote is accepted") {
        MemoryStore memory;
        const auto id = memory.add(in).id;
        LlmGateway gw(std::make_shared<GreedyBackend>(), fixture::fast_gateway());
        Reflector r(gw, prompts, memory, task);
        auto out = r.review(id, evidence, 2);
        CHECK(out.vote == VoteDirection::Up);
        CHECK(out.check == VoteCheck::Accepted);
        CHECK(memory.find(id)->confidence == doctest::Approx(0.6));
    }
    SUBCASE("a contradicting vote is rejected and logged") {
        MemoryStore memory;
        const auto id = memory.add(in).id;
        auto backend = std::make_shared<ScriptedBackend>(
            std::vector<TranscriptEntry>{fixture::entry(RequestKind::VoteInsights, "{\"vote\": \"down\"}")});
        LlmGateway gw(backend, fixture::fast_gateway());
        Reflector r(gw, prompts, memory, task);
        auto out = r.review(id, evidence, 2);
        CHECK(out.check == VoteCheck::Rejected);
        CHECK(memory.find(id)->confidence == doctest::Approx(0.5));
        REQUIRE(memory.vote_log().size() == 1);
        CHECK_FALSE(memory.vote_log()[0].accepted);
        CHECK(r.stats().rejected_votes == 1);
    }
    SUBCASE("abstention records nothing") {
        MemoryStore memory;
        const auto id = memory.add(in).id;
        auto backend = std::make_shared<ScriptedBackend>(
            std::vector<TranscriptEntry>{fixture::entry(RequestKind::VoteInsights, "{\"vote\": \"none\"}")});
        LlmGateway gw(backend, fixture::fast_gateway());
        Reflector r(gw, prompts, memory, task);
        auto out = r.review(id, evidence, 2);
        CHECK_FALSE(out.vote);
        CHECK(memory.vote_log().empty());
    }
    SUBCASE("an unknown vote word is malformed") {
        MemoryStore memory;
        const auto id = memory.add(in).id;
        auto backend = std::make_shared<ScriptedBackend>(
            std::vector<TranscriptEntry>{fixture::entry(RequestKind::VoteInsights, "{\"vote\": \"maybe\"}")});
        LlmGateway gw(backend, fixture::fast_gateway());
        Reflector r(gw, prompts, memory, task);
        CHECK_THROWS_AS(r.review(id, evidence, 2), MalformedResponse);
    }
}

TEST_CASE("relevant evidence filters by the predicted parameter") {
    WbPair pair;
    auto evidence = evidence_from(pair.tree, pair.edges);
    Insight bg;
    bg.prediction = Prediction{"background_jobs", ParamDirection::Increase, "throughput_kops", Effect::Improves};
    CHECK(Reflector::relevant_evidence(bg, evidence).empty());
    Insight wb = bg;
    wb.prediction->param = "write_buffer_mb";
    CHECK(Reflector::relevant_evidence(wb, evidence).size() == 1);
    Insight text_only;
    CHECK(Reflector::relevant_evidence(text_only, evidence).size() == 1);
}
