// SPDX-License-Identifier: Apache-2.0
#include <agenttune/searcher.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace agenttune;
using fixture::digest;
using fixture::simkv_config;

namespace {

SearchTree rooted_tree(double baseline = 74.616) {
    SearchTree tree("throughput_kops", Objective::Maximize);
    const auto& root = tree.add_root(simkv_config(64), {}, {2, 1024, 60});
    tree.record_result(root.id, digest(baseline, root.id));
    tree.close_iteration(0);
    return tree;
}

} // namespace

TEST_CASE("tree ids, depth and frontier bookkeeping") {
    auto tree = rooted_tree();
    CHECK(tree.root_id() == "n0000");
    CHECK(tree.frontier() == std::set<std::string>{"n0000"});

    const auto a = tree.add_child("n0000", simkv_config(128), 1).id;
    const auto b = tree.add_child("n0000", simkv_config(256), 1).id;
    const auto c = tree.add_child("n0000", simkv_config(2048), 1).id;
    CHECK(a == "n0001");
    CHECK(tree.node(b).depth == 1);
    CHECK(tree.node(b).config.parent_id == "n0000");

    tree.mark_rejected(c, "out of range");
    tree.record_result(a, digest(120.0));
    CHECK(tree.frontier() == std::set<std::string>{"n0001"}); // root left when its first child was benchmarked
    tree.record_result(b, fixture::failed_digest());
    CHECK(tree.node(b).status == NodeStatus::Failed);
    CHECK(tree.error_count() == 2);
    CHECK(tree.benchmarked_count() == 2);
    CHECK(tree.best_node() == "n0001");
    CHECK_THROWS_AS(tree.record_result(a, digest(1.0)), TreeError);
    CHECK_THROWS_AS(tree.mark_selected(c), TreeError);
    CHECK_THROWS_AS(tree.node("n9999"), TreeError);
    CHECK(tree.contains_config(simkv_config(256)));
    CHECK_FALSE(tree.contains_config(simkv_config(512)));
    tree.check_invariants();
}

TEST_CASE("best-value ties resolve to the smallest id") {
    auto tree = rooted_tree(100.0);
    const auto a = tree.add_child("n0000", simkv_config(128), 1).id;
    tree.record_result(a, digest(100.0));
    CHECK(tree.best_node() == "n0000");
}

TEST_CASE("property: random tree growth keeps every invariant") {
    std::mt19937 rng(31337);
    for (int trial = 0; trial < 40; ++trial) {
        const auto objective = trial % 2 ? Objective::Maximize : Objective::Minimize;
        const std::size_t cap = 1 + static_cast<std::size_t>(trial % 7);
        SearchTree tree("throughput_kops", objective, cap);
        const auto& root = tree.add_root(simkv_config(64), {}, {});
        tree.record_result(root.id, digest(50.0));
        tree.close_iteration(0);
        std::uniform_real_distribution<double> value(1.0, 300.0);
        std::uniform_int_distribution<int> outcome(0, 9);
        std::int64_t wb = 8;
        for (int it = 1; it <= 12; ++it) {
            std::vector<std::string> ids;
            for (const auto& [id, n] : tree.nodes())
                ids.push_back(id);
            const auto& parent = ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)];
            for (int k = 0; k < 3; ++k) {
                const auto id = tree.add_child(parent, simkv_config(++wb), it).id;
                const int o = outcome(rng);
                if (o == 0)
                    tree.mark_rejected(id, "rejected");
                else if (o == 1)
                    tree.record_result(id, fixture::failed_digest());
                else if (o < 9)
                    tree.record_result(id, digest(value(rng)));
            }
            tree.close_iteration(it);
            tree.check_invariants();
            CHECK(tree.frontier().size() <= cap);
            CHECK(!tree.frontier().empty());
            // the best node is never worse than any benchmarked node
            const double best = *tree.best_value();
            for (const auto& [id, n] : tree.nodes())
                if (auto v = tree.value_of(id))
                    CHECK_FALSE(better(*v, best, objective));
            // frontier nodes have no benchmarked child
            for (const auto& f : tree.frontier())
                for (const auto& ch : tree.children_of(f))
                    CHECK_FALSE(tree.value_of(ch).has_value());
        }
        // serialization round trip preserves everything observable
        auto copy = SearchTree::from_json(tree.to_json());
        CHECK(copy.to_json() == tree.to_json());
        CHECK(copy.best_series() == tree.best_series());
        CHECK(copy.frontier() == tree.frontier());
        copy.check_invariants();
    }
}

TEST_CASE("convergence rule") {
    const std::vector<double> flat = {100.0, 100.5, 100.9, 100.95};
    CHECK(Searcher::converged(flat, Objective::Maximize));
    const std::vector<double> rising = {100.0, 150.0, 290.0};
    CHECK_FALSE(Searcher::converged(rising, Objective::Maximize));
    const std::vector<double> short_series = {100.0, 100.0};
    CHECK_FALSE(Searcher::converged(short_series, Objective::Maximize));
    const std::vector<double> latency = {500.0, 400.0, 398.0, 397.0};
    CHECK(Searcher::converged(latency, Objective::Minimize));
    const std::vector<double> falling = {500.0, 400.0, 300.0};
    CHECK_FALSE(Searcher::converged(falling, Objective::Minimize));
}

TEST_CASE("termination checks and the token budget boundary") {
    auto tree = rooted_tree();
    TerminationLimits limits;
    limits.token_budget = 56000;
    limits.time_budget_s = 100.0;
    limits.max_iterations = 5;
    CHECK_FALSE(Searcher::check_termination(tree, 55999, 0.0, 1, limits));
    CHECK(Searcher::check_termination(tree, 56000, 0.0, 1, limits) == "token budget");
    CHECK(Searcher::check_termination(tree, 56001, 0.0, 1, limits) == "token budget");
    CHECK(Searcher::check_termination(tree, 0, 100.0, 1, limits) == "time budget");
    CHECK(Searcher::check_termination(tree, 0, 0.0, 5, limits) == "max iterations");
    limits.token_budget.reset();
    CHECK_FALSE(Searcher::check_termination(tree, 1'000'000, 0.0, 1, limits));
}

TEST_CASE("token budget gate at the gateway: the next request is refused") {
    // 55 900 spent; a 404-char prompt estimates 101 tokens -> 56 001 > 56 000
    auto backend = std::make_shared<ScriptedBackend>(std::vector<TranscriptEntry>{
        {RequestKind::ProposeChildren, "[]", 55000, 900}, {RequestKind::ProposeChildren, "[]", 10, 10}});
    LlmGateway gw(backend, fixture::fast_gateway(56000));
    gw.complete({RequestKind::ProposeChildren, std::string(4, 'x')});
    CHECK(gw.total_tokens() == 55900);
    CHECK_THROWS_AS(gw.complete({RequestKind::ProposeChildren, std::string(404, 'x')}), BudgetExceeded);
    CHECK_NOTHROW(gw.complete({RequestKind::ProposeChildren, std::string(400, 'x')}));
}

TEST_CASE("greedy backend proposes a larger write buffer from the baseline") {
    auto task = fixture::simkv_task();
    auto prompts = PromptSet::defaults();
    LlmGateway gw(std::make_shared<GreedyBackend>(), fixture::fast_gateway());
    Searcher s(gw, prompts, task);
    auto tree = rooted_tree();
    auto kids = s.propose_children(tree.node("n0000"), {}, 3);
    REQUIRE(kids.size() == 3);
    bool larger_wb = false;
    for (const auto& k : kids) {
        CHECK(k.parent_id == "n0000");
        CHECK(k != tree.node("n0000").config);
        CHECK(validate_config(k, task.schema, task.resources).ok());
        larger_wb = larger_wb || *k.number("write_buffer_mb") > 64;
    }
    CHECK(larger_wb);
    CHECK(s.stats().propose_fallbacks == 0);

    auto one = s.propose_children(tree.node("n0000"), {}, 1);
    CHECK(one.size() == 1);
}

TEST_CASE("malformed proposals: one retry then the perturbation fallback") {
    auto task = fixture::simkv_task();
    auto prompts = PromptSet::defaults();
    auto backend = std::make_shared<ScriptedBackend>(std::vector<TranscriptEntry>{
        fixture::entry(RequestKind::ProposeChildren, "I think you should raise the buffer."),
        fixture::entry(RequestKind::ProposeChildren, "{\"not\": \"an array\"}")});
    LlmGateway gw(backend, fixture::fast_gateway());
    Searcher s(gw, prompts, task);
    auto tree = rooted_tree();
    auto kids = s.propose_children(tree.node("n0000"), {}, 3);
    CHECK(s.stats().propose_retries == 1);
    CHECK(s.stats().propose_fallbacks == 1);
    REQUIRE(kids.size() == 3);
    // schema order: write_buffer_mb 64 < mid -> 128; block_cache_mb 8 -> 16; background_jobs 2 -> 4
    CHECK(*kids[0].number("write_buffer_mb") == 128);
    CHECK(*kids[1].number("block_cache_mb") == 16);
    CHECK(*kids[2].number("background_jobs") == 4);
    CHECK(gw.transcript().size() == 2);
}

TEST_CASE("a scripted answer overlays the parent configuration") {
    auto task = fixture::simkv_task();
    auto prompts = PromptSet::defaults();
    auto backend = std::make_shared<ScriptedBackend>(std::vector<TranscriptEntry>{fixture::entry(
        RequestKind::ProposeChildren, "```json\n[{\"write_buffer_mb\": 512}, {\"compression\": \"zstd\"}, {}, {}]\n```")});
    LlmGateway gw(backend, fixture::fast_gateway());
    Searcher s(gw, prompts, task);
    auto tree = rooted_tree();
    auto kids = s.propose_children(tree.node("n0000"), {}, 2);
    REQUIRE(kids.size() == 2);
    CHECK(kids[0] == simkv_config(512));
    CHECK(kids[1] == simkv_config(64, 8, 2, "zstd"));
}

TEST_CASE("budget exhaustion propagates out of proposal") {
    auto task = fixture::simkv_task();
    auto prompts = PromptSet::defaults();
    LlmGateway gw(std::make_shared<GreedyBackend>(), fixture::fast_gateway(0));
    Searcher s(gw, prompts, task);
    auto tree = rooted_tree();
    CHECK_THROWS_AS(s.propose_children(tree.node("n0000"), {}, 3), BudgetExceeded);
}

TEST_CASE("fallback prioritizes parameters named by insights") {
    auto task = fixture::simkv_task();
    Insight in;
    in.text = "more background_jobs helps";
    in.prediction = Prediction{"background_jobs", ParamDirection::Increase, "throughput_kops", Effect::Improves};
    std::vector<Insight> insights = {in};
    auto kids = Searcher::perturbation_fallback(simkv_config(64), task.schema, insights, 2);
    REQUIRE(kids.size() == 2);
    CHECK(*kids[0].number("background_jobs") == 4);
    CHECK(*kids[1].number("write_buffer_mb") == 128);
}

TEST_CASE("constraint filter") {
    auto task = fixture::simkv_task();
    auto prompts = PromptSet::defaults();
    std::vector<Configuration> cands = {simkv_config(128), simkv_config(64, 8, 2, "zstd"), simkv_config(64, 8, 4)};

    SUBCASE("no constraints, no call") {
        LlmGateway gw(std::make_shared<GreedyBackend>(), fixture::fast_gateway());
        Searcher s(gw, prompts, task);
        CHECK(s.filter_constraints(simkv_config(64), cands) == std::vector<std::size_t>{0, 1, 2});
        CHECK(gw.transcript().empty());
    }
    SUBCASE("greedy drops candidates touching constrained parameters") {
        task.constraints = {"do not change compression"};
        LlmGateway gw(std::make_shared<GreedyBackend>(), fixture::fast_gateway());
        Searcher s(gw, prompts, task);
        CHECK(s.filter_constraints(simkv_config(64), cands) == std::vector<std::size_t>{0, 2});
    }
    SUBCASE("malformed answer keeps everything") {
        task.constraints = {"anything"};
        auto backend = std::make_shared<ScriptedBackend>(
            std::vector<TranscriptEntry>{fixture::entry(RequestKind::FilterConstraints, "{\"keep\": [7]}")});
        LlmGateway gw(backend, fixture::fast_gateway());
        Searcher s(gw, prompts, task);
        CHECK(s.filter_constraints(simkv_config(64), cands).size() == 3);
        CHECK(s.stats().filter_fallbacks == 1);
    }
}

TEST_CASE("node selection") {
    auto task = fixture::simkv_task();
    auto prompts = PromptSet::defaults();

    SUBCASE("a singleton frontier needs no model call") {
        LlmGateway gw(std::make_shared<ScriptedBackend>(std::vector<TranscriptEntry>{}), fixture::fast_gateway());
        Searcher s(gw, prompts, task);
        auto tree = rooted_tree();
        CHECK(s.select_next(tree) == "n0000");
        CHECK(tree.node("n0000").status == NodeStatus::Selected);
    }

    auto tree = rooted_tree();
    const auto a = tree.add_child("n0000", simkv_config(128), 1).id;
    const auto b = tree.add_child("n0000", simkv_config(256), 1).id;
    const auto c = tree.add_child("n0000", simkv_config(512), 1).id;
    tree.record_result(a, digest(120.0));
    tree.record_result(b, digest(200.0));
    tree.record_result(c, digest(150.0));
    REQUIRE(tree.frontier().size() == 3);

    SUBCASE("greedy picks the best") {
        LlmGateway gw(std::make_shared<GreedyBackend>(), fixture::fast_gateway());
        Searcher s(gw, prompts, task);
        CHECK(s.select_next(tree) == b);
    }
    SUBCASE("a scripted choice is honored") {
        auto backend = std::make_shared<ScriptedBackend>(
            std::vector<TranscriptEntry>{fixture::entry(RequestKind::SelectNode, "{\"node_id\": \"" + c + "\"}")});
        LlmGateway gw(backend, fixture::fast_gateway());
        Searcher s(gw, prompts, task);
        CHECK(s.select_next(tree) == c);
        CHECK(s.stats().select_fallbacks == 0);
    }
    SUBCASE("an id off the frontier falls back to argmax") {
        auto backend =
            std::make_shared<ScriptedBackend>(std::vector<TranscriptEntry>{fixture::entry(RequestKind::SelectNode, "A")});
        LlmGateway gw(backend, fixture::fast_gateway());
        Searcher s(gw, prompts, task);
        CHECK(s.select_next(tree) == b);
        CHECK(s.stats().select_fallbacks == 1);
    }
}

TEST_CASE("prompts carry the task and node as named blocks") {
    auto task = fixture::simkv_task();
    task.blacklist = {"compression"};
    auto prompts = PromptSet::defaults();
    auto backend =
        std::make_shared<ScriptedBackend>(std::vector<TranscriptEntry>{fixture::entry(RequestKind::ProposeChildren, "[]")});

    struct Spy : LlmBackend {
        std::shared_ptr<LlmBackend> inner;
        std::string last;
        LlmResponse complete(const LlmRequest& r) override {
            last = r.prompt;
            return inner->complete(r);
        }
        std::string id() const override { return "spy"; }
    };
    auto spy = std::make_shared<Spy>();
    spy->inner = backend;
    LlmGateway gw(spy, fixture::fast_gateway());
    Searcher s(gw, prompts, task);
    auto tree = rooted_tree();
    s.propose_children(tree.node("n0000"), {}, 2);
    auto t = find_block(spy->last, "task");
    REQUIRE(t);
    CHECK(t->at("branching") == 2);
    CHECK(t->at("budget_cap_mb") == doctest::Approx(819.2));
    CHECK(t->at("blacklist") == json::array({"compression"}));
    auto n = find_block(spy->last, "node");
    REQUIRE(n);
    CHECK(n->at("node_id") == "n0000");
}
