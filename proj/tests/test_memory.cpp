// SPDX-License-Identifier: Apache-2.0
#include <agenttune/memory.hpp>

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace agenttune;

namespace {

Insight wb_insight(double confidence = 0.5) {
    Insight i;
    i.text = "increase write_buffer_mb improves write throughput";
    i.prediction = Prediction{"write_buffer_mb", ParamDirection::Increase, "throughput_kops", Effect::Improves};
    i.confidence = confidence;
    i.source_nodes = {"n0000", "n0001"};
    i.tags = {"simkv", "fillrandom"};
    return i;
}

Configuration wb(std::int64_t v) {
    Configuration c;
    c.values = {{"write_buffer_mb", v}, {"block_cache_mb", std::int64_t{8}}};
    return c;
}

EvidencePair pair(std::int64_t wb_before, double t_before, std::int64_t wb_after, double t_after) {
    return {"a", "b", wb(wb_before), wb(wb_after), {{"throughput_kops", t_before}}, {{"throughput_kops", t_after}}};
}

const auto kMaximize = [](const std::string&) { return Objective::Maximize; };

} // namespace

TEST_CASE("vote update rules") {
    auto up = apply_vote(wb_insight(0.5), VoteDirection::Up);
    CHECK(up.confidence == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(up.upvotes == 1);
    auto down = apply_vote(wb_insight(0.5), VoteDirection::Down);
    CHECK(down.confidence == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(down.downvotes == 1);
}

TEST_CASE("upvote sequence, promotion and demotion") {
    MemoryStore m;
    const auto id = m.add(wb_insight()).id;
    const double expected[] = {0.6, 0.68, 0.744, 0.7952};
    for (double e : expected) {
        CHECK(m.record_vote(id, VoteDirection::Up, {"n1"}, true, 1) == TierChange::None);
        CHECK(m.find(id)->confidence == doctest::Approx(e).epsilon(1e-12));
        CHECK(m.find(id)->tier == Tier::STM);
    }
    CHECK(m.record_vote(id, VoteDirection::Up, {"n1"}, true, 1) == TierChange::Promoted);
    CHECK(m.find(id)->tier == Tier::LTM);
    CHECK(m.ltm().size() == 1);
    CHECK(m.stm().empty());

    // LTM: down to below 0.5 demotes
    TierChange last = TierChange::None;
    int downs = 0;
    while (last == TierChange::None) {
        last = m.record_vote(id, VoteDirection::Down, {"n2"}, true, 2);
        ++downs;
    }
    CHECK(last == TierChange::Demoted);
    CHECK(m.find(id)->tier == Tier::STM);
    CHECK(m.find(id)->confidence < kDemoteConfidence);
    CHECK(downs == 3); // 0.836 -> 0.669 -> 0.535 -> 0.428
}

TEST_CASE("low-confidence STM insights are discarded") {
    MemoryStore m;
    const auto id = m.add(wb_insight(0.3)).id;
    CHECK(m.record_vote(id, VoteDirection::Down, {}, true, 1) == TierChange::None); // 0.24
    CHECK(m.record_vote(id, VoteDirection::Down, {}, true, 1) == TierChange::Discarded);
    CHECK(m.find(id) == nullptr);
    CHECK(m.vote_log().size() == 2);
}

TEST_CASE("rejected votes are logged and not applied") {
    MemoryStore m;
    const auto id = m.add(wb_insight()).id;
    m.record_vote(id, VoteDirection::Down, {"n1"}, false, 1, "rejected");
    CHECK(m.find(id)->confidence == 0.5);
    CHECK(m.find(id)->downvotes == 0);
    REQUIRE(m.vote_log().size() == 1);
    CHECK_FALSE(m.vote_log()[0].accepted);
}

TEST_CASE("property: confidence stays in [0,1] and votes move it monotonically") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> start(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 200; ++trial) {
        auto in = wb_insight(start(rng));
        for (int step = 0; step < 60; ++step) {
            const double before = in.confidence;
            const bool up = coin(rng);
            in = apply_vote(in, up ? VoteDirection::Up : VoteDirection::Down);
            CHECK(in.confidence >= 0.0);
            CHECK(in.confidence <= 1.0);
            if (up) {
                CHECK(in.confidence == doctest::Approx(oracle::vote_up(before)));
                if (before < 1.0)
                    CHECK(in.confidence > before);
            } else {
                CHECK(in.confidence == doctest::Approx(oracle::vote_down(before)));
                if (before > 0.0)
                    CHECK(in.confidence < before);
            }
        }
    }
}

TEST_CASE("property: every promoted insight has at least three accepted upvotes in the log") {
    std::mt19937 rng(7);
    std::bernoulli_distribution coin(0.7), accept(0.8);
    MemoryStore m;
    for (int i = 0; i < 30; ++i)
        m.add(wb_insight(0.5));
    for (int step = 0; step < 600; ++step) {
        auto all = m.all();
        if (all.empty())
            break;
        const auto& target = all[static_cast<std::size_t>(step) % all.size()];
        m.record_vote(target.id, coin(rng) ? VoteDirection::Up : VoteDirection::Down, {}, accept(rng), step);
    }
    for (const auto& in : m.ltm()) {
        auto ups = std::count_if(m.vote_log().begin(), m.vote_log().end(), [&](const VoteRecord& r) {
            return r.insight_id == in.id && r.accepted && r.vote == VoteDirection::Up;
        });
        CHECK(ups >= 3);
    }
    std::set<std::string> ids;
    for (const auto& in : m.all())
        CHECK(ids.insert(in.id).second);
}

TEST_CASE("validate_vote against observed deltas") {
    const auto in = wb_insight();
    std::vector<EvidencePair> ev = {pair(64, 74.62, 512, 254.65)};
    CHECK(validate_vote(in, VoteDirection::Up, ev, kMaximize) == VoteCheck::Accepted);
    CHECK(validate_vote(in, VoteDirection::Down, ev, kMaximize) == VoteCheck::Rejected);

    std::vector<EvidencePair> decreased = {pair(512, 254.65, 64, 74.62)};
    CHECK(validate_vote(in, VoteDirection::Up, decreased, kMaximize) == VoteCheck::NoEvidence);

    std::vector<EvidencePair> mixed = {pair(64, 10, 128, 20), pair(128, 20, 256, 15), pair(256, 15, 512, 10)};
    CHECK(validate_vote(in, VoteDirection::Down, mixed, kMaximize) == VoteCheck::Accepted);
    CHECK(validate_vote(in, VoteDirection::Up, mixed, kMaximize) == VoteCheck::Rejected);

    Insight free_text = wb_insight();
    free_text.prediction.reset();
    CHECK(validate_vote(free_text, VoteDirection::Up, ev, kMaximize) == VoteCheck::Unvalidated);

    // a latency metric improves when it goes down
    Insight lat = wb_insight();
    lat.prediction->metric = "p99_us";
    EvidencePair lp{"a", "b", wb(64), wb(512), {{"p99_us", 1600.0}}, {{"p99_us", 650.0}}};
    std::vector<EvidencePair> lev = {lp};
    CHECK(validate_vote(lat, VoteDirection::Up, lev, [](const std::string&) { return Objective::Minimize; }) ==
          VoteCheck::Accepted);
}

TEST_CASE("retrieval scoring") {
    CHECK(retrieval_score(0.5, 0.8, {}) == doctest::Approx(0.4));
    RetrievalOptions blend;
    blend.combine = ScoreCombination::Blend;
    blend.blend_alpha = 0.25;
    CHECK(retrieval_score(0.5, 0.8, blend) == doctest::Approx(0.25 * 0.5 + 0.75 * 0.8));

    CHECK(jaccard({"a", "b"}, {"b", "c"}) == doctest::Approx(1.0 / 3.0));
    CHECK(jaccard({}, {}) == 0.0);
    CHECK(word_set("Increase write_buffer_mb, improves!") ==
          std::set<std::string>{"increase", "write_buffer_mb", "improves"});

    MemoryStore empty;
    CHECK(retrieve(empty, "anything", {}, 8).empty());
    CHECK_THROWS_AS(retrieve(empty, "x", {}, 0), std::invalid_argument);
}

namespace {

std::vector<std::string> brute_force(const MemoryStore& m, const std::string& ctx, const std::set<std::string>& tags,
                                     int k) {
    // independent re-implementation of the scoring
    auto words = [](const std::string& s) {
        std::set<std::string> out;
        std::string cur;
        for (char ch : s + " ") {
            if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_')
                cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            else if (!cur.empty()) {
                out.insert(cur);
                cur.clear();
            }
        }
        return out;
    };
    auto cw = words(ctx);
    for (const auto& t : tags)
        cw.merge(words(t));
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& in : m.all()) {
        auto iw = words(in.text);
        for (const auto& t : in.tags)
            iw.merge(words(t));
        std::size_t inter = 0;
        for (const auto& w : cw)
            inter += iw.count(w);
        const std::size_t uni = cw.size() + iw.size() - inter;
        const double sim = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
        scored.emplace_back(sim * in.confidence, in.id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::string> out;
    for (int i = 0; i < k && i < static_cast<int>(scored.size()); ++i)
        out.push_back(scored[static_cast<std::size_t>(i)].second);
    return out;
}

} // namespace

TEST_CASE("property: retrieval equals the brute-force ordering") {
    const std::vector<std::string> vocab = {"write_buffer_mb", "block_cache_mb", "compaction", "throughput",
                                            "latency",         "increase",       "decrease",   "improves",
                                            "degrades",        "memory",         "flush",      "threads"};
    std::mt19937 rng(2024);
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    std::uniform_int_distribution<int> len(1, 6);
    // coarse confidences produce plenty of score ties
    std::uniform_int_distribution<int> conf(1, 5);
    for (int trial = 0; trial < 50; ++trial) {
        MemoryStore m;
        for (int i = 0; i < 20; ++i) {
            Insight in;
            for (int w = len(rng); w > 0; --w)
                in.text += vocab[pick(rng)] + " ";
            in.confidence = conf(rng) / 5.0;
            in.source_nodes = {"n0000"};
            if (i % 3 == 0)
                in.tags = {"simkv"};
            if (i % 2 == 0)
                m.add(in);
            else
                m.add_ltm(in);
        }
        std::string ctx;
        for (int w = len(rng); w > 0; --w)
            ctx += vocab[pick(rng)] + " ";
        for (int k : {1, 8, 20, 25}) {
            std::vector<std::string> got;
            for (const auto& in : retrieve(m, ctx, {"simkv"}, k))
                got.push_back(in.id);
            CHECK(got == brute_force(m, ctx, {"simkv"}, k));
        }
    }
}

TEST_CASE("tag scoping option") {
    MemoryStore m;
    auto a = wb_insight();
    a.tags = {"rocksdb"};
    m.add(a);
    auto b = wb_insight();
    b.tags = {"simkv"};
    m.add(b);
    RetrievalOptions scoped;
    scoped.require_tag_overlap = true;
    auto got = retrieve(m, "write_buffer_mb", {"simkv"}, 8, scoped);
    REQUIRE(got.size() == 1);
    CHECK(got[0].tags.contains("simkv"));
}

TEST_CASE("ids are unique and sequential") {
    MemoryStore m;
    CHECK(m.add(wb_insight()).id == "i0001");
    CHECK(m.add(wb_insight()).id == "i0002");
    auto pre = wb_insight();
    pre.id = "i0010";
    m.add_ltm(pre);
    CHECK(m.next_id() == "i0011");
    CHECK_THROWS_AS(m.add_ltm(pre), std::invalid_argument);
    Insight no_source = wb_insight();
    no_source.source_nodes.clear();
    CHECK_THROWS_AS(m.add(no_source), std::invalid_argument);
}

TEST_CASE("LTM survives a save/load cycle byte-identically") {
    oracle::TempDir tmp;
    MemoryStore m;
    auto a = wb_insight(0.8362);
    a.upvotes = 5;
    m.add_ltm(a);
    auto b = wb_insight(1.0 / 3.0);
    b.prediction.reset();
    b.text = "zstd costs cpu \"quoted\" é";
    m.add_ltm(b);
    m.save_ltm(tmp / "ltm.json");

    MemoryStore n;
    n.load_ltm(tmp / "ltm.json");
    n.save_ltm(tmp / "ltm2.json");
    CHECK(read_file(tmp / "ltm.json") == read_file(tmp / "ltm2.json"));
    CHECK(n.ltm() == m.ltm());

    MemoryStore missing;
    missing.load_ltm(tmp / "absent.json");
    CHECK(missing.ltm().empty());
}

TEST_CASE("STM and vote log persist") {
    oracle::TempDir tmp;
    MemoryStore m;
    auto id = m.add(wb_insight()).id;
    m.record_vote(id, VoteDirection::Up, {"n0002"}, true, 3, "accepted");
    m.save_stm(tmp / "stm.json");
    m.save_vote_log(tmp / "votes.jsonl");
    MemoryStore n;
    n.load_stm(tmp / "stm.json");
    n.load_vote_log(tmp / "votes.jsonl");
    CHECK(n.stm() == m.stm());
    REQUIRE(n.vote_log().size() == 1);
    CHECK(n.vote_log()[0].nodes == std::vector<std::string>{"n0002"});
    CHECK(n.vote_log()[0].iteration == 3);
}
