// SPDX-License-Identifier: Apache-2.0
#include <agenttune/reflector.hpp>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace agenttune {

json Experience::to_json(const std::string& target) const {
    json ns = json::array();
    for (const auto* n : nodes) {
        json metrics = json::object();
        if (n->digest)
            for (const auto& [k, v] : n->digest->metrics)
                metrics[k] = v.value;
        ns.push_back({{"node_id", n->id},
                      {"config", n->config.to_json()},
                      {"metrics", metrics},
                      {"summary", n->digest ? n->digest->summary : std::string()}});
    }
    json es = json::array();
    for (const auto& [a, b] : edges)
        es.push_back({a, b});
    return {{"target", target}, {"nodes", ns}, {"edges", es}};
}

namespace {

std::map<std::string, double> metric_values(const TuningNode& n) {
    std::map<std::string, double> out;
    if (n.digest)
        for (const auto& [k, v] : n.digest->metrics)
            out[k] = v.value;
    return out;
}

json evidence_json(std::span<const EvidencePair> evidence) {
    json out = json::array();
    for (const auto& e : evidence)
        out.push_back({{"before", {{"node_id", e.before_id}, {"config", e.before.to_json()}, {"metrics", e.metrics_before}}},
                       {"after", {{"node_id", e.after_id}, {"config", e.after.to_json()}, {"metrics", e.metrics_after}}}});
    return out;
}

} // namespace

std::vector<EvidencePair> evidence_from(const SearchTree& tree,
                                        std::span<const std::pair<std::string, std::string>> edges) {
    std::vector<EvidencePair> out;
    for (const auto& [a, b] : edges) {
        const auto* before = tree.find(a);
        const auto* after = tree.find(b);
        if (!before || !after || !before->digest || !after->digest)
            continue;
        out.push_back({a, b, before->config, after->config, metric_values(*before), metric_values(*after)});
    }
    return out;
}

Reflector::Reflector(LlmGateway& gateway, const PromptSet& prompts, MemoryStore& memory, const TuningTask& task)
    : gateway_(gateway), prompts_(prompts), memory_(memory), task_(task) {}

std::vector<std::string> Reflector::generate_insights(const Experience& experience, int iteration) {
    std::set<std::string> known_nodes;
    for (const auto* n : experience.nodes)
        if (n->digest)
            known_nodes.insert(n->id);
    if (known_nodes.size() < 2)
        return {};

    LlmRequest req;
    req.kind = RequestKind::GenerateInsights;
    req.prompt = prompts_.insights.render({
        {"TASK", fenced_block("task", task_.to_json())},
        {"DIGESTS", fenced_block("experiences", experience.to_json(task_.target))},
        {"INSIGHTS", fenced_block("memory", MemoryStore::insights_to_json(memory_.all()))},
    });

    std::vector<Insight> batch;
    try {
        ++stats_.generation_calls;
        auto resp = gateway_.complete(req);
        auto payload = response_payload(resp.text);
        if (!payload || !payload->is_array())
            throw MalformedResponse("insight answer is not a JSON array");
        for (const auto& item : *payload) {
            if (!item.is_object() || !item.contains("text") || !item.at("text").is_string())
                throw MalformedResponse("insight element lacks text");
            Insight in;
            in.text = item.at("text").get<std::string>();
            if (item.contains("prediction") && !item.at("prediction").is_null()) {
                try {
                    auto p = Prediction::from_json(item.at("prediction"));
                    if (task_.schema.find(p.param) && !p.metric.empty())
                        in.prediction = p;
                } catch (const std::exception& e) {
                    spdlog::debug("dropping unusable prediction: {}", e.what());
                }
            }
            double c = 0.5;
            if (item.contains("initial_confidence") && item.at("initial_confidence").is_number())
                c = item.at("initial_confidence").get<double>();
            if (!std::isfinite(c))
                c = 0.5;
            in.confidence = std::clamp(c, kMinInitialConfidence, kMaxInitialConfidence);
            for (const auto& s : item.value("source_nodes", json::array()))
                if (s.is_string() && known_nodes.contains(s.get<std::string>()))
                    in.source_nodes.push_back(s.get<std::string>());
            if (in.source_nodes.empty())
                in.source_nodes.assign(known_nodes.begin(), known_nodes.end());
            in.tags = task_.tags();
            in.tags.insert(task_.target);
            batch.push_back(std::move(in));
        }
    } catch (const BudgetExceeded&) {
        throw;
    } catch (const LlmError& e) {
        ++stats_.malformed_generations;
        spdlog::warn("insight generation produced nothing this iteration: {}", e.what());
        return {};
    }

    // merge identical predictions within the batch, keeping the higher confidence
    std::vector<Insight> merged;
    for (auto& in : batch) {
        auto same = std::find_if(merged.begin(), merged.end(), [&](const Insight& m) {
            return in.prediction && m.prediction && m.prediction->normalized() == in.prediction->normalized();
        });
        if (same == merged.end()) {
            merged.push_back(std::move(in));
            continue;
        }
        ++stats_.merged_duplicates;
        same->confidence = std::max(same->confidence, in.confidence);
        for (const auto& s : in.source_nodes)
            if (std::find(same->source_nodes.begin(), same->source_nodes.end(), s) == same->source_nodes.end())
                same->source_nodes.push_back(s);
    }

    std::vector<std::string> added;
    for (auto& in : merged) {
        if (in.prediction) {
            if (const auto* existing = memory_.find_by_prediction(*in.prediction)) {
                ++stats_.merged_duplicates;
                memory_.add_sources(existing->id, in.source_nodes);
                continue;
            }
        }
        added.push_back(memory_.add(std::move(in)).id);
    }
    spdlog::debug("iteration {}: {} new insights", iteration, added.size());
    return added;
}

std::vector<EvidencePair> Reflector::relevant_evidence(const Insight& insight, std::span<const EvidencePair> all) {
    std::vector<EvidencePair> out;
    for (const auto& e : all) {
        if (insight.prediction) {
            const auto* a = e.before.get(insight.prediction->param);
            const auto* b = e.after.get(insight.prediction->param);
            if (!a || !b || *a == *b)
                continue;
        }
        out.push_back(e);
    }
    return out;
}

VoteOutcome Reflector::review(const std::string& insight_id, std::span<const EvidencePair> evidence, int iteration) {
    VoteOutcome outcome;
    const auto* insight = memory_.find(insight_id);
    if (!insight || evidence.empty())
        return outcome;
    const Insight snapshot = *insight;

    LlmRequest req;
    req.kind = RequestKind::VoteInsights;
    req.prompt = prompts_.vote.render({
        {"TASK", fenced_block("task", task_.to_json())},
        {"INSIGHTS", fenced_block("insight", snapshot.to_json())},
        {"DIGESTS", fenced_block("evidence", evidence_json(evidence))},
    });
    ++stats_.vote_calls;
    auto resp = gateway_.complete(req);
    auto payload = response_payload(resp.text);
    if (!payload || !payload->is_object() || !payload->contains("vote") || !payload->at("vote").is_string())
        throw MalformedResponse("vote answer lacks a vote field");
    const auto v = payload->at("vote").get<std::string>();
    if (v == "none")
        return outcome;
    if (v != "up" && v != "down")
        throw MalformedResponse(fmt::format("unknown vote '{}'", v));
    outcome.vote = vote_from_string(v);

    std::vector<std::string> nodes;
    for (const auto& e : evidence)
        nodes.push_back(e.after_id);
    outcome.check = validate_vote(snapshot, *outcome.vote, evidence,
                                  [&](const std::string& metric) { return task_.objective_of(metric); });
    const bool accepted = outcome.check == VoteCheck::Accepted || outcome.check == VoteCheck::Unvalidated;
    (accepted ? stats_.accepted_votes : stats_.rejected_votes) += 1;
    outcome.change = memory_.record_vote(insight_id, *outcome.vote, std::move(nodes), accepted, iteration,
                                         std::string(to_string(outcome.check)),
                                         outcome.check == VoteCheck::Unvalidated);
    return outcome;
}

} // namespace agenttune
