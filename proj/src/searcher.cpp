// SPDX-License-Identifier: Apache-2.0
#include <agenttune/searcher.hpp>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace agenttune {

Objective TuningTask::objective_of(const std::string& metric) const {
    if (metric == target)
        return objective;
    auto it = metric_objectives.find(metric);
    return it == metric_objectives.end() ? Objective::Maximize : it->second;
}

json TuningTask::to_json() const {
    json constraints_json = constraints;
    return {{"system", system},
            {"system_info", system_info},
            {"target", target},
            {"objective", to_string(objective)},
            {"schema", schema.to_json()},
            {"workload", workload.to_json()},
            {"resources", resources.to_json()},
            {"budget_cap_mb", budget_cap_mb()},
            {"blacklist", blacklist},
            {"constraints", constraints_json}};
}

json node_context(const TuningNode& node) {
    return {{"node_id", node.id},
            {"depth", node.depth},
            {"config", node.config.to_json()},
            {"digest", node.digest ? node.digest->to_json() : json(nullptr)}};
}

Searcher::Searcher(LlmGateway& gateway, const PromptSet& prompts, const TuningTask& task)
    : gateway_(gateway), prompts_(prompts), task_(task) {}

std::vector<Configuration> Searcher::parse_proposals(const std::string& text, const Configuration& parent,
                                                     int branching) const {
    auto payload = response_payload(text);
    if (!payload || !payload->is_array())
        throw MalformedResponse("proposal is not a JSON array");
    std::vector<Configuration> out;
    for (const auto& item : *payload) {
        if (!item.is_object())
            throw MalformedResponse("proposal element is not an object");
        Configuration child = parent;
        for (const auto& [k, v] : item.items()) {
            try {
                child.values[k] = scalar_from_json(v);
            } catch (const std::exception& e) {
                throw MalformedResponse(fmt::format("value of '{}': {}", k, e.what()));
            }
        }
        out.push_back(std::move(child));
        if (static_cast<int>(out.size()) == branching)
            break;
    }
    return out;
}

std::vector<Configuration> Searcher::propose_children(const TuningNode& node, std::span<const Insight> insights,
                                                      int branching) {
    if (branching < 1)
        throw std::invalid_argument("branching must be >= 1");
    json insight_json = json::array();
    for (const auto& i : insights)
        insight_json.push_back(i.to_json());
    json task = task_.to_json();
    task["branching"] = branching;

    LlmRequest req;
    req.kind = RequestKind::ProposeChildren;
    req.prompt = prompts_.propose.render({
        {"TASK", fenced_block("task", task)},
        {"NODE", fenced_block("node", node_context(node))},
        {"INSIGHTS", fenced_block("insights", insight_json)},
        {"CONSTRAINTS", fenced_block("constraints", json(task_.constraints))},
    });

    Configuration parent = node.config;
    parent.parent_id = node.id;
    for (int attempt = 0; attempt < 2; ++attempt) {
        try {
            auto resp = gateway_.complete(req);
            return parse_proposals(resp.text, parent, branching);
        } catch (const BudgetExceeded&) {
            throw;
        } catch (const LlmError& e) {
            spdlog::warn("propose for {} failed (attempt {}): {}", node.id, attempt + 1, e.what());
            if (attempt == 0)
                ++stats_.propose_retries;
        }
    }
    ++stats_.propose_fallbacks;
    auto children = perturbation_fallback(node.config, task_.schema, insights, branching);
    for (auto& c : children)
        c.parent_id = node.id;
    return children;
}

std::vector<Configuration> Searcher::perturbation_fallback(const Configuration& base, const ParamSchema& schema,
                                                           std::span<const Insight> insights, int branching) {
    std::vector<const ParamSpec*> order;
    auto push = [&](const ParamSpec* p) {
        if (p && p->numeric() && std::find(order.begin(), order.end(), p) == order.end())
            order.push_back(p);
    };
    for (const auto& i : insights) {
        if (i.prediction)
            push(schema.find(i.prediction->param));
        for (const auto& w : word_set(i.text))
            push(schema.find(w));
    }
    for (const auto& p : schema.params())
        push(&p);

    const Configuration full = schema.complete(base);
    std::vector<Configuration> out;
    for (const auto* p : order) {
        if (static_cast<int>(out.size()) == branching)
            break;
        const double current = full.number(p->name).value_or(p->min);
        const double mid = (p->min + p->max) / 2.0;
        double next = current < mid ? (current == 0.0 ? 1.0 : current * 2.0) : current / 2.0;
        next = std::clamp(next, p->min, p->max);
        Configuration child = full;
        if (p->type == ParamType::Integer)
            child.values[p->name] = static_cast<std::int64_t>(std::llround(next));
        else
            child.values[p->name] = next;
        if (child == full)
            continue;
        child.parent_id = base.parent_id;
        out.push_back(std::move(child));
    }
    return out;
}

std::vector<std::size_t> Searcher::filter_constraints(const Configuration& parent,
                                                      std::span<const Configuration> candidates) {
    std::vector<std::size_t> all(candidates.size());
    for (std::size_t i = 0; i < all.size(); ++i)
        all[i] = i;
    if (task_.constraints.empty() || candidates.empty())
        return all;

    json cand = json::array();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        json changes = json::object();
        for (const auto& name : Configuration::diff(parent, candidates[i]))
            if (const auto* v = candidates[i].get(name))
                changes[name] = scalar_to_json(*v);
        cand.push_back({{"index", i}, {"config", candidates[i].to_json()}, {"changes", changes}});
    }
    LlmRequest req;
    req.kind = RequestKind::FilterConstraints;
    req.prompt = prompts_.filter.render({
        {"TASK", fenced_block("task", task_.to_json())},
        {"CANDIDATES", fenced_block("candidates", cand)},
        {"CONSTRAINTS", fenced_block("constraints", json(task_.constraints))},
    });
    try {
        auto resp = gateway_.complete(req);
        auto payload = response_payload(resp.text);
        if (!payload || !payload->is_object() || !payload->contains("keep") || !payload->at("keep").is_array())
            throw MalformedResponse("filter answer lacks a keep list");
        std::set<std::size_t> keep;
        for (const auto& k : payload->at("keep")) {
            if (!k.is_number_integer() || k.get<std::int64_t>() < 0 ||
                k.get<std::size_t>() >= candidates.size())
                throw MalformedResponse(fmt::format("bad keep index {}", k.dump()));
            keep.insert(k.get<std::size_t>());
        }
        return {keep.begin(), keep.end()};
    } catch (const LlmError& e) {
        spdlog::warn("constraint filter unavailable, keeping all candidates: {}", e.what());
        ++stats_.filter_fallbacks;
        return all;
    }
}

std::string Searcher::argmax_frontier(const SearchTree& tree) {
    if (tree.frontier().empty())
        throw TreeError("frontier is empty");
    std::string best;
    double best_v = 0.0;
    for (const auto& id : tree.frontier()) {
        double v = *tree.value_of(id);
        if (best.empty() || better(v, best_v, tree.objective())) {
            best = id;
            best_v = v;
        }
    }
    return best;
}

std::string Searcher::select_next(SearchTree& tree) {
    const auto& frontier = tree.frontier();
    if (frontier.empty())
        throw TreeError("frontier is empty");
    std::string chosen;
    if (frontier.size() == 1) {
        chosen = *frontier.begin();
    } else {
        json digests = json::array();
        for (const auto& id : frontier)
            digests.push_back(node_context(tree.node(id)));
        LlmRequest req;
        req.kind = RequestKind::SelectNode;
        req.prompt = prompts_.select.render({
            {"TASK", fenced_block("task", task_.to_json())},
            {"DIGESTS", fenced_block("candidates", digests)},
        });
        try {
            auto resp = gateway_.complete(req);
            auto payload = response_payload(resp.text);
            std::string id;
            if (payload && payload->is_object() && payload->contains("node_id") && payload->at("node_id").is_string())
                id = payload->at("node_id").get<std::string>();
            else
                id = trim(resp.text);
            if (frontier.contains(id))
                chosen = id;
            else
                spdlog::warn("selection '{}' is not on the frontier, using argmax", id);
        } catch (const LlmError& e) {
            spdlog::warn("selection unavailable, using argmax: {}", e.what());
        }
        if (chosen.empty()) {
            ++stats_.select_fallbacks;
            chosen = argmax_frontier(tree);
        }
    }
    tree.mark_selected(chosen);
    return chosen;
}

bool Searcher::converged(std::span<const double> s, Objective objective, double threshold, int rounds) {
    if (rounds < 1 || s.size() < static_cast<std::size_t>(rounds))
        return false;
    const double from = s[s.size() - static_cast<std::size_t>(rounds)];
    const double to = s.back();
    if (from == 0.0)
        return to == from;
    const double gain = objective == Objective::Maximize ? (to - from) / std::abs(from) : (from - to) / std::abs(from);
    return gain < threshold;
}

std::optional<std::string> Searcher::check_termination(const SearchTree& tree, std::int64_t tokens_used,
                                                       double elapsed_s, int iterations_done,
                                                       const TerminationLimits& limits) {
    auto series = tree.best_series();
    if (converged(series, tree.objective(), limits.convergence_threshold, limits.convergence_rounds))
        return "convergence";
    if (limits.token_budget && tokens_used >= *limits.token_budget)
        return "token budget";
    if (limits.time_budget_s && elapsed_s >= *limits.time_budget_s)
        return "time budget";
    if (iterations_done >= limits.max_iterations)
        return "max iterations";
    return std::nullopt;
}

} // namespace agenttune
