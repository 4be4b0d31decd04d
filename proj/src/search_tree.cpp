// SPDX-License-Identifier: Apache-2.0
#include <agenttune/search_tree.hpp>

#include <fmt/format.h>

#include <algorithm>

namespace agenttune {

std::string_view to_string(NodeStatus s) {
    switch (s) {
    case NodeStatus::Proposed:
        return "proposed";
    case NodeStatus::Rejected:
        return "rejected";
    case NodeStatus::Benchmarked:
        return "benchmarked";
    case NodeStatus::Failed:
        return "failed";
    case NodeStatus::Selected:
        return "selected";
    }
    return "unknown";
}

NodeStatus node_status_from_string(std::string_view s) {
    for (auto st : {NodeStatus::Proposed, NodeStatus::Rejected, NodeStatus::Benchmarked, NodeStatus::Failed,
                    NodeStatus::Selected})
        if (to_string(st) == s)
            return st;
    throw std::invalid_argument(fmt::format("unknown node status '{}'", s));
}

json TuningNode::to_json() const {
    return {{"id", id},
            {"parent_id", parent_id ? json(*parent_id) : json(nullptr)},
            {"config", config.to_json()},
            {"workload", workload.to_json()},
            {"resources", resources.to_json()},
            {"digest", digest ? digest->to_json() : json(nullptr)},
            {"depth", depth},
            {"status", to_string(status)},
            {"iteration", iteration},
            {"note", note}};
}

TuningNode TuningNode::from_json(const json& j) {
    TuningNode n;
    n.id = j.at("id").get<std::string>();
    if (!j.at("parent_id").is_null())
        n.parent_id = j.at("parent_id").get<std::string>();
    n.config = Configuration::from_json(j.at("config"));
    n.config.parent_id = n.parent_id;
    n.workload = WorkloadSpec::from_json(j.at("workload"));
    n.resources = ResourceSpec::from_json(j.at("resources"));
    if (!j.at("digest").is_null())
        n.digest = PerformanceDigest::from_json(j.at("digest"));
    n.depth = j.at("depth").get<int>();
    n.status = node_status_from_string(j.at("status").get<std::string>());
    n.iteration = j.value("iteration", 0);
    n.note = j.value("note", std::string());
    return n;
}

SearchTree::SearchTree(std::string target, Objective objective, std::size_t frontier_cap)
    : target_(std::move(target)), objective_(objective), frontier_cap_(frontier_cap) {
    if (frontier_cap_ == 0)
        throw std::invalid_argument("frontier cap must be positive");
}

std::string SearchTree::next_id() {
    return fmt::format("n{:04d}", next_index_++);
}

TuningNode& SearchTree::mut(const std::string& id) {
    auto it = nodes_.find(id);
    if (it == nodes_.end())
        throw TreeError(fmt::format("no node '{}'", id));
    return it->second;
}

const TuningNode& SearchTree::node(const std::string& id) const {
    return const_cast<SearchTree*>(this)->mut(id);
}

const TuningNode* SearchTree::find(const std::string& id) const {
    auto it = nodes_.find(id);
    return it == nodes_.end() ? nullptr : &it->second;
}

const TuningNode& SearchTree::add_root(Configuration config, WorkloadSpec workload, ResourceSpec resources) {
    if (!root_id_.empty())
        throw TreeError("tree already has a root");
    TuningNode n;
    n.id = next_id();
    config.parent_id.reset();
    n.config = std::move(config);
    n.workload = std::move(workload);
    n.resources = resources;
    root_id_ = n.id;
    return nodes_.emplace(n.id, std::move(n)).first->second;
}

const TuningNode& SearchTree::add_child(const std::string& parent_id, Configuration config, int iteration) {
    const auto& parent = node(parent_id);
    TuningNode n;
    n.id = next_id();
    n.parent_id = parent_id;
    config.parent_id = parent_id;
    n.config = std::move(config);
    n.workload = parent.workload;
    n.resources = parent.resources;
    n.depth = parent.depth + 1;
    n.iteration = iteration;
    return nodes_.emplace(n.id, std::move(n)).first->second;
}

void SearchTree::mark_rejected(const std::string& id, std::string reason) {
    auto& n = mut(id);
    if (n.status != NodeStatus::Proposed)
        throw TreeError(fmt::format("node {} is {}, cannot reject", id, to_string(n.status)));
    n.status = NodeStatus::Rejected;
    n.note = std::move(reason);
}

void SearchTree::record_result(const std::string& id, PerformanceDigest digest) {
    auto& n = mut(id);
    if (n.status != NodeStatus::Proposed)
        throw TreeError(fmt::format("node {} is {}, cannot record a result", id, to_string(n.status)));
    const bool usable = digest.exit_status == ExitStatus::Ok && digest.value(target_).has_value();
    if (!usable) {
        n.status = NodeStatus::Failed;
        n.note = digest.summary;
        return;
    }
    n.digest = std::move(digest);
    n.status = NodeStatus::Benchmarked;
    if (n.parent_id)
        frontier_.erase(*n.parent_id);
    frontier_.insert(id);
    prune_frontier();
}

void SearchTree::mark_selected(const std::string& id) {
    auto& n = mut(id);
    if (n.status != NodeStatus::Benchmarked && n.status != NodeStatus::Selected)
        throw TreeError(fmt::format("node {} is {}, cannot select", id, to_string(n.status)));
    n.status = NodeStatus::Selected;
}

void SearchTree::prune_frontier() {
    while (frontier_.size() > frontier_cap_) {
        // weakest value; among equals the largest id goes first
        auto weakest = frontier_.begin();
        for (auto it = frontier_.begin(); it != frontier_.end(); ++it) {
            double v = *value_of(*it);
            double w = *value_of(*weakest);
            if (better(w, v, objective_) || (v == w && *it > *weakest))
                weakest = it;
        }
        frontier_.erase(weakest);
    }
}

std::vector<std::string> SearchTree::children_of(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& [cid, n] : nodes_)
        if (n.parent_id == id)
            out.push_back(cid);
    return out;
}

bool SearchTree::contains_config(const Configuration& config) const {
    return std::any_of(nodes_.begin(), nodes_.end(), [&](const auto& kv) { return kv.second.config == config; });
}

std::optional<double> SearchTree::value_of(const std::string& id) const {
    const auto* n = find(id);
    if (!n || !n->digest)
        return std::nullopt;
    return n->digest->value(target_);
}

std::optional<std::string> SearchTree::best_node() const {
    std::optional<std::string> best;
    std::optional<double> best_v;
    for (const auto& [id, n] : nodes_) {
        auto v = value_of(id);
        if (!v)
            continue;
        if (!best_v || better(*v, *best_v, objective_)) {
            best = id;
            best_v = v;
        }
    }
    return best;
}

std::optional<double> SearchTree::best_value() const {
    auto b = best_node();
    return b ? value_of(*b) : std::nullopt;
}

void SearchTree::close_iteration(int iteration) {
    auto v = best_value();
    if (!v)
        throw TreeError("no benchmarked node to report a best value for");
    if (!best_per_iteration_.empty() && iteration <= best_per_iteration_.back().first)
        throw TreeError(fmt::format("iteration {} already closed", iteration));
    best_per_iteration_.emplace_back(iteration, *v);
}

std::vector<double> SearchTree::best_series() const {
    std::vector<double> out;
    for (const auto& [_, v] : best_per_iteration_)
        out.push_back(v);
    return out;
}

int SearchTree::error_count() const {
    return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(), [](const auto& kv) {
        return kv.second.status == NodeStatus::Rejected || kv.second.status == NodeStatus::Failed;
    }));
}

std::size_t SearchTree::benchmarked_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const auto& kv) {
        return kv.second.status == NodeStatus::Benchmarked || kv.second.status == NodeStatus::Selected;
    }));
}

void SearchTree::check_invariants() const {
    for (const auto& [id, n] : nodes_) {
        if (id != n.id)
            throw TreeError(fmt::format("node keyed {} carries id {}", id, n.id));
        if (!n.parent_id) {
            if (id != root_id_ || n.depth != 0)
                throw TreeError(fmt::format("parentless node {} is not a depth-0 root", id));
        } else {
            const auto* p = find(*n.parent_id);
            if (!p)
                throw TreeError(fmt::format("node {} has missing parent {}", id, *n.parent_id));
            if (n.depth != p->depth + 1)
                throw TreeError(fmt::format("node {} depth {} under parent depth {}", id, n.depth, p->depth));
            // ids are issued in creation order, so a parent always sorts first
            if (!(*n.parent_id < id))
                throw TreeError(fmt::format("node {} points at a younger parent", id));
        }
        const bool has_result = n.status == NodeStatus::Benchmarked || n.status == NodeStatus::Selected;
        if (has_result != n.digest.has_value())
            throw TreeError(fmt::format("node {} is {} but digest presence is {}", id, to_string(n.status),
                                        n.digest.has_value()));
    }
    for (std::size_t i = 1; i < best_per_iteration_.size(); ++i)
        if (better(best_per_iteration_[i - 1].second, best_per_iteration_[i].second, objective_))
            throw TreeError("best_per_iteration regressed");
    for (const auto& id : frontier_)
        if (!value_of(id))
            throw TreeError(fmt::format("frontier node {} has no value", id));
}

json SearchTree::to_json() const {
    json nodes = json::array();
    json edges = json::array();
    for (const auto& [id, n] : nodes_) {
        nodes.push_back(n.to_json());
        if (n.parent_id)
            edges.push_back({*n.parent_id, id});
    }
    json bests = json::array();
    for (const auto& [it, v] : best_per_iteration_)
        bests.push_back({{"iteration", it}, {"best", v}});
    return {{"target", target_},
            {"objective", to_string(objective_)},
            {"frontier_cap", frontier_cap_},
            {"root_id", root_id_},
            {"next_index", next_index_},
            {"nodes", nodes},
            {"edges", edges},
            {"frontier", frontier_},
            {"best_per_iteration", bests}};
}

SearchTree SearchTree::from_json(const json& j) {
    SearchTree t(j.at("target").get<std::string>(), objective_from_string(j.at("objective").get<std::string>()),
                 j.value("frontier_cap", kDefaultFrontierCap));
    t.root_id_ = j.at("root_id").get<std::string>();
    t.next_index_ = j.at("next_index").get<int>();
    for (const auto& n : j.at("nodes")) {
        auto node = TuningNode::from_json(n);
        t.nodes_.emplace(node.id, std::move(node));
    }
    t.frontier_ = j.at("frontier").get<std::set<std::string>>();
    for (const auto& b : j.at("best_per_iteration"))
        t.best_per_iteration_.emplace_back(b.at("iteration").get<int>(), b.at("best").get<double>());
    t.check_invariants();
    return t;
}

} // namespace agenttune
