// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/extractor.hpp>
#include <agenttune/target.hpp>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace agenttune {

enum class NodeStatus { Proposed, Rejected, Benchmarked, Failed, Selected };

std::string_view to_string(NodeStatus s);
NodeStatus node_status_from_string(std::string_view s);

struct TuningNode {
    std::string id;
    std::optional<std::string> parent_id;
    Configuration config;
    WorkloadSpec workload;
    ResourceSpec resources;
    std::optional<PerformanceDigest> digest;
    int depth = 0;
    NodeStatus status = NodeStatus::Proposed;
    int iteration = 0; ///< iteration that created the node
    std::string note;  ///< rejection reason or failure summary

    json to_json() const;
    static TuningNode from_json(const json& j);
};

class TreeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline constexpr std::size_t kDefaultFrontierCap = 32;

/// Search tree over configurations. Node ids are "n0000", "n0001", ... in
/// creation order. The frontier holds benchmarked nodes that have no
/// benchmarked child yet, capped by pruning the weakest.
class SearchTree {
public:
    SearchTree(std::string target, Objective objective, std::size_t frontier_cap = kDefaultFrontierCap);

    const TuningNode& add_root(Configuration config, WorkloadSpec workload, ResourceSpec resources);
    const TuningNode& add_child(const std::string& parent_id, Configuration config, int iteration);

    void mark_rejected(const std::string& id, std::string reason);
    /// Benchmarked when the run exited ok and the target metric is present,
    /// failed otherwise.
    void record_result(const std::string& id, PerformanceDigest digest);
    void mark_selected(const std::string& id);

    const TuningNode& node(const std::string& id) const;
    const TuningNode* find(const std::string& id) const;
    const std::map<std::string, TuningNode>& nodes() const { return nodes_; }
    const std::string& root_id() const { return root_id_; }
    const std::set<std::string>& frontier() const { return frontier_; }
    std::vector<std::string> children_of(const std::string& id) const;
    bool contains_config(const Configuration& config) const;

    std::optional<double> value_of(const std::string& id) const;
    std::optional<std::string> best_node() const;
    std::optional<double> best_value() const;

    /// Appends (iteration, best so far).
    void close_iteration(int iteration);
    const std::vector<std::pair<int, double>>& best_per_iteration() const { return best_per_iteration_; }
    std::vector<double> best_series() const;

    /// Rejected plus failed nodes.
    int error_count() const;
    std::size_t benchmarked_count() const;

    const std::string& target() const { return target_; }
    Objective objective() const { return objective_; }

    /// Throws TreeError describing the first broken structural invariant.
    void check_invariants() const;

    json to_json() const;
    static SearchTree from_json(const json& j);

private:
    TuningNode& mut(const std::string& id);
    std::string next_id();
    void prune_frontier();

    std::string target_;
    Objective objective_;
    std::size_t frontier_cap_;
    std::map<std::string, TuningNode> nodes_;
    std::string root_id_;
    std::set<std::string> frontier_;
    std::vector<std::pair<int, double>> best_per_iteration_;
    int next_index_ = 0;
};

} // namespace agenttune
