// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/llm_gateway.hpp>
#include <agenttune/memory.hpp>
#include <agenttune/prompts.hpp>
#include <agenttune/search_tree.hpp>

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace agenttune {

/// What every agent needs to know about the tuning problem.
struct TuningTask {
    std::string system;
    std::string system_info;
    ParamSchema schema;
    WorkloadSpec workload;
    ResourceSpec resources;
    std::string target;
    Objective objective = Objective::Maximize;
    std::set<std::string> blacklist;
    std::vector<std::string> constraints;
    double cap_factor = kDefaultBudgetCapFactor;
    std::map<std::string, Objective> metric_objectives; ///< other metrics' directions

    Objective objective_of(const std::string& metric) const;
    double budget_cap_mb() const { return cap_factor * resources.memory_mb; }
    std::set<std::string> tags() const { return {system, workload.name}; }
    /// The "task" context block shared by all prompts.
    json to_json() const;
};

struct SearcherStats {
    int propose_retries = 0;
    int propose_fallbacks = 0;
    int select_fallbacks = 0;
    int filter_fallbacks = 0;
};

inline constexpr double kConvergenceThreshold = 0.01;
inline constexpr int kConvergenceRounds = 3;

struct TerminationLimits {
    std::optional<std::int64_t> token_budget;
    std::optional<double> time_budget_s;
    int max_iterations = 20;
    double convergence_threshold = kConvergenceThreshold;
    int convergence_rounds = kConvergenceRounds;
};

/// The Searcher agent.
class Searcher {
public:
    Searcher(LlmGateway& gateway, const PromptSet& prompts, const TuningTask& task);

    /// Complete child configurations (parent values overlaid with the
    /// model's changes), at most `branching` of them. BudgetExceeded
    /// propagates; malformed answers get one retry, then the perturbation
    /// fallback.
    std::vector<Configuration> propose_children(const TuningNode& node, std::span<const Insight> insights,
                                                int branching);

    /// One child per parameter: double it when below its range midpoint,
    /// halve it otherwise. Parameters named by insights come first, then
    /// schema order.
    static std::vector<Configuration> perturbation_fallback(const Configuration& base, const ParamSchema& schema,
                                                            std::span<const Insight> insights, int branching);

    /// Layer 1: indices of candidates the model keeps under the user
    /// constraints. No constraints means no call and everything kept.
    std::vector<std::size_t> filter_constraints(const Configuration& parent,
                                                std::span<const Configuration> candidates);

    /// Picks the node to expand next from the frontier and marks it selected.
    std::string select_next(SearchTree& tree);

    /// Highest target value on the frontier; ties go to the smallest id.
    static std::string argmax_frontier(const SearchTree& tree);

    /// Relative gain of the best value across the last `rounds` entries of
    /// the series is below `threshold`.
    static bool converged(std::span<const double> best_series, Objective objective,
                          double threshold = kConvergenceThreshold, int rounds = kConvergenceRounds);

    /// Reason to stop ("convergence", "token budget", "time budget",
    /// "max iterations"), or nothing to continue.
    static std::optional<std::string> check_termination(const SearchTree& tree, std::int64_t tokens_used,
                                                        double elapsed_s, int iterations_done,
                                                        const TerminationLimits& limits);

    const SearcherStats& stats() const { return stats_; }

private:
    std::vector<Configuration> parse_proposals(const std::string& text, const Configuration& parent,
                                               int branching) const;

    LlmGateway& gateway_;
    const PromptSet& prompts_;
    const TuningTask& task_;
    SearcherStats stats_;
};

/// Context block describing one node to a prompt.
json node_context(const TuningNode& node);

} // namespace agenttune
