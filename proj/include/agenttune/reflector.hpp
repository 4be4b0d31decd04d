// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/llm_gateway.hpp>
#include <agenttune/memory.hpp>
#include <agenttune/prompts.hpp>
#include <agenttune/search_tree.hpp>
#include <agenttune/searcher.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace agenttune {

inline constexpr double kMinInitialConfidence = 0.1;
inline constexpr double kMaxInitialConfidence = 0.9;

/// Benchmarked nodes plus the parent-child edges connecting them.
struct Experience {
    std::vector<const TuningNode*> nodes;
    std::vector<std::pair<std::string, std::string>> edges;

    json to_json(const std::string& target) const;
};

/// Observation pairs (parent -> child) out of `edges`, both ends benchmarked.
std::vector<EvidencePair> evidence_from(const SearchTree& tree,
                                        std::span<const std::pair<std::string, std::string>> edges);

struct ReflectorStats {
    int generation_calls = 0;
    int malformed_generations = 0;
    int merged_duplicates = 0;
    int vote_calls = 0;
    int accepted_votes = 0;
    int rejected_votes = 0;
};

struct VoteOutcome {
    std::optional<VoteDirection> vote; ///< nothing when the model abstained
    VoteCheck check = VoteCheck::NoEvidence;
    TierChange change = TierChange::None;
};

/// The Reflector agent: turns experiences into insights and keeps their
/// confidence honest against benchmark evidence.
class Reflector {
public:
    Reflector(LlmGateway& gateway, const PromptSet& prompts, MemoryStore& memory, const TuningTask& task);

    /// Ids of insights added to STM. Needs at least two benchmarked nodes;
    /// a malformed answer yields nothing. Predictions whose param or metric
    /// is unknown are dropped, keeping the text. An insight predicting what
    /// memory already holds only extends that insight's source nodes.
    std::vector<std::string> generate_insights(const Experience& experience, int iteration);

    /// Asks for a vote, validates it against `evidence` and records it.
    VoteOutcome review(const std::string& insight_id, std::span<const EvidencePair> evidence, int iteration);

    /// Pairs relevant to the insight: those where its predicted parameter
    /// changed, or all pairs when it has no prediction.
    static std::vector<EvidencePair> relevant_evidence(const Insight& insight, std::span<const EvidencePair> all);

    const ReflectorStats& stats() const { return stats_; }

private:
    LlmGateway& gateway_;
    const PromptSet& prompts_;
    MemoryStore& memory_;
    const TuningTask& task_;
    ReflectorStats stats_;
};

} // namespace agenttune
