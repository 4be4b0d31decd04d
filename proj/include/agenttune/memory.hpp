// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/common.hpp>
#include <agenttune/target.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace agenttune {

enum class ParamDirection { Increase, Decrease };
enum class Effect { Improves, Degrades };
enum class VoteDirection { Up, Down };
enum class Tier { STM, LTM };

std::string_view to_string(ParamDirection d);
std::string_view to_string(Effect e);
std::string_view to_string(VoteDirection v);
std::string_view to_string(Tier t);
ParamDirection param_direction_from_string(std::string_view s);
Effect effect_from_string(std::string_view s);
VoteDirection vote_from_string(std::string_view s);
Tier tier_from_string(std::string_view s);

/// Machine-checkable claim: moving `param` in `direction` improves or
/// degrades `metric`.
struct Prediction {
    std::string param;
    ParamDirection direction = ParamDirection::Increase;
    std::string metric;
    Effect effect = Effect::Improves;

    /// Same claim expressed with direction Increase.
    Prediction normalized() const;

    auto operator<=>(const Prediction&) const = default;
    json to_json() const;
    static Prediction from_json(const json& j);
};

struct Insight {
    std::string id;
    std::string text;
    std::optional<Prediction> prediction;
    double confidence = 0.5;
    Tier tier = Tier::STM;
    int upvotes = 0;
    int downvotes = 0;
    std::vector<std::string> source_nodes;
    std::set<std::string> tags;
    bool unvalidated = false; ///< a vote was applied without a structured check

    json to_json() const;
    static Insight from_json(const json& j);
    bool operator==(const Insight&) const = default;
};

// update magnitudes and tier thresholds
inline constexpr double kUpvoteRate = 0.2;
inline constexpr double kDownvoteFactor = 0.8;
inline constexpr double kPromoteConfidence = 0.8;
inline constexpr int kPromoteUpvotes = 3;
inline constexpr double kDiscardConfidence = 0.2;
inline constexpr double kDemoteConfidence = 0.5;

/// up: c + 0.2(1 - c); down: 0.8c. Bumps the matching counter. Tier is untouched.
Insight apply_vote(Insight insight, VoteDirection direction);

struct VoteRecord {
    std::string insight_id;
    VoteDirection vote = VoteDirection::Up;
    std::vector<std::string> nodes;
    bool accepted = false;
    std::string note;
    int iteration = 0;

    json to_json() const;
    static VoteRecord from_json(const json& j);
};

enum class TierChange { None, Promoted, Demoted, Discarded };

class MemoryStore {
public:
    const std::vector<Insight>& stm() const { return stm_; }
    const std::vector<Insight>& ltm() const { return ltm_; }
    const std::vector<VoteRecord>& vote_log() const { return vote_log_; }
    std::vector<Insight> all() const;

    const Insight* find(std::string_view id) const;
    const Insight* find_by_prediction(const Prediction& p) const;

    /// Inserts into STM; assigns a fresh id when `insight.id` is empty.
    const Insight& add(Insight insight);
    /// Inserts directly into LTM (import / pre-seeding).
    const Insight& add_ltm(Insight insight);

    void add_sources(std::string_view id, std::span<const std::string> nodes);

    /// Logs the vote; when accepted applies it and then promotes (STM, c>=0.8
    /// and upvotes>=3), discards (STM, c<0.2) or demotes (LTM, c<0.5).
    TierChange record_vote(std::string_view id, VoteDirection vote, std::vector<std::string> nodes, bool accepted,
                           int iteration, std::string note = {}, bool unvalidated = false);

    std::string next_id() const;

    static json insights_to_json(const std::vector<Insight>& list);
    static std::vector<Insight> insights_from_json(const json& j);

    void load_ltm(const std::filesystem::path& path); ///< missing file -> empty LTM
    void save_ltm(const std::filesystem::path& path) const;
    void load_stm(const std::filesystem::path& path);
    void save_stm(const std::filesystem::path& path) const;
    void load_vote_log(const std::filesystem::path& path);
    void save_vote_log(const std::filesystem::path& path) const;

private:
    Insight* find_mut(std::string_view id);
    void check_unique(const std::string& id) const;

    std::vector<Insight> stm_;
    std::vector<Insight> ltm_;
    std::vector<VoteRecord> vote_log_;
};

// --- validation of votes ------------------------------------------------------

/// A parent/child benchmark observation pair.
struct EvidencePair {
    std::string before_id;
    std::string after_id;
    Configuration before;
    Configuration after;
    std::map<std::string, double> metrics_before;
    std::map<std::string, double> metrics_after;
};

enum class VoteCheck { Accepted, Rejected, NoEvidence, Unvalidated };

std::string_view to_string(VoteCheck c);

/// Pairs where the predicted parameter moved in the predicted direction are
/// kept; an upvote is accepted iff most kept pairs show the predicted effect,
/// a downvote iff most contradict it. `objective_of` maps a metric name to
/// its improvement direction.
VoteCheck validate_vote(const Insight& insight, VoteDirection vote, std::span<const EvidencePair> evidence,
                        const std::function<Objective(const std::string&)>& objective_of);

// --- retrieval ------------------------------------------------------------------

std::set<std::string> word_set(std::string_view text);
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

class SimilarityProvider {
public:
    virtual ~SimilarityProvider() = default;
    virtual double similarity(std::string_view context, const std::set<std::string>& context_tags,
                              const Insight& insight) const = 0;
};

/// Jaccard between the context's word set (plus its tags) and the insight's
/// word set plus tags.
class JaccardSimilarity : public SimilarityProvider {
public:
    double similarity(std::string_view context, const std::set<std::string>& context_tags,
                      const Insight& insight) const override;
};

enum class ScoreCombination { Product, Blend };

struct RetrievalOptions {
    std::shared_ptr<const SimilarityProvider> similarity;
    ScoreCombination combine = ScoreCombination::Product;
    double blend_alpha = 0.5; ///< weight of similarity under Blend
    bool require_tag_overlap = false;
};

double retrieval_score(double similarity, double confidence, const RetrievalOptions& options);

struct ScoredInsight {
    Insight insight;
    double score = 0.0;
};

/// Top-k over STM and LTM by (score desc, id asc).
std::vector<ScoredInsight> retrieve_scored(const MemoryStore& store, std::string_view context,
                                           const std::set<std::string>& tags, int k,
                                           const RetrievalOptions& options = {});
std::vector<Insight> retrieve(const MemoryStore& store, std::string_view context, const std::set<std::string>& tags,
                              int k, const RetrievalOptions& options = {});

} // namespace agenttune
