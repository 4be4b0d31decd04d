// SPDX-License-Identifier: Apache-2.0
#include <agenttune/memory.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace agenttune {

std::string_view to_string(ParamDirection d) {
    return d == ParamDirection::Increase ? "increase" : "decrease";
}
std::string_view to_string(Effect e) {
    return e == Effect::Improves ? "improves" : "degrades";
}
std::string_view to_string(VoteDirection v) {
    return v == VoteDirection::Up ? "up" : "down";
}
std::string_view to_string(Tier t) {
    return t == Tier::STM ? "STM" : "LTM";
}

ParamDirection param_direction_from_string(std::string_view s) {
    if (s == "increase")
        return ParamDirection::Increase;
    if (s == "decrease")
        return ParamDirection::Decrease;
    throw std::invalid_argument(fmt::format("unknown direction '{}'", s));
}
Effect effect_from_string(std::string_view s) {
    if (s == "improves")
        return Effect::Improves;
    if (s == "degrades")
        return Effect::Degrades;
    throw std::invalid_argument(fmt::format("unknown effect '{}'", s));
}
VoteDirection vote_from_string(std::string_view s) {
    if (s == "up")
        return VoteDirection::Up;
    if (s == "down")
        return VoteDirection::Down;
    throw std::invalid_argument(fmt::format("unknown vote '{}'", s));
}
Tier tier_from_string(std::string_view s) {
    if (s == "STM")
        return Tier::STM;
    if (s == "LTM")
        return Tier::LTM;
    throw std::invalid_argument(fmt::format("unknown tier '{}'", s));
}

std::string_view to_string(VoteCheck c) {
    switch (c) {
    case VoteCheck::Accepted:
        return "accepted";
    case VoteCheck::Rejected:
        return "rejected";
    case VoteCheck::NoEvidence:
        return "no-evidence";
    case VoteCheck::Unvalidated:
        return "unvalidated";
    }
    return "unknown";
}

// --- Prediction / Insight -------------------------------------------------------

Prediction Prediction::normalized() const {
    if (direction == ParamDirection::Increase)
        return *this;
    Prediction p = *this;
    p.direction = ParamDirection::Increase;
    p.effect = effect == Effect::Improves ? Effect::Degrades : Effect::Improves;
    return p;
}

json Prediction::to_json() const {
    return {{"param", param}, {"direction", to_string(direction)}, {"metric", metric}, {"effect", to_string(effect)}};
}

Prediction Prediction::from_json(const json& j) {
    return {j.at("param").get<std::string>(), param_direction_from_string(j.at("direction").get<std::string>()),
            j.at("metric").get<std::string>(), effect_from_string(j.at("effect").get<std::string>())};
}

json Insight::to_json() const {
    return {{"id", id},
            {"text", text},
            {"prediction", prediction ? prediction->to_json() : json(nullptr)},
            {"confidence", confidence},
            {"tier", to_string(tier)},
            {"upvotes", upvotes},
            {"downvotes", downvotes},
            {"source_nodes", source_nodes},
            {"tags", tags},
            {"unvalidated", unvalidated}};
}

Insight Insight::from_json(const json& j) {
    Insight i;
    i.id = j.at("id").get<std::string>();
    i.text = j.at("text").get<std::string>();
    if (j.contains("prediction") && !j.at("prediction").is_null())
        i.prediction = Prediction::from_json(j.at("prediction"));
    i.confidence = j.at("confidence").get<double>();
    if (!(i.confidence >= 0.0 && i.confidence <= 1.0))
        throw std::invalid_argument(fmt::format("insight {}: confidence outside [0,1]", i.id));
    i.tier = tier_from_string(j.value("tier", std::string("STM")));
    i.upvotes = j.value("upvotes", 0);
    i.downvotes = j.value("downvotes", 0);
    i.source_nodes = j.value("source_nodes", std::vector<std::string>{});
    i.tags = j.value("tags", std::set<std::string>{});
    i.unvalidated = j.value("unvalidated", false);
    return i;
}

Insight apply_vote(Insight insight, VoteDirection direction) {
    if (direction == VoteDirection::Up) {
        insight.confidence += kUpvoteRate * (1.0 - insight.confidence);
        ++insight.upvotes;
    } else {
        insight.confidence *= kDownvoteFactor;
        ++insight.downvotes;
    }
    insight.confidence = std::clamp(insight.confidence, 0.0, 1.0);
    return insight;
}

json VoteRecord::to_json() const {
    return {{"insight_id", insight_id}, {"vote", to_string(vote)}, {"nodes", nodes},
            {"accepted", accepted},     {"note", note},            {"iteration", iteration}};
}

VoteRecord VoteRecord::from_json(const json& j) {
    VoteRecord r;
    r.insight_id = j.at("insight_id").get<std::string>();
    r.vote = vote_from_string(j.at("vote").get<std::string>());
    r.nodes = j.value("nodes", std::vector<std::string>{});
    r.accepted = j.at("accepted").get<bool>();
    r.note = j.value("note", std::string());
    r.iteration = j.value("iteration", 0);
    return r;
}

// --- MemoryStore ----------------------------------------------------------------

std::vector<Insight> MemoryStore::all() const {
    std::vector<Insight> out = stm_;
    out.insert(out.end(), ltm_.begin(), ltm_.end());
    return out;
}

const Insight* MemoryStore::find(std::string_view id) const {
    return const_cast<MemoryStore*>(this)->find_mut(id);
}

Insight* MemoryStore::find_mut(std::string_view id) {
    for (auto* tier : {&stm_, &ltm_})
        for (auto& i : *tier)
            if (i.id == id)
                return &i;
    return nullptr;
}

const Insight* MemoryStore::find_by_prediction(const Prediction& p) const {
    const auto key = p.normalized();
    for (const auto* tier : {&ltm_, &stm_})
        for (const auto& i : *tier)
            if (i.prediction && i.prediction->normalized() == key)
                return &i;
    return nullptr;
}

std::string MemoryStore::next_id() const {
    long highest = 0;
    for (const auto* tier : {&stm_, &ltm_})
        for (const auto& i : *tier)
            if (i.id.size() > 1 && i.id[0] == 'i' &&
                std::all_of(i.id.begin() + 1, i.id.end(), [](unsigned char c) { return std::isdigit(c); }))
                highest = std::max(highest, std::stol(i.id.substr(1)));
    return fmt::format("i{:04d}", highest + 1);
}

void MemoryStore::check_unique(const std::string& id) const {
    if (find(id))
        throw std::invalid_argument(fmt::format("insight id '{}' already in memory", id));
}

const Insight& MemoryStore::add(Insight insight) {
    if (insight.id.empty())
        insight.id = next_id();
    check_unique(insight.id);
    if (insight.source_nodes.empty())
        throw std::invalid_argument("insight needs at least one source node");
    insight.tier = Tier::STM;
    insight.confidence = std::clamp(insight.confidence, 0.0, 1.0);
    stm_.push_back(std::move(insight));
    return stm_.back();
}

const Insight& MemoryStore::add_ltm(Insight insight) {
    if (insight.id.empty())
        insight.id = next_id();
    check_unique(insight.id);
    insight.tier = Tier::LTM;
    ltm_.push_back(std::move(insight));
    return ltm_.back();
}

void MemoryStore::add_sources(std::string_view id, std::span<const std::string> nodes) {
    auto* i = find_mut(id);
    if (!i)
        return;
    for (const auto& n : nodes)
        if (std::find(i->source_nodes.begin(), i->source_nodes.end(), n) == i->source_nodes.end())
            i->source_nodes.push_back(n);
}

TierChange MemoryStore::record_vote(std::string_view id, VoteDirection vote, std::vector<std::string> nodes,
                                    bool accepted, int iteration, std::string note, bool unvalidated) {
    auto* insight = find_mut(id);
    if (!insight)
        throw std::invalid_argument(fmt::format("vote on unknown insight '{}'", id));
    vote_log_.push_back({std::string(id), vote, std::move(nodes), accepted, std::move(note), iteration});
    if (!accepted)
        return TierChange::None;

    *insight = apply_vote(std::move(*insight), vote);
    if (unvalidated)
        insight->unvalidated = true;

    auto move_between = [&](std::vector<Insight>& from, std::vector<Insight>* to, Tier tier) {
        auto it = std::find_if(from.begin(), from.end(), [&](const Insight& i) { return i.id == id; });
        Insight moved = std::move(*it);
        from.erase(it);
        if (to) {
            moved.tier = tier;
            to->push_back(std::move(moved));
        }
    };

    if (insight->tier == Tier::STM) {
        if (insight->confidence >= kPromoteConfidence && insight->upvotes >= kPromoteUpvotes) {
            move_between(stm_, &ltm_, Tier::LTM);
            return TierChange::Promoted;
        }
        if (insight->confidence < kDiscardConfidence) {
            move_between(stm_, nullptr, Tier::STM);
            return TierChange::Discarded;
        }
    } else if (insight->confidence < kDemoteConfidence) {
        move_between(ltm_, &stm_, Tier::STM);
        return TierChange::Demoted;
    }
    return TierChange::None;
}

json MemoryStore::insights_to_json(const std::vector<Insight>& list) {
    json out = json::array();
    for (const auto& i : list)
        out.push_back(i.to_json());
    return out;
}

std::vector<Insight> MemoryStore::insights_from_json(const json& j) {
    if (!j.is_array())
        throw std::invalid_argument("insight document must be a JSON array");
    std::vector<Insight> out;
    for (const auto& e : j)
        out.push_back(Insight::from_json(e));
    return out;
}

void MemoryStore::load_ltm(const std::filesystem::path& path) {
    ltm_.clear();
    if (path.empty() || !std::filesystem::exists(path))
        return;
    for (auto& i : insights_from_json(json::parse(read_file(path))))
        add_ltm(std::move(i));
}

void MemoryStore::save_ltm(const std::filesystem::path& path) const {
    write_file(path, insights_to_json(ltm_).dump(2) + "\n");
}

void MemoryStore::load_stm(const std::filesystem::path& path) {
    stm_.clear();
    if (!std::filesystem::exists(path))
        return;
    for (auto& i : insights_from_json(json::parse(read_file(path)))) {
        check_unique(i.id);
        i.tier = Tier::STM;
        stm_.push_back(std::move(i));
    }
}

void MemoryStore::save_stm(const std::filesystem::path& path) const {
    write_file(path, insights_to_json(stm_).dump(2) + "\n");
}

void MemoryStore::load_vote_log(const std::filesystem::path& path) {
    vote_log_.clear();
    if (!std::filesystem::exists(path))
        return;
    std::istringstream in(read_file(path));
    for (std::string line; std::getline(in, line);)
        if (!trim(line).empty())
            vote_log_.push_back(VoteRecord::from_json(json::parse(line)));
}

void MemoryStore::save_vote_log(const std::filesystem::path& path) const {
    std::string out;
    for (const auto& r : vote_log_)
        out += r.to_json().dump() + "\n";
    write_file(path, out);
}

// --- vote validation ------------------------------------------------------------

VoteCheck validate_vote(const Insight& insight, VoteDirection vote, std::span<const EvidencePair> evidence,
                        const std::function<Objective(const std::string&)>& objective_of) {
    if (!insight.prediction)
        return VoteCheck::Unvalidated;
    const auto& p = *insight.prediction;
    const Objective objective = objective_of ? objective_of(p.metric) : Objective::Maximize;

    int considered = 0;
    int matches = 0;
    int contradictions = 0;
    for (const auto& pair : evidence) {
        auto before = pair.before.number(p.param);
        auto after = pair.after.number(p.param);
        auto mb = pair.metrics_before.find(p.metric);
        auto ma = pair.metrics_after.find(p.metric);
        if (!before || !after || mb == pair.metrics_before.end() || ma == pair.metrics_after.end())
            continue;
        const bool moved_as_predicted = p.direction == ParamDirection::Increase ? *after > *before : *after < *before;
        if (!moved_as_predicted)
            continue;
        ++considered;
        const double delta = ma->second - mb->second;
        if (delta == 0.0)
            continue;
        const bool improved = objective == Objective::Maximize ? delta > 0.0 : delta < 0.0;
        const bool as_predicted = improved == (p.effect == Effect::Improves);
        (as_predicted ? matches : contradictions) += 1;
    }
    if (considered == 0)
        return VoteCheck::NoEvidence;
    const int agreeing = vote == VoteDirection::Up ? matches : contradictions;
    return 2 * agreeing > considered ? VoteCheck::Accepted : VoteCheck::Rejected;
}

// --- retrieval ------------------------------------------------------------------

std::set<std::string> word_set(std::string_view text) {
    std::set<std::string> out;
    std::string cur;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c == '_') {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.insert(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty())
        out.insert(std::move(cur));
    return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty())
        return 0.0;
    std::size_t common = 0;
    for (const auto& w : a)
        common += b.count(w);
    return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

double JaccardSimilarity::similarity(std::string_view context, const std::set<std::string>& context_tags,
                                     const Insight& insight) const {
    auto ctx = word_set(context);
    for (const auto& t : context_tags)
        ctx.merge(word_set(t));
    auto words = word_set(insight.text);
    for (const auto& t : insight.tags)
        words.merge(word_set(t));
    return jaccard(ctx, words);
}

double retrieval_score(double similarity, double confidence, const RetrievalOptions& options) {
    if (options.combine == ScoreCombination::Blend)
        return options.blend_alpha * similarity + (1.0 - options.blend_alpha) * confidence;
    return similarity * confidence;
}

std::vector<ScoredInsight> retrieve_scored(const MemoryStore& store, std::string_view context,
                                           const std::set<std::string>& tags, int k, const RetrievalOptions& options) {
    if (k < 1)
        throw std::invalid_argument("k must be >= 1");
    static const JaccardSimilarity kDefault;
    const SimilarityProvider& sim = options.similarity ? *options.similarity : kDefault;

    std::vector<ScoredInsight> scored;
    for (const auto& insight : store.all()) {
        if (options.require_tag_overlap &&
            std::none_of(insight.tags.begin(), insight.tags.end(), [&](const auto& t) { return tags.contains(t); }))
            continue;
        scored.push_back({insight, retrieval_score(sim.similarity(context, tags, insight), insight.confidence, options)});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredInsight& a, const ScoredInsight& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.insight.id < b.insight.id;
    });
    if (scored.size() > static_cast<std::size_t>(k))
        scored.resize(static_cast<std::size_t>(k));
    return scored;
}

std::vector<Insight> retrieve(const MemoryStore& store, std::string_view context, const std::set<std::string>& tags,
                              int k, const RetrievalOptions& options) {
    std::vector<Insight> out;
    for (auto& s : retrieve_scored(store, context, tags, k, options))
        out.push_back(std::move(s.insight));
    return out;
}

} // namespace agenttune
