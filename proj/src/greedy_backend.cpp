// SPDX-License-Identifier: Apache-2.0
#include <agenttune/llm_gateway.hpp>
#include <agenttune/memory.hpp>
#include <agenttune/prompts.hpp>
#include <agenttune/target.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <regex>

namespace agenttune {

namespace {

json need_block(const std::string& prompt, std::string_view name) {
    auto b = find_block(prompt, name);
    if (!b)
        throw MalformedResponse(fmt::format("greedy backend: prompt has no '{}' block", name));
    return *b;
}

struct Move {
    std::string param;
    bool increase = true;
    double factor = 2.0;
};

struct ProposalContext {
    ParamSchema schema;
    double cap = 0.0;
};

bool memory_tagged(const ParamSpec& p) {
    return p.tags.contains(std::string(kMemoryTag));
}

// Applies `move` to `config` in place. Returns false when the parameter
// cannot move (already at its bound or the memory cap).
bool apply_move(Configuration& config, const Move& move, const ProposalContext& ctx) {
    const auto* p = ctx.schema.find(move.param);
    if (!p)
        return false;
    const Scalar* current = config.get(p->name);
    if (!current)
        return false;

    if (p->type == ParamType::Enum) {
        auto it = std::find(p->allowed.begin(), p->allowed.end(), scalar_to_string(*current));
        if (p->allowed.size() < 2)
            return false;
        std::size_t idx = it == p->allowed.end() ? 0 : static_cast<std::size_t>(it - p->allowed.begin()) + 1;
        config.values[p->name] = p->allowed[idx % p->allowed.size()];
        return true;
    }
    if (p->type == ParamType::Boolean) {
        config.values[p->name] = !std::get<bool>(*current);
        return true;
    }

    const double v = *scalar_as_number(*current);
    double next = move.increase ? (v == 0.0 ? 1.0 : v * move.factor) : v / move.factor;
    double hi = p->max;
    if (memory_tagged(*p)) {
        double others = 0.0;
        for (const auto& q : ctx.schema.params())
            if (q.name != p->name && memory_tagged(q))
                others += config.number(q.name).value_or(0.0);
        hi = std::min(hi, ctx.cap - others);
    }
    next = std::clamp(next, p->min, std::max(p->min, hi));
    if (p->type == ParamType::Integer)
        next = move.increase ? std::floor(next) : std::ceil(next);
    if (next == v)
        return false;
    if (p->type == ParamType::Integer)
        config.values[p->name] = static_cast<std::int64_t>(next);
    else
        config.values[p->name] = next;
    return true;
}

std::string propose(const std::string& prompt) {
    const json task = need_block(prompt, "task");
    const json node = need_block(prompt, "node");
    const json insights = need_block(prompt, "insights");

    ProposalContext ctx{ParamSchema::from_json(task.at("schema")), task.at("budget_cap_mb").get<double>()};
    const std::string target = task.at("target").get<std::string>();
    const int branching = task.value("branching", 3);
    const Configuration base = ctx.schema.complete(Configuration::from_json(node.at("config")));

    std::vector<Move> guided;
    std::set<std::string> covered;
    for (const auto& ij : insights) {
        auto in = Insight::from_json(ij);
        if (!in.prediction || in.prediction->metric != target)
            continue;
        const auto* p = ctx.schema.find(in.prediction->param);
        if (!p || !p->numeric() || covered.contains(p->name))
            continue;
        const bool improves = in.prediction->effect == Effect::Improves;
        const bool up = (in.prediction->direction == ParamDirection::Increase) == improves;
        guided.push_back({p->name, up, GreedyBackend::step_factor(in.confidence)});
        covered.insert(p->name);
    }
    std::vector<Move> explore;
    for (const auto& p : ctx.schema.params())
        if (!covered.contains(p.name))
            explore.push_back({p.name, true, 2.0});

    std::vector<Configuration> children;
    auto push_unique = [&](Configuration c) {
        if (c == base || std::find(children.begin(), children.end(), c) != children.end())
            return;
        children.push_back(std::move(c));
    };

    Configuration joint = base;
    bool moved = false;
    for (const auto& m : guided.empty() ? explore : guided)
        moved |= apply_move(joint, m, ctx);
    if (moved)
        push_unique(joint);
    for (const auto& m : explore) {
        if (static_cast<int>(children.size()) >= branching)
            break;
        Configuration single = base;
        if (apply_move(single, m, ctx))
            push_unique(std::move(single));
    }
    if (static_cast<int>(children.size()) > branching)
        children.resize(static_cast<std::size_t>(branching));

    json out = json::array();
    for (const auto& c : children)
        out.push_back(c.to_json());
    return fmt::format("```json\n{}\n```", out.dump(2));
}

std::optional<double> target_value(const json& node, const std::string& target) {
    if (!node.contains("digest") || node.at("digest").is_null())
        return std::nullopt;
    const auto& m = node.at("digest").at("metrics");
    if (!m.contains(target))
        return std::nullopt;
    return m.at(target).at("value").get<double>();
}

std::string select(const std::string& prompt) {
    const json task = need_block(prompt, "task");
    const json cands = need_block(prompt, "candidates");
    const std::string target = task.at("target").get<std::string>();
    const Objective obj = objective_from_string(task.at("objective").get<std::string>());
    std::string best;
    double best_v = 0.0;
    for (const auto& c : cands) {
        auto v = target_value(c, target);
        if (!v)
            continue;
        const auto id = c.at("node_id").get<std::string>();
        if (best.empty() || better(*v, best_v, obj) || (*v == best_v && id < best)) {
            best = id;
            best_v = *v;
        }
    }
    return json{{"node_id", best}}.dump();
}

std::set<std::string> constraint_words(std::string_view text) {
    static const std::set<std::string> kStop = {"the", "and", "not", "for", "with", "any", "must", "never",
                                                "keep", "change", "changes", "don", "should", "all", "from",
                                                "above", "below", "under", "over", "than", "this", "that"};
    std::set<std::string> out;
    for (const auto& w : word_set(text)) {
        for (const auto& part : word_set(std::regex_replace(w, std::regex("_"), " ")))
            if (part.size() >= 3 && !kStop.contains(part))
                out.insert(part);
        if (w.size() >= 3 && !kStop.contains(w))
            out.insert(w);
    }
    return out;
}

std::string filter(const std::string& prompt) {
    const json task = need_block(prompt, "task");
    const json cands = need_block(prompt, "candidates");
    const json constraints = need_block(prompt, "constraints");
    const auto schema = ParamSchema::from_json(task.at("schema"));
    std::set<std::string> banned;
    for (const auto& c : constraints)
        banned.merge(constraint_words(c.get<std::string>()));

    json keep = json::array();
    for (const auto& c : cands) {
        bool ok = true;
        for (const auto& [name, _] : c.at("changes").items()) {
            auto words = constraint_words(name);
            if (const auto* p = schema.find(name))
                for (const auto& t : p->tags)
                    words.merge(constraint_words(t));
            if (std::any_of(words.begin(), words.end(), [&](const auto& w) { return banned.contains(w); }))
                ok = false;
        }
        if (ok)
            keep.push_back(c.at("index"));
    }
    return json{{"keep", keep}}.dump();
}

std::string generate_insights(const std::string& prompt) {
    const json task = need_block(prompt, "task");
    const json exp = need_block(prompt, "experiences");
    const auto schema = ParamSchema::from_json(task.at("schema"));
    const std::string target = task.at("target").get<std::string>();
    const Objective obj = objective_from_string(task.at("objective").get<std::string>());

    std::map<std::string, const json*> by_id;
    for (const auto& n : exp.at("nodes"))
        by_id[n.at("node_id").get<std::string>()] = &n;

    json out = json::array();
    std::vector<std::pair<Prediction, std::size_t>> seen;
    for (const auto& e : exp.at("edges")) {
        auto a = by_id.find(e.at(0).get<std::string>());
        auto b = by_id.find(e.at(1).get<std::string>());
        if (a == by_id.end() || b == by_id.end())
            continue;
        const auto& ma = a->second->at("metrics");
        const auto& mb = b->second->at("metrics");
        if (!ma.contains(target) || !mb.contains(target))
            continue;
        auto ca = schema.complete(Configuration::from_json(a->second->at("config")));
        auto cb = schema.complete(Configuration::from_json(b->second->at("config")));
        auto changed = Configuration::diff(ca, cb);
        if (changed.size() != 1)
            continue;
        const auto& param = *changed.begin();
        const auto* spec = schema.find(param);
        if (!spec || !spec->numeric())
            continue;
        const double dp = *cb.number(param) - *ca.number(param);
        const double dm = mb.at(target).get<double>() - ma.at(target).get<double>();
        if (dp == 0.0 || dm == 0.0)
            continue;
        const bool improved = obj == Objective::Maximize ? dm > 0.0 : dm < 0.0;
        Prediction p{param, dp > 0.0 ? ParamDirection::Increase : ParamDirection::Decrease, target,
                     improved ? Effect::Improves : Effect::Degrades};
        p = p.normalized();
        const std::string src_a = e.at(0).get<std::string>();
        const std::string src_b = e.at(1).get<std::string>();
        auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& s) { return s.first == p; });
        if (it != seen.end()) {
            auto& sources = out[it->second]["source_nodes"];
            for (const auto& s : {src_a, src_b})
                if (std::find(sources.begin(), sources.end(), s) == sources.end())
                    sources.push_back(s);
            continue;
        }
        seen.emplace_back(p, out.size());
        out.push_back({{"text", fmt::format("Increasing {} {} {}", param, to_string(p.effect), target)},
                       {"prediction", p.to_json()},
                       {"initial_confidence", 0.5},
                       {"source_nodes", {src_a, src_b}}});
    }
    return fmt::format("```json\n{}\n```", out.dump(2));
}

std::string vote(const std::string& prompt) {
    const json task = need_block(prompt, "task");
    const json insight = need_block(prompt, "insight");
    const json evidence = need_block(prompt, "evidence");
    const Objective obj = objective_from_string(task.at("objective").get<std::string>());
    const std::string target = task.at("target").get<std::string>();
    auto in = Insight::from_json(insight);
    if (!in.prediction)
        return json{{"vote", "none"}}.dump();
    const auto p = in.prediction->normalized();
    const Objective metric_obj = p.metric == target ? obj : Objective::Maximize;

    int match = 0;
    int contra = 0;
    for (const auto& e : evidence) {
        const auto& before = e.at("before");
        const auto& after = e.at("after");
        const auto& cb = before.at("config");
        const auto& ca = after.at("config");
        if (!cb.contains(p.param) || !ca.contains(p.param) || !cb.at(p.param).is_number() ||
            !ca.at(p.param).is_number())
            continue;
        if (!before.at("metrics").contains(p.metric) || !after.at("metrics").contains(p.metric))
            continue;
        const double dp = ca.at(p.param).get<double>() - cb.at(p.param).get<double>();
        const double dm = after.at("metrics").at(p.metric).get<double>() - before.at("metrics").at(p.metric).get<double>();
        if (dp == 0.0 || dm == 0.0)
            continue;
        const bool improved = metric_obj == Objective::Maximize ? dm > 0.0 : dm < 0.0;
        const bool increasing_improves = (dp > 0.0) == improved;
        (increasing_improves == (p.effect == Effect::Improves) ? match : contra) += 1;
    }
    const char* v = match > contra ? "up" : contra > match ? "down" : "none";
    return json{{"vote", v}}.dump();
}

std::string synthesize(const std::string& prompt) {
    const json metrics = need_block(prompt, "metrics");
    const json samples = need_block(prompt, "samples");
    const std::string number = R"(([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?))";
    json rules = json::array();
    for (const auto& m : metrics) {
        const auto name = m.at("name").get<std::string>();
        std::string escaped;
        for (char c : name) {
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_')
                escaped += '\\';
            escaped += c;
        }
        const std::string pattern = escaped + R"(\s*[=:]\s*)" + number;
        const std::regex re(pattern);
        for (const auto& s : samples) {
            auto text = s.get<std::string>();
            std::string source = "stdout";
            if (text.starts_with("[log:")) {
                auto close = text.find("]\n");
                if (close == std::string::npos)
                    continue;
                source = "log:" + text.substr(5, close - 5);
                text = text.substr(close + 2);
            }
            if (std::regex_search(text, re)) {
                rules.push_back(
                    {{"metric", name}, {"source", source}, {"pattern", pattern}, {"unit", m.value("unit", "")}, {"scale", 1.0}});
                break;
            }
        }
    }
    return fmt::format("```json\n{}\n```", json{{"rules", rules}}.dump(2));
}

std::string summarize(const std::string& prompt) {
    const json digest = need_block(prompt, "digest");
    return digest.value("summary", std::string());
}

} // namespace

double GreedyBackend::step_factor(double confidence) {
    return confidence >= 0.8 ? 4.0 : 2.0;
}

LlmResponse GreedyBackend::complete(const LlmRequest& request) {
    std::string text;
    try {
        switch (request.kind) {
        case RequestKind::ProposeChildren:
            text = propose(request.prompt);
            break;
        case RequestKind::SelectNode:
            text = select(request.prompt);
            break;
        case RequestKind::FilterConstraints:
            text = filter(request.prompt);
            break;
        case RequestKind::GenerateInsights:
            text = generate_insights(request.prompt);
            break;
        case RequestKind::VoteInsights:
            text = vote(request.prompt);
            break;
        case RequestKind::SynthesizeExtraction:
            text = synthesize(request.prompt);
            break;
        case RequestKind::SummarizeDigest:
            text = summarize(request.prompt);
            break;
        }
    } catch (const LlmError&) {
        throw;
    } catch (const std::exception& e) {
        throw MalformedResponse(fmt::format("greedy backend cannot read the prompt context: {}", e.what()));
    }
    if (text.empty())
        text = "{}";
    return {text, estimate_tokens(request.prompt), estimate_tokens(text), id()};
}

} // namespace agenttune
