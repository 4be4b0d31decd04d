// SPDX-License-Identifier: Apache-2.0
#include <agenttune/prompts.hpp>

#include <fmt/format.h>

namespace agenttune {

namespace {

constexpr std::string_view kProposeText = R"(You are tuning the configuration of a storage system.

Task, parameter schema and resource envelope:
{TASK}

Current tuning node (configuration and its performance digest):
{NODE}

Tuning insights retrieved from memory, strongest first. Prefer changes that
are consistent with high-confidence insights:
{INSIGHTS}

User constraints that every candidate must respect:
{CONSTRAINTS}

Propose up to the requested number of child configurations that are likely
to improve the target metric. Only change parameters that exist in the
schema, keep values inside their ranges, and keep the sum of memory-tagged
parameters within the stated budget cap.

Answer with a JSON array of objects, each mapping parameter name to its new
value (unchanged parameters may be omitted), inside a ```json fence.
)";

constexpr std::string_view kSelectText = R"(You are choosing which tuning node to expand next.

Task:
{TASK}

Benchmarked candidate nodes and their performance digests:
{DIGESTS}

Compare the digests, weigh trade-offs against the target metric, and pick the
most promising node to explore in the next round.

Answer with JSON {"node_id": "<id>"} inside a ```json fence.
)";

constexpr std::string_view kFilterText = R"(You are screening candidate configurations before they are benchmarked.

Task:
{TASK}

Candidate configurations (index, configuration, changes relative to the parent):
{CANDIDATES}

Domain constraints supplied by the user:
{CONSTRAINTS}

Drop every candidate that would violate a constraint or is irrelevant to the
task. Answer with JSON {"keep": [<indices>]} inside a ```json fence.
)";

constexpr std::string_view kInsightsText = R"(You are summarising tuning experience into reusable insights.

Task:
{TASK}

Tuning experiences: benchmarked nodes, their digests, and the parent-child
edges of the search path:
{DIGESTS}

Insights already in memory:
{INSIGHTS}

Compare the digests across nodes and infer general rules about which
parameter changes lead to gains or losses. For each rule give a
machine-checkable prediction when possible.

Answer with a JSON array inside a ```json fence. Each element:
{"text": "...", "prediction": {"param": "...", "direction": "increase|decrease",
 "metric": "...", "effect": "improves|degrades"} or null,
 "initial_confidence": <0..1>, "source_nodes": ["<node id>", ...]}
)";

constexpr std::string_view kVoteText = R"(You are reviewing a tuning insight against new benchmark results.

Task:
{TASK}

Insight under review:
{INSIGHTS}

Observed before/after node pairs from this round:
{DIGESTS}

Upvote if the outcomes align with the insight's prediction, downvote if they
contradict it, or abstain if the evidence says nothing.

Answer with JSON {"vote": "up|down|none"} inside a ```json fence.
)";

constexpr std::string_view kExtractText = R"(You are writing an extraction spec for benchmark output.

System: {SYSTEM}

Metrics wanted (name, description, unit):
{METRICS}

Samples of the raw output:
{SAMPLES}

{FEEDBACK}
Write one rule per wanted metric. A rule reads the first line of its source
("stdout" or "log:<glob>") matching `pattern`, an ECMAScript regular
expression with exactly one capture group holding the number, and multiplies
it by `scale` to reach the wanted unit.

Answer with JSON {"rules": [{"metric": "...", "source": "stdout",
"pattern": "...", "unit": "...", "scale": 1.0}]} inside a ```json fence.
)";

constexpr std::string_view kSummarizeText = R"(Summarise this benchmark run in two sentences: key results, trade-offs and
anything anomalous.

Task:
{TASK}

Digest:
{DIGESTS}
)";

} // namespace

PromptTemplate::PromptTemplate(std::string name, std::string text, std::vector<std::string> required)
    : name_(std::move(name)), text_(std::move(text)), required_(std::move(required)) {
    for (const auto& key : required_)
        if (text_.find("{" + key + "}") == std::string::npos)
            throw PromptError(fmt::format("prompt '{}' lacks required placeholder {{{}}}", name_, key));
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
    for (const auto& key : required_)
        if (!values.contains(key))
            throw PromptError(fmt::format("prompt '{}': no value for {{{}}}", name_, key));
    std::string out;
    out.reserve(text_.size());
    std::size_t i = 0;
    while (i < text_.size()) {
        if (text_[i] == '{') {
            auto close = text_.find('}', i);
            if (close != std::string::npos) {
                auto it = values.find(text_.substr(i + 1, close - i - 1));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += text_[i++];
    }
    return out;
}

PromptSet PromptSet::defaults() {
    return {
        {"propose", std::string(kProposeText), {"NODE", "INSIGHTS", "TASK", "CONSTRAINTS"}},
        {"select", std::string(kSelectText), {"DIGESTS", "TASK"}},
        {"filter", std::string(kFilterText), {"CANDIDATES", "CONSTRAINTS", "TASK"}},
        {"insights", std::string(kInsightsText), {"DIGESTS", "INSIGHTS", "TASK"}},
        {"vote", std::string(kVoteText), {"INSIGHTS", "DIGESTS", "TASK"}},
        {"extract", std::string(kExtractText), {"SYSTEM", "METRICS", "SAMPLES", "FEEDBACK"}},
        {"summarize", std::string(kSummarizeText), {"DIGESTS", "TASK"}},
    };
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
    auto set = defaults();
    for (auto* t : {&set.propose, &set.select, &set.filter, &set.insights, &set.vote, &set.extract, &set.summarize}) {
        auto path = dir / (t->name() + ".txt");
        if (std::filesystem::is_regular_file(path))
            *t = PromptTemplate(t->name(), read_file(path), t->required());
    }
    return set;
}

std::string fenced_block(std::string_view name, const json& payload) {
    return fmt::format("```json {}\n{}\n```", name, payload.dump(2));
}

std::optional<json> find_block(std::string_view text, std::string_view name) {
    const auto header = fmt::format("```json {}\n", name);
    auto start = text.find(header);
    if (start == std::string_view::npos)
        return std::nullopt;
    start += header.size();
    auto end = text.find("\n```", start);
    if (end == std::string_view::npos)
        return std::nullopt;
    auto parsed = json::parse(text.substr(start, end - start), nullptr, false);
    if (parsed.is_discarded())
        return std::nullopt;
    return parsed;
}

std::optional<json> response_payload(std::string_view text) {
    std::string_view body = text;
    auto fence = text.find("```");
    if (fence != std::string_view::npos) {
        auto line_end = text.find('\n', fence);
        if (line_end != std::string_view::npos) {
            auto end = text.find("```", line_end + 1);
            if (end != std::string_view::npos)
                body = text.substr(line_end + 1, end - line_end - 1);
        }
    }
    auto parsed = json::parse(trim(body), nullptr, false);
    if (parsed.is_discarded())
        return std::nullopt;
    return parsed;
}

} // namespace agenttune
