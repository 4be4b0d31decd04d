// SPDX-License-Identifier: Apache-2.0
#include <agenttune/llm_gateway.hpp>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <array>
#include <thread>

namespace agenttune {

namespace {

struct KindName {
    RequestKind kind;
    std::string_view name;
    std::string_view agent;
};

constexpr std::array<KindName, 7> kKinds{{
    {RequestKind::ProposeChildren, "ProposeChildren", "searcher"},
    {RequestKind::SelectNode, "SelectNode", "searcher"},
    {RequestKind::SynthesizeExtraction, "SynthesizeExtraction", "extractor"},
    {RequestKind::GenerateInsights, "GenerateInsights", "reflector"},
    {RequestKind::VoteInsights, "VoteInsights", "reflector"},
    {RequestKind::FilterConstraints, "FilterConstraints", "searcher"},
    {RequestKind::SummarizeDigest, "SummarizeDigest", "extractor"},
}};

} // namespace

std::string_view to_string(RequestKind kind) {
    for (const auto& k : kKinds)
        if (k.kind == kind)
            return k.name;
    return "Unknown";
}

RequestKind request_kind_from_string(std::string_view text) {
    for (const auto& k : kKinds)
        if (k.name == text)
            return k.kind;
    throw std::invalid_argument(fmt::format("unknown request kind '{}'", text));
}

std::string_view agent_for(RequestKind kind) {
    for (const auto& k : kKinds)
        if (k.kind == kind)
            return k.agent;
    return "unknown";
}

std::int64_t estimate_tokens(std::string_view text) {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
}

// --- TokenLedger ----------------------------------------------------------

void TokenLedger::record(std::string_view agent, int iteration, std::int64_t tokens) {
    if (tokens < 0)
        throw std::invalid_argument("negative token count");
    per_agent_[std::string(agent)] += tokens;
    per_iteration_[iteration] += tokens;
    total_ += tokens;
}

std::vector<std::pair<int, std::int64_t>> TokenLedger::per_iteration() const {
    return {per_iteration_.begin(), per_iteration_.end()};
}

std::int64_t TokenLedger::cumulative_through(int iteration) const {
    std::int64_t sum = 0;
    for (const auto& [it, tokens] : per_iteration_) {
        if (it > iteration)
            break;
        sum += tokens;
    }
    return sum;
}

json TokenLedger::to_json() const {
    json iters = json::array();
    for (const auto& [it, tokens] : per_iteration_)
        iters.push_back({{"iteration", it}, {"tokens", tokens}});
    return {{"total", total_}, {"per_agent", per_agent_}, {"per_iteration", iters}};
}

TokenLedger TokenLedger::from_json(const json& j) {
    TokenLedger ledger;
    for (const auto& [agent, tokens] : j.at("per_agent").items())
        ledger.per_agent_[agent] = tokens.get<std::int64_t>();
    for (const auto& row : j.at("per_iteration"))
        ledger.per_iteration_[row.at("iteration").get<int>()] = row.at("tokens").get<std::int64_t>();
    ledger.total_ = j.at("total").get<std::int64_t>();
    std::int64_t sum = 0;
    for (const auto& [it, tokens] : ledger.per_iteration_)
        sum += tokens;
    if (sum != ledger.total_)
        throw std::invalid_argument("ledger total does not match per-iteration sum");
    return ledger;
}

json transcript_to_json(const std::vector<TranscriptEntry>& entries) {
    json out = json::array();
    for (const auto& e : entries)
        out.push_back({{"kind", to_string(e.kind)},
                       {"text", e.text},
                       {"tokens_in", e.tokens_in},
                       {"tokens_out", e.tokens_out}});
    return out;
}

std::vector<TranscriptEntry> transcript_from_json(const json& j) {
    if (!j.is_array())
        throw std::invalid_argument("transcript must be a JSON array");
    std::vector<TranscriptEntry> out;
    out.reserve(j.size());
    for (const auto& e : j)
        out.push_back({request_kind_from_string(e.at("kind").get<std::string>()),
                       e.at("text").get<std::string>(), e.at("tokens_in").get<std::int64_t>(),
                       e.at("tokens_out").get<std::int64_t>()});
    return out;
}

// --- LlmGateway -------------------------------------------------------------

LlmGateway::LlmGateway(std::shared_ptr<LlmBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(options) {
    if (!backend_)
        throw std::invalid_argument("gateway needs a backend");
}

LlmResponse LlmGateway::complete(const LlmRequest& request) {
    int iteration = 0;
    {
        std::lock_guard lock(mutex_);
        iteration = iteration_;
        if (options_.token_budget) {
            auto budget = *options_.token_budget;
            if (ledger_.total() >= budget || ledger_.total() + estimate_tokens(request.prompt) > budget)
                throw BudgetExceeded(fmt::format("token budget {} reached (spent {})", budget,
                                                 ledger_.total()));
        }
    }
    if (request.prompt.empty())
        throw std::invalid_argument("empty prompt");

    LlmResponse response;
    for (int attempt = 0;; ++attempt) {
        try {
            response = backend_->complete(request);
            break;
        } catch (const TransportError& e) {
            if (attempt + 1 >= options_.max_attempts)
                throw;
            spdlog::warn("{} transport error (attempt {}): {}", to_string(request.kind), attempt + 1,
                         e.what());
            std::this_thread::sleep_for(options_.retry_backoff);
        }
    }
    if (response.tokens_in < 0 || response.tokens_out < 0 ||
        response.tokens_in + response.tokens_out <= 0)
        throw MalformedResponse("backend reported no token usage");

    std::lock_guard lock(mutex_);
    ledger_.record(agent_for(request.kind), iteration, response.tokens_in + response.tokens_out);
    transcript_.push_back({request.kind, response.text, response.tokens_in, response.tokens_out});
    return response;
}

void LlmGateway::set_iteration(int iteration) {
    std::lock_guard lock(mutex_);
    iteration_ = iteration;
}

int LlmGateway::iteration() const {
    std::lock_guard lock(mutex_);
    return iteration_;
}

TokenLedger LlmGateway::ledger() const {
    std::lock_guard lock(mutex_);
    return ledger_;
}

std::int64_t LlmGateway::total_tokens() const {
    std::lock_guard lock(mutex_);
    return ledger_.total();
}

std::vector<TranscriptEntry> LlmGateway::transcript() const {
    std::lock_guard lock(mutex_);
    return transcript_;
}

void LlmGateway::restore(TokenLedger ledger, std::vector<TranscriptEntry> transcript) {
    std::lock_guard lock(mutex_);
    ledger_ = std::move(ledger);
    transcript_ = std::move(transcript);
}

// --- ScriptedBackend ------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<TranscriptEntry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i)
        by_kind_[entries_[i].kind].push_back(i);
}

LlmResponse ScriptedBackend::complete(const LlmRequest& request) {
    std::lock_guard lock(mutex_);
    auto& cursor = cursor_[request.kind];
    auto it = by_kind_.find(request.kind);
    if (it == by_kind_.end() || cursor >= it->second.size())
        throw TranscriptMismatch(fmt::format("transcript has no entry #{} for {}", cursor + 1,
                                             to_string(request.kind)));
    const auto& entry = entries_[it->second[cursor++]];
    return {entry.text, entry.tokens_in, entry.tokens_out, id()};
}

void ScriptedBackend::fast_forward(const std::vector<TranscriptEntry>& consumed) {
    std::lock_guard lock(mutex_);
    std::map<RequestKind, std::size_t> counts;
    for (const auto& e : consumed)
        ++counts[e.kind];
    for (const auto& [kind, n] : counts) {
        auto available = by_kind_.count(kind) ? by_kind_[kind].size() : 0;
        if (n > available)
            throw TranscriptMismatch(
                fmt::format("checkpoint consumed {} {} entries, transcript has {}", n, to_string(kind),
                            available));
        cursor_[kind] = n;
    }
}

bool ScriptedBackend::fully_consumed() const {
    std::lock_guard lock(mutex_);
    for (const auto& [kind, list] : by_kind_) {
        auto it = cursor_.find(kind);
        if (it == cursor_.end() || it->second < list.size())
            return false;
    }
    return true;
}

} // namespace agenttune
