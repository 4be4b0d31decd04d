// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/common.hpp>

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace agenttune {

enum class RequestKind {
    ProposeChildren,
    SelectNode,
    SynthesizeExtraction,
    GenerateInsights,
    VoteInsights,
    FilterConstraints,
    SummarizeDigest,
};

std::string_view to_string(RequestKind kind);
RequestKind request_kind_from_string(std::string_view text);

/// Agent a request is billed to in the token ledger.
std::string_view agent_for(RequestKind kind);

struct LlmRequest {
    RequestKind kind = RequestKind::ProposeChildren;
    std::string prompt;
    int max_output = 1024;
    double temperature = 0.0;
};

struct LlmResponse {
    std::string text;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    std::string backend_id;
};

class LlmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Network or provider failure. The gateway retries these.
class TransportError : public LlmError {
public:
    using LlmError::LlmError;
};

/// Response text does not follow the schema its request kind expects.
class MalformedResponse : public LlmError {
public:
    using LlmError::LlmError;
};

class BudgetExceeded : public LlmError {
public:
    using LlmError::LlmError;
};

/// Scripted replay diverged from the recorded request sequence. Deliberately
/// not an LlmError: agents must not absorb it into their fallbacks.
class TranscriptMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// ceil(chars / 4), the offline accounting rule.
std::int64_t estimate_tokens(std::string_view text);

class TokenLedger {
public:
    void record(std::string_view agent, int iteration, std::int64_t tokens);

    std::int64_t total() const { return total_; }
    const std::map<std::string, std::int64_t>& per_agent() const { return per_agent_; }
    std::vector<std::pair<int, std::int64_t>> per_iteration() const;

    /// Tokens spent in iterations <= `iteration`.
    std::int64_t cumulative_through(int iteration) const;

    json to_json() const;
    static TokenLedger from_json(const json& j);

private:
    std::map<std::string, std::int64_t> per_agent_;
    std::map<int, std::int64_t> per_iteration_;
    std::int64_t total_ = 0;
};

struct TranscriptEntry {
    RequestKind kind = RequestKind::ProposeChildren;
    std::string text;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
};

json transcript_to_json(const std::vector<TranscriptEntry>& entries);
std::vector<TranscriptEntry> transcript_from_json(const json& j);

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual LlmResponse complete(const LlmRequest& request) = 0;
    virtual std::string id() const = 0;
};

struct GatewayOptions {
    std::optional<std::int64_t> token_budget;
    int max_attempts = 3; ///< transport attempts per request, first try included
    std::chrono::milliseconds retry_backoff{200};
};

/// Every agent's model call funnels through here so that token usage and the
/// replay transcript stay complete.
class LlmGateway {
public:
    LlmGateway(std::shared_ptr<LlmBackend> backend, GatewayOptions options = {});

    LlmResponse complete(const LlmRequest& request);

    void set_iteration(int iteration);
    int iteration() const;

    TokenLedger ledger() const;
    std::int64_t total_tokens() const;
    std::vector<TranscriptEntry> transcript() const;

    /// Reinstates accounting state from a checkpoint.
    void restore(TokenLedger ledger, std::vector<TranscriptEntry> transcript);

    const LlmBackend& backend() const { return *backend_; }

private:
    std::shared_ptr<LlmBackend> backend_;
    GatewayOptions options_;
    mutable std::mutex mutex_;
    TokenLedger ledger_;
    std::vector<TranscriptEntry> transcript_;
    int iteration_ = 0;
};

/// Replays a recorded transcript. Entries are matched by (kind, sequence
/// number within that kind), so prompt wording may change freely.
class ScriptedBackend : public LlmBackend {
public:
    explicit ScriptedBackend(std::vector<TranscriptEntry> entries);

    LlmResponse complete(const LlmRequest& request) override;
    std::string id() const override { return "scripted"; }

    /// Skips entries already consumed before a checkpoint.
    void fast_forward(const std::vector<TranscriptEntry>& consumed);
    bool fully_consumed() const;

private:
    std::vector<TranscriptEntry> entries_;
    std::map<RequestKind, std::vector<std::size_t>> by_kind_;
    mutable std::mutex mutex_;
    std::map<RequestKind, std::size_t> cursor_;
};

/// Deterministic heuristic stand-in for a model. Reads the structured context
/// blocks embedded in each prompt and answers greedily.
class GreedyBackend : public LlmBackend {
public:
    LlmResponse complete(const LlmRequest& request) override;
    std::string id() const override { return "greedy-mock"; }

    /// Step multiplier applied to a move backed by an insight of this confidence.
    static double step_factor(double confidence);
};

struct HttpBackendOptions {
    std::string url;
    std::string api_key;
    std::string model = "default";
    std::chrono::seconds timeout{120};
};

/// JSON-over-HTTP backend: POSTs {model, messages, max_tokens, temperature}
/// and reads {text, usage.tokens_in, usage.tokens_out}.
class HttpBackend : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendOptions options);

    /// Reads AGENTTUNE_LLM_URL / AGENTTUNE_LLM_KEY. Throws LlmError if the URL is unset.
    static HttpBackendOptions options_from_env(std::string model = "default");

    LlmResponse complete(const LlmRequest& request) override;
    std::string id() const override { return "http"; }

    static json request_body(const HttpBackendOptions& options, const LlmRequest& request);
    static LlmResponse parse_response_body(std::string_view body);

private:
    HttpBackendOptions options_;
};

} // namespace agenttune
