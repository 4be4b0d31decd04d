// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/adapter.hpp>
#include <agenttune/llm_gateway.hpp>
#include <agenttune/memory.hpp>
#include <agenttune/metrics.hpp>
#include <agenttune/target.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace agenttune {

/// Bad session configuration (parse error, out-of-range knob).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adapter or backend cannot be constructed.
class SetupError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SessionConfig {
    std::string target = "simkv"; ///< "simkv" or a path to an adapter manifest
    WorkloadSpec workload;
    ResourceSpec resources;
    std::string metric = "throughput_kops";
    std::optional<Objective> objective; ///< manifest direction when unset
    int branching = 3;
    int top_k = 8;
    std::int64_t token_budget = 500000;
    double time_budget_s = 3600.0;
    int max_iterations = 20;
    std::set<std::string> blacklist;
    std::vector<std::string> constraints;
    double budget_cap_factor = kDefaultBudgetCapFactor;
    std::uint64_t seed = 0;
    std::string backend = "greedy-mock";
    std::string model = "default";
    std::string transcript; ///< recorded transcript for the scripted backend
    int parallelism = 1;
    std::string ltm_path;   ///< shared long-term memory document; empty disables
    std::string prompt_dir; ///< optional prompt overrides
    bool llm_summary = false;
    ScoreCombination retrieval_combine = ScoreCombination::Product;
    double retrieval_blend_alpha = 0.5;
    bool retrieval_require_tags = false;

    /// Throws ConfigError.
    void validate() const;
    json to_json() const;
    /// Missing keys keep their defaults. Throws ConfigError.
    static SessionConfig from_json(const json& j);
    static SessionConfig load(const std::filesystem::path& path);
};

struct SessionReport {
    TuningMetrics metrics;
    Configuration best_config;
    double best_value = 0.0;
    std::string best_node;
    double baseline = 0.0;
    int iterations = 0;
    std::string stop_reason;
    std::int64_t total_tokens = 0;
    int error_count = 0;
    std::vector<IterationRow> per_iteration;

    json to_json() const;
    static SessionReport from_json(const json& j);
    /// Exact text written to report.json.
    std::string serialize() const;
};

struct RunOptions {
    /// Return after this many iterations without finishing the session.
    std::optional<int> stop_after;
    /// Replay aid: end with `forced_reason` once this many iterations are done.
    std::optional<int> forced_stop;
    std::string forced_reason;
    bool disable_time_budget = false;
    std::function<void(const IterationRow&)> on_iteration;
    std::shared_ptr<Sandbox> sandbox;
};

struct SessionOutcome {
    std::optional<SessionReport> report; ///< empty when paused
    bool paused = false;
    std::filesystem::path dir;
};

/// Builds the backend named in `config` ("greedy-mock", "scripted", "http").
/// Throws SetupError.
std::shared_ptr<LlmBackend> make_backend(const SessionConfig& config);

/// Runs a new session in `dir` (created; must not already hold a session).
SessionOutcome run_session(const SessionConfig& config, std::shared_ptr<LlmBackend> backend,
                           const std::filesystem::path& dir, const RunOptions& options = {});

/// Continues a paused or interrupted session from its last checkpoint.
SessionOutcome resume_session(const std::filesystem::path& dir, std::shared_ptr<LlmBackend> backend,
                              const RunOptions& options = {});

struct ReplayResult {
    SessionReport report;
    std::string serialized;
    bool matches = false; ///< identical to the stored report.json
};

/// Re-runs a recorded session offline against its own transcript, in a
/// scratch directory. Throws TranscriptMismatch when the request sequence
/// diverges or entries are left over.
ReplayResult replay_session(const std::filesystem::path& dir);

} // namespace agenttune
