// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/benchmark.hpp>
#include <agenttune/extraction_spec.hpp>
#include <agenttune/llm_gateway.hpp>
#include <agenttune/prompts.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace agenttune {

struct MetricValue {
    double value = 0.0;
    std::string unit;

    bool operator==(const MetricValue&) const = default;
};

struct PerformanceDigest {
    std::map<std::string, MetricValue> metrics;
    std::string summary;
    std::vector<std::string> anomalies;
    std::string source_node;
    ExitStatus exit_status = ExitStatus::Ok;

    std::optional<double> value(std::string_view metric) const;

    json to_json() const;
    static PerformanceDigest from_json(const json& j);
    bool operator==(const PerformanceDigest&) const = default;
};

struct ExtractionResult {
    std::map<std::string, MetricValue> metrics;
    std::vector<std::string> gaps;           ///< metrics whose pattern matched nothing
    std::vector<std::string> parse_failures; ///< captured text was not a number

    bool complete() const { return gaps.empty() && parse_failures.empty(); }
};

/// First match per rule, line by line, in its source. Pure.
ExtractionResult apply_spec(const ExtractionSpec& spec, const RawBenchmarkOutput& raw);

struct Plausibility {
    double min = 0.0;
    double max = 0.0;
};

std::map<std::string, Plausibility> plausibility_from(const AdapterManifest& manifest);

/// Non-finite values and values outside their plausible range.
std::vector<std::string> check_values(const std::map<std::string, MetricValue>& metrics,
                                      const std::map<std::string, Plausibility>& plausibility);

/// Template summary "<target>=<v>; exit=<status>; anomalies=<n>". Runs that
/// did not exit ok get an empty metric map. Monitor samples, when present,
/// add monitor_cpu_mean_pct / monitor_cpu_max_pct / monitor_mem_max_mb.
PerformanceDigest build_digest(const std::map<std::string, MetricValue>& metrics,
                               std::vector<std::string> anomalies, const RawBenchmarkOutput& raw,
                               const std::string& node_id, const std::string& target);

class FallbackRequired : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExtractorOptions {
    int max_synthesis_attempts = 3;
    bool llm_summary = false;
    std::size_t sample_chars = 2000;
};

struct ExtractorStats {
    int synthesis_calls = 0;
    int malformed_specs = 0;
    int anomaly_regenerations = 0;
    int fallbacks = 0;
};

/// The Extractor agent. Keeps the last working spec and reuses it for later
/// runs; a spec that leaves gaps is regenerated with the failure fed back.
/// After max_synthesis_attempts failed syntheses it switches to the
/// adapter's fixed parsers for the rest of the session.
class Extractor {
public:
    Extractor(LlmGateway& gateway, const PromptSet& prompts, const AdapterManifest& manifest, std::string target,
              ExtractorOptions options = {});

    /// Up to `max_attempts` model calls; each failure is appended to the
    /// next prompt. Throws FallbackRequired when attempts run out or the
    /// gateway refuses the call.
    ExtractionSpec synthesize_spec(std::span<const std::string> samples, std::span<const WantedMetric> wanted,
                                   std::string_view system_info, int max_attempts, std::string feedback = {});

    PerformanceDigest extract(const RawBenchmarkOutput& raw, const std::string& node_id);

    std::vector<WantedMetric> wanted_metrics() const;
    std::vector<std::string> samples_of(const RawBenchmarkOutput& raw) const;

    const std::optional<ExtractionSpec>& active_spec() const { return active_spec_; }
    bool using_fixed_parsers() const { return fixed_mode_; }
    const ExtractorStats& stats() const { return stats_; }

    json state_to_json() const;
    void restore_state(const json& j);

private:
    std::string summarize(const PerformanceDigest& digest);

    LlmGateway& gateway_;
    const PromptSet& prompts_;
    const AdapterManifest& manifest_;
    std::string target_;
    ExtractorOptions options_;
    std::map<std::string, Plausibility> plausibility_;
    std::optional<ExtractionSpec> active_spec_;
    bool fixed_mode_ = false;
    ExtractorStats stats_;
};

} // namespace agenttune
