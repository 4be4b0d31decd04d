// SPDX-License-Identifier: Apache-2.0
// Shared builders for agent-level tests.
#pragma once

#include <agenttune/adapter.hpp>
#include <agenttune/searcher.hpp>

#include <string>

namespace fixture {

using namespace agenttune;

inline TuningTask simkv_task() {
    SimKvAdapter adapter;
    TuningTask t;
    t.system = "simkv";
    t.system_info = adapter.manifest().system_info;
    t.schema = adapter.schema();
    t.resources = {2, 1024, 60};
    t.target = "throughput_kops";
    t.metric_objectives = {{"p99_us", Objective::Minimize}};
    return t;
}

inline Configuration simkv_config(std::int64_t wb, std::int64_t bc = 8, std::int64_t bg = 2,
                                  std::string codec = "none") {
    Configuration c;
    c.values = {{"write_buffer_mb", wb},
                {"block_cache_mb", bc},
                {"background_jobs", bg},
                {"compression", std::move(codec)}};
    return c;
}

inline PerformanceDigest digest(double throughput, const std::string& node = {}) {
    PerformanceDigest d;
    d.metrics["throughput_kops"] = {throughput, "kops/s"};
    d.metrics["p99_us"] = {200000.0 / (throughput + 50.0), "us"};
    d.summary = "throughput " + format_double(throughput);
    d.source_node = node;
    return d;
}

inline PerformanceDigest failed_digest() {
    PerformanceDigest d;
    d.exit_status = ExitStatus::Nonzero;
    d.summary = "run failed";
    return d;
}

inline GatewayOptions fast_gateway(std::optional<std::int64_t> budget = std::nullopt) {
    GatewayOptions o;
    o.token_budget = budget;
    o.retry_backoff = std::chrono::milliseconds(0);
    return o;
}

inline TranscriptEntry entry(RequestKind kind, std::string text) {
    return {kind, std::move(text), 100, 50};
}

} // namespace fixture
