// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/benchmark.hpp>
#include <agenttune/sandbox.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace agenttune {

/// Result of render_and_launch: either an already-finished in-process run or
/// a live sandboxed process for the executor to monitor.
struct LaunchHandle {
    std::optional<RawBenchmarkOutput> completed;
    std::unique_ptr<SandboxProcess> process;
    std::vector<std::string> command_line;

    bool finished() const { return completed.has_value(); }
};

struct LaunchContext {
    std::filesystem::path working_dir;
    Sandbox* sandbox = nullptr;
};

class AdapterError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TargetAdapter {
public:
    virtual ~TargetAdapter() = default;

    virtual const AdapterManifest& manifest() const = 0;
    const ParamSchema& schema() const { return manifest().schema; }

    /// Writes the configuration file into ctx.working_dir and starts the
    /// benchmark. Throws LaunchFailure.
    virtual LaunchHandle render_and_launch(const Configuration& config, const WorkloadSpec& workload,
                                           const ResourceSpec& resources, const LaunchContext& ctx) const = 0;
};

// --- SimKV ------------------------------------------------------------------

class InvalidConfig : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SimKvResult {
    double throughput_kops = 0.0;
    double p99_us = 0.0;
};

/// Closed-form simulated key-value store. Pure; no noise.
SimKvResult simkv_evaluate(const Configuration& config, const WorkloadSpec& workload,
                           const ResourceSpec& resources);

AdapterManifest simkv_manifest();

class SimKvAdapter : public TargetAdapter {
public:
    SimKvAdapter();
    const AdapterManifest& manifest() const override { return manifest_; }
    LaunchHandle render_and_launch(const Configuration& config, const WorkloadSpec& workload,
                                   const ResourceSpec& resources, const LaunchContext& ctx) const override;

private:
    AdapterManifest manifest_;
};

// --- external process ---------------------------------------------------------

/// Placeholder values for templates: {file}, {dir}, {workload}, {op_count},
/// {write_fraction}, {cpu_cores}, {memory_mb}, {time_limit_s}, workload
/// extras, and every configuration parameter by name.
std::map<std::string, std::string> template_values(const Configuration& config, const WorkloadSpec& workload,
                                                   const ResourceSpec& resources,
                                                   const std::filesystem::path& config_file,
                                                   const std::filesystem::path& dir);

/// Substitutes {name} placeholders; "{{" and "}}" are literal braces.
/// Throws LaunchFailure on an unknown placeholder.
std::string render_template(std::string_view text, const std::map<std::string, std::string>& values);

/// Whitespace split honoring single and double quotes.
std::vector<std::string> split_command(std::string_view command);

class ExternalProcessAdapter : public TargetAdapter {
public:
    explicit ExternalProcessAdapter(AdapterManifest manifest);
    const AdapterManifest& manifest() const override { return manifest_; }
    LaunchHandle render_and_launch(const Configuration& config, const WorkloadSpec& workload,
                                   const ResourceSpec& resources, const LaunchContext& ctx) const override;

private:
    AdapterManifest manifest_;
};

/// "simkv" resolves to the built-in; anything else is read as a manifest
/// path. Throws AdapterError.
std::unique_ptr<TargetAdapter> resolve_adapter(const std::string& target);

} // namespace agenttune
