// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/target.hpp>

#include <map>
#include <string>
#include <vector>

namespace agenttune {

enum class ExitStatus { Ok, Nonzero, Timeout, Killed };

std::string_view to_string(ExitStatus status);
ExitStatus exit_status_from_string(std::string_view text);

struct MonitorSample {
    double t_s = 0.0;
    double cpu_pct = 0.0;
    double mem_mb = 0.0;

    json to_json() const { return {{"t_s", t_s}, {"cpu_pct", cpu_pct}, {"mem_mb", mem_mb}}; }
};

struct RawBenchmarkOutput {
    std::string stdout_text;
    std::map<std::string, std::string> log_files; ///< relative path -> content
    std::vector<MonitorSample> monitor_samples;
    ExitStatus exit_status = ExitStatus::Ok;

    bool operator==(const RawBenchmarkOutput& other) const;
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(ValidationVerdict verdict);
    const ValidationVerdict& verdict() const { return verdict_; }

private:
    ValidationVerdict verdict_;
};

/// Input envelope for one benchmark run. Only obtainable through prepare(),
/// which runs the mechanical validation first, so an unvalidated
/// configuration can never reach the executor.
class BenchmarkTask {
public:
    static BenchmarkTask prepare(std::string node_id, Configuration config, WorkloadSpec workload,
                                 ResourceSpec resources, const ParamSchema& schema,
                                 const std::set<std::string>& blacklist = {},
                                 double cap_factor = kDefaultBudgetCapFactor);

    const std::string& node_id() const { return node_id_; }
    const Configuration& config() const { return config_; }
    const WorkloadSpec& workload() const { return workload_; }
    const ResourceSpec& resources() const { return resources_; }
    bool validated() const { return validated_; }

private:
    BenchmarkTask() = default;

    std::string node_id_;
    Configuration config_;
    WorkloadSpec workload_;
    ResourceSpec resources_;
    bool validated_ = false;
};

} // namespace agenttune
