// SPDX-License-Identifier: Apache-2.0
#include <agenttune/benchmark.hpp>

#include <fmt/format.h>

namespace agenttune {

std::string_view to_string(ExitStatus status) {
    switch (status) {
    case ExitStatus::Ok:
        return "ok";
    case ExitStatus::Nonzero:
        return "nonzero";
    case ExitStatus::Timeout:
        return "timeout";
    case ExitStatus::Killed:
        return "killed";
    }
    return "unknown";
}

ExitStatus exit_status_from_string(std::string_view text) {
    for (auto s : {ExitStatus::Ok, ExitStatus::Nonzero, ExitStatus::Timeout, ExitStatus::Killed})
        if (to_string(s) == text)
            return s;
    throw std::invalid_argument(fmt::format("unknown exit status '{}'", text));
}

bool RawBenchmarkOutput::operator==(const RawBenchmarkOutput& other) const {
    if (stdout_text != other.stdout_text || log_files != other.log_files || exit_status != other.exit_status ||
        monitor_samples.size() != other.monitor_samples.size())
        return false;
    for (std::size_t i = 0; i < monitor_samples.size(); ++i) {
        const auto& a = monitor_samples[i];
        const auto& b = other.monitor_samples[i];
        if (a.t_s != b.t_s || a.cpu_pct != b.cpu_pct || a.mem_mb != b.mem_mb)
            return false;
    }
    return true;
}

ValidationError::ValidationError(ValidationVerdict verdict)
    : std::runtime_error("configuration rejected: " + verdict.describe()), verdict_(std::move(verdict)) {}

BenchmarkTask BenchmarkTask::prepare(std::string node_id, Configuration config, WorkloadSpec workload,
                                     ResourceSpec resources, const ParamSchema& schema,
                                     const std::set<std::string>& blacklist, double cap_factor) {
    workload.validate();
    resources.validate();
    auto verdict = validate_config(config, schema, resources, blacklist, cap_factor);
    if (!verdict.ok())
        throw ValidationError(std::move(verdict));
    BenchmarkTask task;
    task.node_id_ = std::move(node_id);
    task.config_ = std::move(config);
    task.workload_ = std::move(workload);
    task.resources_ = resources;
    task.validated_ = true;
    return task;
}

} // namespace agenttune
