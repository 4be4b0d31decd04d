// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/adapter.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <span>

namespace agenttune {

/// The Executor agent. Runs each task in a fresh directory under base_dir
/// (base_dir/<node_id>/{config.*, stdout.txt, monitor.jsonl}) and never
/// throws for a failed run: the failure is encoded in exit_status.
class Executor {
public:
    static constexpr std::chrono::milliseconds kMonitorPeriod{1000};

    Executor(const TargetAdapter& adapter, std::filesystem::path base_dir,
             std::shared_ptr<Sandbox> sandbox = std::make_shared<ProcessSandbox>());

    RawBenchmarkOutput run_task(const BenchmarkTask& task) const;

    /// At most `parallelism` tasks in flight. Results keyed by node id.
    std::map<std::string, RawBenchmarkOutput> run_batch(std::span<const BenchmarkTask> tasks, int parallelism) const;

    std::size_t tasks_run() const { return tasks_run_.load(); }
    const std::filesystem::path& base_dir() const { return base_dir_; }

private:
    RawBenchmarkOutput monitor(SandboxProcess& process, const std::filesystem::path& dir,
                               const ResourceSpec& resources) const;

    const TargetAdapter& adapter_;
    std::filesystem::path base_dir_;
    std::shared_ptr<Sandbox> sandbox_;
    mutable std::atomic<std::size_t> tasks_run_{0};
};

} // namespace agenttune
