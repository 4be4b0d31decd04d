// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/target.hpp>

#include <sys/types.h>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace agenttune {

/// Raised when a benchmark cannot be started at all (missing binary,
/// unrenderable template). Reported as a failed node, never fatal.
class LaunchFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SpawnRequest {
    std::vector<std::string> argv;
    std::filesystem::path working_dir;
    ResourceSpec limits;
    std::filesystem::path stdout_path;
    std::filesystem::path stderr_path;
};

struct ProcessExit {
    int code = 0;
    bool signaled = false;
    int signal = 0;
};

struct ProcessUsage {
    double cpu_seconds = 0.0;
    double rss_mb = 0.0;
};

class SandboxProcess {
public:
    virtual ~SandboxProcess() = default;
    /// Non-blocking; set once the process has exited.
    virtual std::optional<ProcessExit> poll() = 0;
    virtual void kill() = 0;
    virtual std::optional<ProcessUsage> usage() const = 0;
};

/// Isolation seam. The default implementation is process-level; a container
/// runtime can be plugged in behind the same interface.
class Sandbox {
public:
    virtual ~Sandbox() = default;
    virtual std::unique_ptr<SandboxProcess> spawn(const SpawnRequest& request) = 0;
};

/// fork/exec into the task directory with its own process group, CPU
/// affinity limited to cpu_cores, RLIMIT_AS at memory_mb, and RLIMIT_CPU as
/// a backstop to the wall-clock kill done by the executor.
class ProcessSandbox : public Sandbox {
public:
    std::unique_ptr<SandboxProcess> spawn(const SpawnRequest& request) override;
};

} // namespace agenttune
