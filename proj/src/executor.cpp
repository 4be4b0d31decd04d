// SPDX-License-Identifier: Apache-2.0
#include <agenttune/executor.hpp>

#include <spdlog/spdlog.h>

#include <thread>
#include <vector>

namespace agenttune {

namespace {

const std::set<std::string> kOwnFiles = {"stdout.txt", "stderr.txt", "monitor.jsonl"};

std::string read_if_exists(const std::filesystem::path& p) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(p, ec))
        return {};
    return read_file(p);
}

} // namespace

Executor::Executor(const TargetAdapter& adapter, std::filesystem::path base_dir, std::shared_ptr<Sandbox> sandbox)
    : adapter_(adapter), base_dir_(std::move(base_dir)), sandbox_(std::move(sandbox)) {}

RawBenchmarkOutput Executor::run_task(const BenchmarkTask& task) const {
    if (!task.validated())
        throw std::logic_error("refusing to run an unvalidated task");
    ++tasks_run_;

    const auto dir = base_dir_ / task.node_id();
    RawBenchmarkOutput out;
    try {
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);

        LaunchHandle handle =
            adapter_.render_and_launch(task.config(), task.workload(), task.resources(), {dir, sandbox_.get()});
        if (handle.finished()) {
            out = std::move(*handle.completed);
            write_file(dir / "stdout.txt", out.stdout_text);
        } else {
            out = monitor(*handle.process, dir, task.resources());
        }
    } catch (const LaunchFailure& e) {
        spdlog::warn("node {}: launch failure: {}", task.node_id(), e.what());
        out = {};
        out.exit_status = ExitStatus::Nonzero;
        out.stdout_text = std::string("launch failure: ") + e.what() + "\n";
        write_file(dir / "stdout.txt", out.stdout_text);
    } catch (const std::exception& e) {
        spdlog::warn("node {}: executor error: {}", task.node_id(), e.what());
        out = {};
        out.exit_status = ExitStatus::Nonzero;
        out.stdout_text = std::string("executor error: ") + e.what() + "\n";
    }

    std::string monitor_lines;
    for (const auto& s : out.monitor_samples)
        monitor_lines += s.to_json().dump() + "\n";
    try {
        write_file(dir / "monitor.jsonl", monitor_lines);
    } catch (const std::exception& e) {
        spdlog::warn("node {}: cannot write monitor log: {}", task.node_id(), e.what());
    }
    return out;
}

RawBenchmarkOutput Executor::monitor(SandboxProcess& process, const std::filesystem::path& dir,
                                     const ResourceSpec& resources) const {
    using clock = std::chrono::steady_clock;
    RawBenchmarkOutput out;
    const auto start = clock::now();
    const auto deadline = start + std::chrono::seconds(resources.time_limit_s);
    auto next_sample = start + kMonitorPeriod;
    double prev_cpu = 0.0;
    double prev_t = 0.0;

    for (;;) {
        if (auto exit = process.poll()) {
            if (exit->signaled)
                out.exit_status = ExitStatus::Killed;
            else
                out.exit_status = exit->code == 0 ? ExitStatus::Ok : ExitStatus::Nonzero;
            break;
        }
        const auto now = clock::now();
        if (now >= deadline) {
            process.kill();
            out.exit_status = ExitStatus::Timeout;
            break;
        }
        if (now >= next_sample) {
            if (auto u = process.usage()) {
                const double t = std::chrono::duration<double>(now - start).count();
                MonitorSample s;
                s.t_s = t;
                s.cpu_pct = t > prev_t ? 100.0 * (u->cpu_seconds - prev_cpu) / (t - prev_t) : 0.0;
                s.mem_mb = u->rss_mb;
                out.monitor_samples.push_back(s);
                prev_cpu = u->cpu_seconds;
                prev_t = t;
            }
            next_sample += kMonitorPeriod;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }

    out.stdout_text = read_if_exists(dir / "stdout.txt");
    if (auto err = read_if_exists(dir / "stderr.txt"); !err.empty())
        out.stdout_text += err;

    const auto config_name = adapter_.manifest().config_file_name;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file())
            continue;
        auto rel = std::filesystem::relative(entry.path(), dir).string();
        if (kOwnFiles.contains(rel) || rel == config_name)
            continue;
        out.log_files[rel] = read_file(entry.path());
    }
    return out;
}

std::map<std::string, RawBenchmarkOutput> Executor::run_batch(std::span<const BenchmarkTask> tasks,
                                                              int parallelism) const {
    if (parallelism < 1)
        throw std::invalid_argument("parallelism must be >= 1");
    std::vector<RawBenchmarkOutput> results(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++)
            results[i] = run_task(tasks[i]);
    };
    {
        std::vector<std::jthread> pool;
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(parallelism), tasks.size());
        for (std::size_t i = 0; i < n; ++i)
            pool.emplace_back(worker);
    }
    std::map<std::string, RawBenchmarkOutput> out;
    for (std::size_t i = 0; i < tasks.size(); ++i)
        out.emplace(tasks[i].node_id(), std::move(results[i]));
    return out;
}

} // namespace agenttune
