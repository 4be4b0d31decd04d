// SPDX-License-Identifier: Apache-2.0
#include <agenttune/sandbox.hpp>

#include <fmt/format.h>

#include <fcntl.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

namespace agenttune {

namespace {

class PosixProcess : public SandboxProcess {
public:
    explicit PosixProcess(pid_t pid) : pid_(pid) {}

    ~PosixProcess() override {
        if (!exit_) {
            kill();
        }
    }

    std::optional<ProcessExit> poll() override {
        if (exit_)
            return exit_;
        int status = 0;
        pid_t r = ::waitpid(pid_, &status, WNOHANG);
        if (r == pid_)
            exit_ = decode(status);
        return exit_;
    }

    void kill() override {
        if (exit_)
            return;
        ::kill(-pid_, SIGKILL);
        ::kill(pid_, SIGKILL);
        int status = 0;
        while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
        }
        exit_ = decode(status);
    }

    std::optional<ProcessUsage> usage() const override {
        std::ifstream in(fmt::format("/proc/{}/stat", pid_));
        std::string line;
        if (!in || !std::getline(in, line))
            return std::nullopt;
        // comm may contain spaces; fields resume after the closing paren
        auto close = line.rfind(')');
        if (close == std::string::npos)
            return std::nullopt;
        std::istringstream fields(line.substr(close + 2));
        std::vector<std::string> f;
        for (std::string tok; fields >> tok;)
            f.push_back(tok);
        // f[0] is field 3 (state); utime=14, stime=15, rss=24
        if (f.size() < 22)
            return std::nullopt;
        const double ticks = static_cast<double>(::sysconf(_SC_CLK_TCK));
        const double page_mb = static_cast<double>(::sysconf(_SC_PAGESIZE)) / (1024.0 * 1024.0);
        ProcessUsage u;
        u.cpu_seconds = (std::stod(f[11]) + std::stod(f[12])) / ticks;
        u.rss_mb = std::stod(f[21]) * page_mb;
        return u;
    }

private:
    static ProcessExit decode(int status) {
        ProcessExit e;
        if (WIFEXITED(status)) {
            e.code = WEXITSTATUS(status);
        } else if (WIFSIGNALED(status)) {
            e.signaled = true;
            e.signal = WTERMSIG(status);
            e.code = 128 + e.signal;
        }
        return e;
    }

    pid_t pid_;
    std::optional<ProcessExit> exit_;
};

int open_output(const std::filesystem::path& path) {
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0)
        throw LaunchFailure(fmt::format("cannot open {}: {}", path.string(), std::strerror(errno)));
    return fd;
}

} // namespace

std::unique_ptr<SandboxProcess> ProcessSandbox::spawn(const SpawnRequest& request) {
    if (request.argv.empty())
        throw LaunchFailure("empty command");
    std::filesystem::create_directories(request.working_dir);

    // everything the child touches is prepared before fork
    std::vector<char*> argv;
    for (const auto& a : request.argv)
        argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    const std::string dir = request.working_dir.string();

    int out_fd = open_output(request.stdout_path);
    int err_fd = open_output(request.stderr_path.empty() ? request.stdout_path : request.stderr_path);

    int report[2];
    if (::pipe2(report, O_CLOEXEC) != 0) {
        ::close(out_fd);
        ::close(err_fd);
        throw LaunchFailure(fmt::format("pipe: {}", std::strerror(errno)));
    }

    cpu_set_t cpus;
    CPU_ZERO(&cpus);
    const long online = ::sysconf(_SC_NPROCESSORS_ONLN);
    for (long i = 0; i < std::min<long>(request.limits.cpu_cores, online > 0 ? online : 1); ++i)
        CPU_SET(static_cast<int>(i), &cpus);

    rlimit mem{};
    mem.rlim_cur = mem.rlim_max = static_cast<rlim_t>(request.limits.memory_mb) * 1024 * 1024;
    rlimit cpu{};
    cpu.rlim_cur = cpu.rlim_max =
        static_cast<rlim_t>(request.limits.time_limit_s) * static_cast<rlim_t>(request.limits.cpu_cores) + 1;

    pid_t pid = ::fork();
    if (pid < 0) {
        ::close(out_fd);
        ::close(err_fd);
        ::close(report[0]);
        ::close(report[1]);
        throw LaunchFailure(fmt::format("fork: {}", std::strerror(errno)));
    }
    if (pid == 0) {
        ::setpgid(0, 0);
        int err = 0;
        if (::chdir(dir.c_str()) != 0 || ::dup2(out_fd, STDOUT_FILENO) < 0 || ::dup2(err_fd, STDERR_FILENO) < 0) {
            err = errno;
        } else {
            int devnull = ::open("/dev/null", O_RDONLY);
            if (devnull >= 0)
                ::dup2(devnull, STDIN_FILENO);
            ::sched_setaffinity(0, sizeof(cpus), &cpus);
            ::setrlimit(RLIMIT_AS, &mem);
            ::setrlimit(RLIMIT_CPU, &cpu);
            ::execvp(argv[0], argv.data());
            err = errno;
        }
        [[maybe_unused]] auto n = ::write(report[1], &err, sizeof(err));
        ::_exit(127);
    }

    ::setpgid(pid, pid);
    ::close(report[1]);
    ::close(out_fd);
    ::close(err_fd);
    int child_errno = 0;
    ssize_t n = 0;
    while ((n = ::read(report[0], &child_errno, sizeof(child_errno))) < 0 && errno == EINTR) {
    }
    ::close(report[0]);
    if (n > 0) {
        int status = 0;
        ::waitpid(pid, &status, 0);
        throw LaunchFailure(fmt::format("cannot execute '{}': {}", request.argv[0], std::strerror(child_errno)));
    }
    return std::make_unique<PosixProcess>(pid);
}

} // namespace agenttune
