// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <agenttune/memory.hpp>
#include <agenttune/session.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <ostream>

namespace agenttune {

namespace fs = std::filesystem;

namespace {

struct RunFlags {
    std::string config;
    std::string resume;
    std::string session_dir;
    std::optional<std::string> backend;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> token_budget;
    std::optional<double> time_budget;
    std::optional<int> max_iters;
    std::optional<int> branching;
    std::optional<int> top_k;
    std::optional<std::string> ltm;
    std::optional<std::string> transcript;
    std::optional<int> stop_after;
    bool quiet = false;
};

std::string default_session_dir() {
    auto now = std::chrono::system_clock::now();
    return fmt::format("sessions/run-{}",
                       std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
}

void print_report(std::ostream& out, const SessionReport& r) {
    fmt::print(out, "stop: {} after {} iterations\n", r.stop_reason, r.iterations);
    fmt::print(out, "best value {} at node {} (baseline {})\n", format_double(r.best_value), r.best_node,
               format_double(r.baseline));
    fmt::print(out, "best config: {}\n", r.best_config.to_json().dump());
    fmt::print(out, "mpg={:.4f} tc95={} te={:.6f} twer={:.6f} tokens={} errors={}\n", r.metrics.mpg, r.metrics.tc95,
               r.metrics.te, r.metrics.twer, r.total_tokens, r.error_count);
}

void print_row(std::ostream& out, const IterationRow& row) {
    fmt::print(out, "iter {:>3}  best={:<12} tokens={:<8} errors={}\n", row.iteration, format_double(row.best),
               row.cumulative_tokens, row.error_count);
}

int do_run(const RunFlags& f, std::ostream& out, std::ostream& err) {
    RunOptions options;
    options.stop_after = f.stop_after;
    if (!f.quiet)
        options.on_iteration = [&out](const IterationRow& row) { print_row(out, row); };

    SessionOutcome outcome;
    if (!f.resume.empty()) {
        if (!fs::is_regular_file(fs::path(f.resume) / "session.json")) {
            fmt::print(err, "error: {} is not a session directory\n", f.resume);
            return kExitConfig;
        }
        auto config = SessionConfig::load(fs::path(f.resume) / "session.json");
        if (f.backend)
            config.backend = *f.backend;
        if (f.transcript)
            config.transcript = *f.transcript;
        outcome = resume_session(f.resume, make_backend(config), options);
    } else {
        if (f.config.empty()) {
            fmt::print(err, "error: run needs --config or --resume\n");
            return kExitConfig;
        }
        auto config = SessionConfig::load(f.config);
        if (f.backend)
            config.backend = *f.backend;
        if (f.seed)
            config.seed = *f.seed;
        if (f.token_budget)
            config.token_budget = *f.token_budget;
        if (f.time_budget)
            config.time_budget_s = *f.time_budget;
        if (f.max_iters)
            config.max_iterations = *f.max_iters;
        if (f.branching)
            config.branching = *f.branching;
        if (f.top_k)
            config.top_k = *f.top_k;
        if (f.ltm)
            config.ltm_path = *f.ltm;
        if (f.transcript)
            config.transcript = *f.transcript;
        config.validate();
        const std::string dir = f.session_dir.empty() ? default_session_dir() : f.session_dir;
        outcome = run_session(config, make_backend(config), dir, options);
    }
    if (outcome.paused) {
        fmt::print(out, "paused; resume with: run --resume {}\n", outcome.dir.string());
        return kExitOk;
    }
    print_report(out, *outcome.report);
    fmt::print(out, "session: {}\n", outcome.dir.string());
    return kExitOk;
}

int do_report(const std::string& dir, bool as_json, std::ostream& out, std::ostream& err) {
    const auto path = fs::path(dir) / "report.json";
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitConfig;
    }
    if (as_json) {
        out << text;
        return kExitOk;
    }
    auto report = SessionReport::from_json(json::parse(text));
    print_report(out, report);
    for (const auto& row : report.per_iteration)
        print_row(out, row);
    return kExitOk;
}

int do_memory(const std::string& action, const std::string& ltm, const std::string& file, std::ostream& out,
              std::ostream& err) {
    auto fail = [&](const std::string& msg) {
        fmt::print(err, "error: {}\n", msg);
        return kExitConfig;
    };
    if (ltm.empty())
        return fail("memory needs --ltm");
    try {
        if (action == "list") {
            auto insights = MemoryStore::insights_from_json(json::parse(read_file(ltm)));
            fmt::print(out, "{:<8} {:<4} {:>10}  {}\n", "id", "tier", "confidence", "text");
            for (const auto& i : insights)
                fmt::print(out, "{:<8} {:<4} {:>10.4f}  {}\n", i.id, to_string(i.tier), i.confidence, i.text);
            return kExitOk;
        }
        if (action == "export") {
            const auto text = read_file(ltm);
            MemoryStore::insights_from_json(json::parse(text));
            if (file.empty())
                out << text;
            else
                write_file(file, text);
            return kExitOk;
        }
        if (action == "import") {
            if (file.empty())
                return fail("memory import needs --file");
            const auto text = read_file(file);
            MemoryStore::insights_from_json(json::parse(text));
            write_file(ltm, text);
            return kExitOk;
        }
    } catch (const std::exception& e) {
        return fail(e.what());
    }
    return fail(fmt::format("unknown memory action '{}'", action));
}

int do_replay(const std::string& dir, bool verify, std::ostream& out, std::ostream& err) {
    if (!fs::is_regular_file(fs::path(dir) / "transcript.json")) {
        fmt::print(err, "error: {} holds no transcript\n", dir);
        return kExitConfig;
    }
    auto result = replay_session(dir);
    print_report(out, result.report);
    if (verify) {
        if (!result.matches) {
            fmt::print(err, "replay report differs from {}/report.json\n", dir);
            return kExitFailure;
        }
        fmt::print(out, "replay matches recorded report\n");
    }
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"LLM-agent storage configuration tuner"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

    RunFlags rf;
    auto* run = app.add_subcommand("run", "start or resume a tuning session");
    run->add_option("--config", rf.config, "session config (JSON)");
    run->add_option("--resume", rf.resume, "continue the session in this directory");
    run->add_option("--session-dir", rf.session_dir, "where to write the session");
    run->add_option("--backend", rf.backend, "http | greedy-mock | scripted");
    run->add_option("--seed", rf.seed);
    run->add_option("--token-budget", rf.token_budget);
    run->add_option("--time-budget", rf.time_budget, "seconds");
    run->add_option("--max-iters", rf.max_iters);
    run->add_option("--branching", rf.branching);
    run->add_option("--top-k", rf.top_k);
    run->add_option("--ltm", rf.ltm, "long-term memory document");
    run->add_option("--transcript", rf.transcript, "transcript for the scripted backend");
    run->add_option("--stop-after", rf.stop_after, "pause after this many iterations");
    run->add_flag("--quiet", rf.quiet, "no per-iteration lines");

    std::string report_dir;
    bool report_json = false;
    auto* report = app.add_subcommand("report", "print a session report");
    report->add_option("dir", report_dir, "session directory")->required();
    report->add_flag("--json", report_json, "print report.json as is");

    std::string mem_action;
    std::string mem_ltm;
    std::string mem_file;
    auto* memory = app.add_subcommand("memory", "list, export or import long-term memory");
    memory->add_option("action", mem_action, "list | export | import")
        ->required()
        ->check(CLI::IsMember({"list", "export", "import"}));
    memory->add_option("--ltm", mem_ltm, "long-term memory document");
    memory->add_option("--file", mem_file, "export target or import source");

    std::string replay_dir;
    bool verify = false;
    auto* replay = app.add_subcommand("replay", "re-run a recorded session offline");
    replay->add_option("dir", replay_dir, "session directory")->required();
    replay->add_flag("--verify", verify, "fail unless the report is reproduced exactly");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitConfig;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*run)
            return do_run(rf, out, err);
        if (*report)
            return do_report(report_dir, report_json, out, err);
        if (*memory)
            return do_memory(mem_action, mem_ltm, mem_file, out, err);
        if (*replay)
            return do_replay(replay_dir, verify, out, err);
    } catch (const ConfigError& e) {
        fmt::print(err, "config error: {}\n", e.what());
        return kExitConfig;
    } catch (const SetupError& e) {
        fmt::print(err, "setup error: {}\n", e.what());
        return kExitSetup;
    } catch (const TranscriptMismatch& e) {
        fmt::print(err, "transcript mismatch: {}\n", e.what());
        return kExitTranscript;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitFailure;
    }
    return kExitFailure;
}

} // namespace agenttune
