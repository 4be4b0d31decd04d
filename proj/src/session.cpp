// SPDX-License-Identifier: Apache-2.0
#include <agenttune/session.hpp>

#include <agenttune/executor.hpp>
#include <agenttune/extractor.hpp>
#include <agenttune/reflector.hpp>
#include <agenttune/searcher.hpp>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <unistd.h>

namespace agenttune {

namespace fs = std::filesystem;

// --- SessionConfig --------------------------------------------------------------

void SessionConfig::validate() const {
    auto fail = [](std::string msg) { throw ConfigError(std::move(msg)); };
    if (target.empty())
        fail("target must name an adapter");
    if (metric.empty())
        fail("metric must be set");
    if (branching < 1 || branching > 5)
        fail(fmt::format("branching {} outside [1, 5]", branching));
    if (top_k < 1)
        fail("top_k must be >= 1");
    if (token_budget < 0)
        fail("token_budget must not be negative");
    if (!(time_budget_s > 0.0))
        fail("time_budget_s must be positive");
    if (max_iterations < 1)
        fail("max_iterations must be >= 1");
    if (!(budget_cap_factor > 0.0 && budget_cap_factor <= 1.0))
        fail("budget_cap_factor must be in (0, 1]");
    if (parallelism < 1)
        fail("parallelism must be >= 1");
    if (!(retrieval_blend_alpha >= 0.0 && retrieval_blend_alpha <= 1.0))
        fail("retrieval blend_alpha must be in [0, 1]");
    try {
        workload.validate();
        resources.validate();
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
}

json SessionConfig::to_json() const {
    return {{"target", target},
            {"workload", workload.to_json()},
            {"resources", resources.to_json()},
            {"metric", metric},
            {"direction", objective ? json(to_string(*objective)) : json(nullptr)},
            {"branching", branching},
            {"top_k", top_k},
            {"token_budget", token_budget},
            {"time_budget_s", time_budget_s},
            {"max_iterations", max_iterations},
            {"blacklist", blacklist},
            {"constraints", constraints},
            {"budget_cap_factor", budget_cap_factor},
            {"seed", seed},
            {"backend", backend},
            {"model", model},
            {"transcript", transcript},
            {"parallelism", parallelism},
            {"ltm_path", ltm_path},
            {"prompt_dir", prompt_dir},
            {"llm_summary", llm_summary},
            {"retrieval",
             {{"combine", retrieval_combine == ScoreCombination::Product ? "product" : "blend"},
              {"blend_alpha", retrieval_blend_alpha},
              {"require_tag_overlap", retrieval_require_tags}}}};
}

SessionConfig SessionConfig::from_json(const json& j) {
    if (!j.is_object())
        throw ConfigError("session config must be a JSON object");
    SessionConfig c;
    try {
        c.target = j.value("target", c.target);
        if (j.contains("workload"))
            c.workload = WorkloadSpec::from_json(j.at("workload"));
        if (j.contains("resources"))
            c.resources = ResourceSpec::from_json(j.at("resources"));
        c.metric = j.value("metric", c.metric);
        if (j.contains("direction") && !j.at("direction").is_null())
            c.objective = objective_from_string(j.at("direction").get<std::string>());
        c.branching = j.value("branching", c.branching);
        c.top_k = j.value("top_k", c.top_k);
        c.token_budget = j.value("token_budget", c.token_budget);
        c.time_budget_s = j.value("time_budget_s", c.time_budget_s);
        c.max_iterations = j.value("max_iterations", c.max_iterations);
        c.blacklist = j.value("blacklist", c.blacklist);
        c.constraints = j.value("constraints", c.constraints);
        c.budget_cap_factor = j.value("budget_cap_factor", c.budget_cap_factor);
        c.seed = j.value("seed", c.seed);
        c.backend = j.value("backend", c.backend);
        c.model = j.value("model", c.model);
        c.transcript = j.value("transcript", c.transcript);
        c.parallelism = j.value("parallelism", c.parallelism);
        c.ltm_path = j.value("ltm_path", c.ltm_path);
        c.prompt_dir = j.value("prompt_dir", c.prompt_dir);
        c.llm_summary = j.value("llm_summary", c.llm_summary);
        if (j.contains("retrieval")) {
            const auto& r = j.at("retrieval");
            const auto combine = r.value("combine", std::string("product"));
            if (combine == "product")
                c.retrieval_combine = ScoreCombination::Product;
            else if (combine == "blend")
                c.retrieval_combine = ScoreCombination::Blend;
            else
                throw ConfigError(fmt::format("unknown retrieval combine '{}'", combine));
            c.retrieval_blend_alpha = r.value("blend_alpha", c.retrieval_blend_alpha);
            c.retrieval_require_tags = r.value("require_tag_overlap", c.retrieval_require_tags);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(fmt::format("bad session config: {}", e.what()));
    }
    c.validate();
    return c;
}

SessionConfig SessionConfig::load(const fs::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    auto j = json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw ConfigError(fmt::format("{}: not valid JSON", path.string()));
    return from_json(j);
}

// --- SessionReport --------------------------------------------------------------

json SessionReport::to_json() const {
    json rows = json::array();
    for (const auto& r : per_iteration)
        rows.push_back(r.to_json());
    return {{"mpg", metrics.mpg},
            {"tc95", metrics.tc95},
            {"te", metrics.te},
            {"twer", metrics.twer},
            {"best_config", best_config.to_json()},
            {"best_value", best_value},
            {"best_node", best_node},
            {"baseline", baseline},
            {"iterations", iterations},
            {"stop_reason", stop_reason},
            {"total_tokens", total_tokens},
            {"error_count", error_count},
            {"per_iteration", rows}};
}

SessionReport SessionReport::from_json(const json& j) {
    SessionReport r;
    r.metrics.mpg = j.at("mpg").get<double>();
    r.metrics.tc95 = j.at("tc95").get<std::int64_t>();
    r.metrics.te = j.at("te").get<double>();
    r.metrics.twer = j.at("twer").get<double>();
    r.best_config = Configuration::from_json(j.at("best_config"));
    r.best_value = j.at("best_value").get<double>();
    r.best_node = j.at("best_node").get<std::string>();
    r.baseline = j.at("baseline").get<double>();
    r.iterations = j.at("iterations").get<int>();
    r.stop_reason = j.at("stop_reason").get<std::string>();
    r.total_tokens = j.at("total_tokens").get<std::int64_t>();
    r.error_count = j.at("error_count").get<int>();
    for (const auto& row : j.at("per_iteration"))
        r.per_iteration.push_back(IterationRow::from_json(row));
    return r;
}

std::string SessionReport::serialize() const {
    return to_json().dump(2) + "\n";
}

// --- backends -------------------------------------------------------------------

std::shared_ptr<LlmBackend> make_backend(const SessionConfig& config) {
    if (config.backend == "greedy-mock")
        return std::make_shared<GreedyBackend>();
    if (config.backend == "scripted") {
        if (config.transcript.empty())
            throw SetupError("scripted backend needs a transcript file");
        try {
            return std::make_shared<ScriptedBackend>(
                transcript_from_json(json::parse(read_file(config.transcript))));
        } catch (const std::exception& e) {
            throw SetupError(fmt::format("cannot load transcript {}: {}", config.transcript, e.what()));
        }
    }
    if (config.backend == "http") {
        try {
            return std::make_shared<HttpBackend>(HttpBackend::options_from_env(config.model));
        } catch (const LlmError& e) {
            throw SetupError(e.what());
        }
    }
    throw SetupError(fmt::format("unknown backend '{}'", config.backend));
}

// --- the orchestrator -----------------------------------------------------------

namespace {

constexpr const char* kSessionFile = "session.json";
constexpr const char* kTreeFile = "tree.json";
constexpr const char* kStmFile = "stm.json";
constexpr const char* kLtmFile = "ltm.json";
constexpr const char* kLtmInitialFile = "ltm_initial.json";
constexpr const char* kLedgerFile = "ledger.json";
constexpr const char* kTranscriptFile = "transcript.json";
constexpr const char* kVotesFile = "votes.jsonl";
constexpr const char* kStateFile = "state.json";
constexpr const char* kReportFile = "report.json";

TuningTask make_task(const SessionConfig& config, const AdapterManifest& manifest) {
    const auto* metric = manifest.metric(config.metric);
    if (!metric)
        throw ConfigError(fmt::format("adapter '{}' reports no metric '{}'", manifest.name, config.metric));
    TuningTask t;
    t.system = manifest.name;
    t.system_info = manifest.system_info;
    t.schema = manifest.schema;
    t.workload = config.workload;
    t.resources = config.resources;
    t.target = config.metric;
    t.objective = config.objective.value_or(metric->objective);
    t.blacklist = config.blacklist;
    t.constraints = config.constraints;
    t.cap_factor = config.budget_cap_factor;
    for (const auto& m : manifest.metrics)
        t.metric_objectives[m.name] = m.objective;
    return t;
}

class Orchestrator {
public:
    Orchestrator(SessionConfig config, std::shared_ptr<LlmBackend> backend, fs::path dir, RunOptions options)
        : config_(std::move(config)), dir_(std::move(dir)), options_(std::move(options)),
          adapter_(resolve(config_.target)), task_(make_task(config_, adapter_->manifest())),
          prompts_(config_.prompt_dir.empty() ? PromptSet::defaults() : PromptSet::load(config_.prompt_dir)),
          gateway_(std::move(backend), GatewayOptions{config_.token_budget}),
          tree_(task_.target, task_.objective),
          executor_(*adapter_, dir_ / "nodes",
                    options_.sandbox ? options_.sandbox : std::make_shared<ProcessSandbox>()),
          extractor_(gateway_, prompts_, adapter_->manifest(), task_.target,
                     ExtractorOptions{3, config_.llm_summary, 2000}),
          searcher_(gateway_, prompts_, task_), reflector_(gateway_, prompts_, memory_, task_) {
        retrieval_.combine = config_.retrieval_combine;
        retrieval_.blend_alpha = config_.retrieval_blend_alpha;
        retrieval_.require_tag_overlap = config_.retrieval_require_tags;
    }

    void start() {
        if (fs::exists(dir_ / kSessionFile))
            throw SetupError(fmt::format("{} already holds a session", dir_.string()));
        fs::create_directories(dir_ / "nodes");
        write_file(dir_ / kSessionFile, config_.to_json().dump(2) + "\n");
        if (!config_.ltm_path.empty()) {
            try {
                memory_.load_ltm(config_.ltm_path);
            } catch (const std::exception& e) {
                throw ConfigError(fmt::format("cannot read long-term memory {}: {}", config_.ltm_path, e.what()));
            }
        }
        write_file(dir_ / kLtmInitialFile, MemoryStore::insights_to_json(memory_.ltm()).dump(2) + "\n");
        benchmark_baseline();
        checkpoint();
    }

    void restore() {
        tree_ = SearchTree::from_json(json::parse(read_file(dir_ / kTreeFile)));
        memory_.load_ltm(dir_ / kLtmFile);
        memory_.load_stm(dir_ / kStmFile);
        memory_.load_vote_log(dir_ / kVotesFile);
        auto transcript = transcript_from_json(json::parse(read_file(dir_ / kTranscriptFile)));
        auto ledger = TokenLedger::from_json(json::parse(read_file(dir_ / kLedgerFile)));
        if (auto* scripted = dynamic_cast<ScriptedBackend*>(backend_ptr()))
            scripted->fast_forward(transcript);
        gateway_.restore(std::move(ledger), std::move(transcript));
        const auto state = json::parse(read_file(dir_ / kStateFile));
        iteration_ = state.at("iteration").get<int>();
        selected_ = state.at("selected").get<std::string>();
        baseline_ = state.at("baseline").get<double>();
        prior_elapsed_s_ = state.at("elapsed_s").get<double>();
        stop_reason_ = state.value("stop_reason", std::string());
        for (const auto& r : state.at("per_iteration"))
            rows_.push_back(IterationRow::from_json(r));
        extractor_.restore_state(state.at("extractor"));
    }

    SessionOutcome loop() {
        SessionOutcome outcome;
        outcome.dir = dir_;
        while (stop_reason_.empty()) {
            if (iteration_ == 0) {
                if (gateway_.total_tokens() >= config_.token_budget) {
                    stop_reason_ = "token budget";
                    break;
                }
            } else {
                TerminationLimits limits;
                limits.token_budget = config_.token_budget;
                if (!options_.disable_time_budget)
                    limits.time_budget_s = config_.time_budget_s;
                limits.max_iterations = config_.max_iterations;
                if (auto reason = Searcher::check_termination(tree_, gateway_.total_tokens(), elapsed(), iteration_,
                                                              limits)) {
                    stop_reason_ = *reason;
                    break;
                }
            }
            if (options_.forced_stop && iteration_ >= *options_.forced_stop) {
                stop_reason_ = options_.forced_reason;
                break;
            }
            if (options_.stop_after && iteration_ >= *options_.stop_after) {
                checkpoint();
                outcome.paused = true;
                return outcome;
            }
            run_iteration();
            checkpoint();
        }
        auto report = build_report();
        checkpoint();
        write_file(dir_ / kReportFile, report.serialize());
        outcome.report = std::move(report);
        return outcome;
    }

private:
    static std::unique_ptr<TargetAdapter> resolve(const std::string& target) {
        try {
            return resolve_adapter(target);
        } catch (const AdapterError& e) {
            throw SetupError(e.what());
        } catch (const SchemaError& e) {
            throw SetupError(e.what());
        }
    }

    LlmBackend* backend_ptr() { return const_cast<LlmBackend*>(&gateway_.backend()); }

    double elapsed() const {
        return prior_elapsed_s_ +
               std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    }

    void benchmark_baseline() {
        gateway_.set_iteration(0);
        const auto& root = tree_.add_root(task_.schema.defaults(), task_.workload, task_.resources);
        const std::string root_id = root.id;
        std::vector<BenchmarkTask> tasks;
        try {
            tasks.push_back(BenchmarkTask::prepare(root_id, root.config, task_.workload, task_.resources, task_.schema,
                                                   task_.blacklist, task_.cap_factor));
        } catch (const ValidationError& e) {
            throw ConfigError(fmt::format("default configuration is invalid: {}", e.verdict().describe()));
        }
        auto raw = executor_.run_batch(tasks, 1);
        auto digest = extractor_.extract(raw.at(root_id), root_id);
        write_file(dir_ / "nodes" / root_id / "digest.json", digest.to_json().dump(2) + "\n");
        tree_.record_result(root_id, digest);
        auto v = tree_.value_of(root_id);
        if (!v)
            throw SetupError(fmt::format("baseline run produced no {} ({})", task_.target, digest.summary));
        if (!(*v > 0.0))
            throw DegenerateBaseline(fmt::format("baseline {} = {} is not positive", task_.target, *v));
        baseline_ = *v;
        tree_.mark_selected(root_id);
        selected_ = root_id;
        tree_.close_iteration(0);
        push_row(0);
    }

    std::string retrieval_context(const TuningNode& node) const {
        std::string ctx = fmt::format("{} {} {} {}", task_.system, task_.workload.name, task_.target,
                                      to_string(task_.objective));
        for (const auto& p : task_.schema.params())
            ctx += " " + p.name;
        if (node.digest)
            ctx += " " + node.digest->summary;
        return ctx;
    }

    void run_iteration() {
        ++iteration_;
        gateway_.set_iteration(iteration_);
        const TuningNode parent = tree_.node(selected_);

        const auto retrieved =
            retrieve(memory_, retrieval_context(parent), task_.tags(), config_.top_k, retrieval_);

        std::vector<Configuration> proposals;
        bool out_of_tokens = false;
        try {
            proposals = searcher_.propose_children(parent, retrieved, config_.branching);
        } catch (const BudgetExceeded& e) {
            spdlog::info("iteration {}: {}", iteration_, e.what());
            out_of_tokens = true;
        }

        // drop repeats of configurations already explored
        std::vector<Configuration> candidates;
        for (auto& c : proposals) {
            if (tree_.contains_config(c) ||
                std::find(candidates.begin(), candidates.end(), c) != candidates.end())
                continue;
            candidates.push_back(std::move(c));
        }

        std::vector<std::string> ids;
        for (const auto& c : candidates)
            ids.push_back(tree_.add_child(parent.id, c, iteration_).id);

        const auto kept = searcher_.filter_constraints(parent.config, candidates);
        std::vector<BenchmarkTask> tasks;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (std::find(kept.begin(), kept.end(), i) == kept.end()) {
                tree_.mark_rejected(ids[i], "dropped by the constraint filter");
                continue;
            }
            try {
                tasks.push_back(BenchmarkTask::prepare(ids[i], candidates[i], task_.workload, task_.resources,
                                                       task_.schema, task_.blacklist, task_.cap_factor));
            } catch (const ValidationError& e) {
                tree_.mark_rejected(ids[i], e.verdict().describe());
            }
        }

        auto raw = executor_.run_batch(tasks, config_.parallelism);
        std::vector<std::pair<std::string, std::string>> edges;
        for (const auto& task : tasks) {
            const auto& id = task.node_id();
            auto digest = extractor_.extract(raw.at(id), id);
            write_file(dir_ / "nodes" / id / "digest.json", digest.to_json().dump(2) + "\n");
            tree_.record_result(id, std::move(digest));
            if (tree_.node(id).digest)
                edges.emplace_back(parent.id, id);
        }
        tree_.close_iteration(iteration_);

        reflect(parent.id, edges, retrieved);

        selected_ = searcher_.select_next(tree_);
        push_row(iteration_);
        if (out_of_tokens)
            stop_reason_ = "token budget";
    }

    void reflect(const std::string& parent_id, const std::vector<std::pair<std::string, std::string>>& edges,
                 const std::vector<Insight>& retrieved) {
        Experience exp;
        exp.nodes.push_back(&tree_.node(parent_id));
        for (const auto& [_, child] : edges)
            exp.nodes.push_back(&tree_.node(child));
        exp.edges = edges;
        try {
            reflector_.generate_insights(exp, iteration_);
        } catch (const LlmError& e) {
            spdlog::info("iteration {}: no insights ({})", iteration_, e.what());
        }

        const auto evidence = evidence_from(tree_, edges);
        for (const auto& r : retrieved) {
            const auto* current = memory_.find(r.id);
            if (!current)
                continue;
            auto relevant = Reflector::relevant_evidence(*current, evidence);
            if (relevant.empty())
                continue;
            try {
                reflector_.review(r.id, relevant, iteration_);
            } catch (const LlmError& e) {
                spdlog::info("iteration {}: vote on {} skipped ({})", iteration_, r.id, e.what());
            }
        }
    }

    void push_row(int iteration) {
        IterationRow row{iteration, *tree_.best_value(), gateway_.total_tokens(), tree_.error_count()};
        rows_.push_back(row);
        if (options_.on_iteration)
            options_.on_iteration(row);
    }

    SessionReport build_report() const {
        SessionReport r;
        const auto total = gateway_.total_tokens();
        r.metrics = compute_metrics(rows_, baseline_, total, tree_.error_count(), task_.objective);
        const auto best = *tree_.best_node();
        r.best_node = best;
        r.best_config = tree_.node(best).config;
        r.best_value = *tree_.value_of(best);
        r.baseline = baseline_;
        r.iterations = iteration_;
        r.stop_reason = stop_reason_;
        r.total_tokens = total;
        r.error_count = tree_.error_count();
        r.per_iteration = rows_;
        return r;
    }

    void checkpoint() {
        json rows = json::array();
        for (const auto& r : rows_)
            rows.push_back(r.to_json());
        write_file(dir_ / kTreeFile, tree_.to_json().dump(2) + "\n");
        memory_.save_stm(dir_ / kStmFile);
        memory_.save_ltm(dir_ / kLtmFile);
        memory_.save_vote_log(dir_ / kVotesFile);
        write_file(dir_ / kLedgerFile, gateway_.ledger().to_json().dump(2) + "\n");
        write_file(dir_ / kTranscriptFile, transcript_to_json(gateway_.transcript()).dump(2) + "\n");
        json state{{"iteration", iteration_},
                   {"selected", selected_},
                   {"baseline", baseline_},
                   {"elapsed_s", elapsed()},
                   {"stop_reason", stop_reason_},
                   {"per_iteration", rows},
                   {"extractor", extractor_.state_to_json()}};
        write_file(dir_ / kStateFile, state.dump(2) + "\n");
        if (!config_.ltm_path.empty())
            memory_.save_ltm(config_.ltm_path);
    }

    SessionConfig config_;
    fs::path dir_;
    RunOptions options_;
    std::unique_ptr<TargetAdapter> adapter_;
    TuningTask task_;
    PromptSet prompts_;
    LlmGateway gateway_;
    SearchTree tree_;
    MemoryStore memory_;
    Executor executor_;
    Extractor extractor_;
    Searcher searcher_;
    Reflector reflector_;
    RetrievalOptions retrieval_;

    int iteration_ = 0;
    std::string selected_;
    double baseline_ = 0.0;
    std::string stop_reason_;
    std::vector<IterationRow> rows_;
    double prior_elapsed_s_ = 0.0;
    std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
};

} // namespace

SessionOutcome run_session(const SessionConfig& config, std::shared_ptr<LlmBackend> backend, const fs::path& dir,
                           const RunOptions& options) {
    config.validate();
    Orchestrator o(config, std::move(backend), dir, options);
    o.start();
    return o.loop();
}

SessionOutcome resume_session(const fs::path& dir, std::shared_ptr<LlmBackend> backend, const RunOptions& options) {
    auto config = SessionConfig::load(dir / kSessionFile);
    Orchestrator o(config, std::move(backend), dir, options);
    o.restore();
    return o.loop();
}

ReplayResult replay_session(const fs::path& dir) {
    auto config = SessionConfig::load(dir / kSessionFile);
    const auto stored_text = read_file(dir / kReportFile);
    const auto stored = SessionReport::from_json(json::parse(stored_text));
    auto transcript = transcript_from_json(json::parse(read_file(dir / kTranscriptFile)));
    auto backend = std::make_shared<ScriptedBackend>(std::move(transcript));

    const auto scratch = fs::temp_directory_path() /
                         fmt::format("agenttune-replay-{}-{}", ::getpid(),
                                     std::chrono::steady_clock::now().time_since_epoch().count());
    fs::create_directories(scratch);
    struct Cleanup {
        fs::path p;
        ~Cleanup() {
            std::error_code ec;
            fs::remove_all(p, ec);
        }
    } cleanup{scratch};

    const auto ltm = scratch / "ltm.json";
    fs::copy_file(dir / kLtmInitialFile, ltm);
    config.ltm_path = ltm.string();

    RunOptions options;
    options.disable_time_budget = true;
    if (stored.stop_reason == "time budget") {
        options.forced_stop = stored.iterations;
        options.forced_reason = stored.stop_reason;
    }
    auto outcome = run_session(config, backend, scratch / "session", options);
    if (!backend->fully_consumed())
        throw TranscriptMismatch("replay finished with unconsumed transcript entries");

    ReplayResult result;
    result.report = *outcome.report;
    result.serialized = result.report.serialize();
    result.matches = result.serialized == stored_text;
    return result;
}

} // namespace agenttune
