// SPDX-License-Identifier: Apache-2.0
#include <agenttune/executor.hpp>
#include <agenttune/extractor.hpp>

#include "oracles.hpp"

#include <doctest.h>

using namespace agenttune;

namespace {

const std::string kNum = R"(([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?))";

std::string valid_spec_text() {
    json spec = {{"rules",
                  {{{"metric", "throughput_kops"},
                    {"source", "stdout"},
                    {"pattern", "throughput_kops=" + kNum},
                    {"unit", "kops/s"},
                    {"scale", 1.0}},
                   {{"metric", "p99_us"}, {"source", "stdout"}, {"pattern", "p99_us=" + kNum}, {"unit", "us"}, {"scale", 1.0}}}}};
    return "```json\n" + spec.dump() + "\n```";
}

TranscriptEntry synth(std::string text) {
    return {RequestKind::SynthesizeExtraction, std::move(text), 100, 50};
}

GatewayOptions fast() {
    GatewayOptions o;
    o.retry_backoff = std::chrono::milliseconds(0);
    return o;
}

RawBenchmarkOutput run_simkv(const Configuration& c, const oracle::TempDir& tmp, const std::string& id) {
    SimKvAdapter adapter;
    Executor ex(adapter, tmp.path);
    return ex.run_task(BenchmarkTask::prepare(id, c, {}, {2, 1024, 60}, adapter.schema()));
}

} // namespace

TEST_CASE("apply_spec takes the first match per rule") {
    RawBenchmarkOutput raw;
    raw.stdout_text = "warmup ops=1\nops=250.5\nops=999\nlat: 12 ms\n";
    raw.log_files["db/LOG"] = "stall_micros: 4000\n";
    ExtractionSpec spec{{{"ops", "stdout", "ops=" + kNum, "kops", 1.0},
                         {"lat_us", "stdout", "lat: " + kNum + " ms", "us", 1000.0},
                         {"stall_ms", "log:db/*", "stall_micros: " + kNum, "ms", 0.001},
                         {"missing", "stdout", "nothing=" + kNum, "", 1.0},
                         {"bad", "stdout", "lat: (\\w+)", "", 1.0}}};
    auto r = apply_spec(spec, raw);
    CHECK(r.metrics.at("ops").value == 1.0);
    CHECK(r.metrics.at("lat_us").value == 12000.0);
    CHECK(r.metrics.at("stall_ms").value == doctest::Approx(4.0));
    CHECK(r.gaps == std::vector<std::string>{"missing"});
    CHECK(r.parse_failures.empty());
    CHECK_FALSE(r.complete());

    ExtractionSpec words{{{"w", "stdout", "warmup (\\w+)=", "", 1.0}}};
    CHECK(apply_spec(words, raw).parse_failures == std::vector<std::string>{"w"});
}

TEST_CASE("validate_spec rejects malformed rules") {
    std::vector<WantedMetric> wanted = {{"ops", "", ""}};
    CHECK_NOTHROW(validate_spec({{{"ops", "stdout", "ops=" + kNum, "", 1.0}}}, wanted));
    CHECK_THROWS_AS(validate_spec({{}}, wanted), MalformedSpec);
    CHECK_THROWS_AS(validate_spec({{{"ops", "stdout", "ops=[0-9]+", "", 1.0}}}, wanted), MalformedSpec);
    CHECK_THROWS_AS(validate_spec({{{"ops", "stdout", "(a)(b)", "", 1.0}}}, wanted), MalformedSpec);
    CHECK_THROWS_AS(validate_spec({{{"ops", "stdout", "ops=(", "", 1.0}}}, wanted), MalformedSpec);
    CHECK_THROWS_AS(validate_spec({{{"ops", "stderr", "ops=(1)", "", 1.0}}}, wanted), MalformedSpec);
    CHECK_THROWS_AS(validate_spec({{{"ops", "stdout", "ops=(1)", "", 0.0}}}, wanted), MalformedSpec);
    CHECK_THROWS_AS(validate_spec({{{"ops", "stdout", "(1)", "", 1.0}, {"ops", "stdout", "(2)", "", 1.0}}}, wanted),
                    MalformedSpec);
    CHECK_THROWS_AS(validate_spec({{{"other", "stdout", "(1)", "", 1.0}}}, wanted), MalformedSpec);
}

TEST_CASE("greedy backend synthesizes a spec and the extractor caches it") {
    oracle::TempDir tmp;
    const auto manifest = simkv_manifest();
    auto gw = LlmGateway(std::make_shared<GreedyBackend>(), fast());
    const auto prompts = PromptSet::defaults();
    Extractor ex(gw, prompts, manifest, "throughput_kops");

    auto c = manifest.schema.defaults();
    auto d = ex.extract(run_simkv(c, tmp, "n0000"), "n0000");
    CHECK(d.value("throughput_kops") == simkv_evaluate(c, {}, {2, 1024, 60}).throughput_kops);
    CHECK(d.value("p99_us") == simkv_evaluate(c, {}, {2, 1024, 60}).p99_us);
    CHECK(ex.stats().synthesis_calls == 1);
    CHECK(ex.active_spec().has_value());

    c.values["write_buffer_mb"] = std::int64_t{512};
    auto d2 = ex.extract(run_simkv(c, tmp, "n0001"), "n0001");
    CHECK(d2.value("throughput_kops") == simkv_evaluate(c, {}, {2, 1024, 60}).throughput_kops);
    CHECK(ex.stats().synthesis_calls == 1);
    CHECK(d2.summary.starts_with("throughput_kops="));
    CHECK(d2.summary.find("exit=ok") != std::string::npos);
}

TEST_CASE("three malformed specs force the fixed parsers") {
    oracle::TempDir tmp;
    const auto manifest = simkv_manifest();
    auto backend = std::make_shared<ScriptedBackend>(
        std::vector<TranscriptEntry>{synth("no json here"), synth(R"({"rules": []})"),
                                     synth(R"({"rules": [{"metric": "throughput_kops", "pattern": "x"}]})")});
    LlmGateway gw(backend, fast());
    const auto prompts = PromptSet::defaults();
    Extractor ex(gw, prompts, manifest, "throughput_kops");

    auto c = manifest.schema.defaults();
    auto d = ex.extract(run_simkv(c, tmp, "n0000"), "n0000");
    CHECK(ex.using_fixed_parsers());
    CHECK(ex.stats().synthesis_calls == 3);
    CHECK(ex.stats().malformed_specs == 3);
    CHECK(d.value("throughput_kops") == simkv_evaluate(c, {}, {2, 1024, 60}).throughput_kops);

    // sticky: no further model calls
    auto d2 = ex.extract(run_simkv(c, tmp, "n0001"), "n0001");
    CHECK(ex.stats().synthesis_calls == 3);
    CHECK(d2.value("throughput_kops") == d.value("throughput_kops"));
}

TEST_CASE("implausible value triggers one regeneration and is then recorded") {
    const auto manifest = simkv_manifest();
    auto backend = std::make_shared<ScriptedBackend>(
        std::vector<TranscriptEntry>{synth(valid_spec_text()), synth(valid_spec_text())});
    LlmGateway gw(backend, fast());
    const auto prompts = PromptSet::defaults();
    Extractor ex(gw, prompts, manifest, "throughput_kops");

    RawBenchmarkOutput raw;
    raw.stdout_text = "throughput_kops=1000000000\np99_us=0.2\n";
    auto d = ex.extract(raw, "n0000");
    CHECK(ex.stats().anomaly_regenerations == 1);
    CHECK(ex.stats().synthesis_calls == 2);
    REQUIRE(d.anomalies.size() == 1);
    CHECK(d.anomalies[0].find("exceeds plausible maximum") != std::string::npos);
    CHECK(d.summary.find("anomalies=1") != std::string::npos);
    CHECK(backend->fully_consumed());
}

TEST_CASE("failed runs produce empty digests") {
    const auto manifest = simkv_manifest();
    LlmGateway gw(std::make_shared<GreedyBackend>(), fast());
    const auto prompts = PromptSet::defaults();
    Extractor ex(gw, prompts, manifest, "throughput_kops");
    RawBenchmarkOutput raw;
    raw.stdout_text = "throughput_kops=10\n";
    raw.exit_status = ExitStatus::Timeout;
    auto d = ex.extract(raw, "n0003");
    CHECK(d.metrics.empty());
    CHECK(d.exit_status == ExitStatus::Timeout);
    CHECK(d.summary.find("run failed") != std::string::npos);
    CHECK(ex.stats().synthesis_calls == 0);
}

TEST_CASE("extractor state round trip") {
    oracle::TempDir tmp;
    const auto manifest = simkv_manifest();
    LlmGateway gw(std::make_shared<GreedyBackend>(), fast());
    const auto prompts = PromptSet::defaults();
    Extractor a(gw, prompts, manifest, "throughput_kops");
    a.extract(run_simkv(manifest.schema.defaults(), tmp, "n0000"), "n0000");
    Extractor b(gw, prompts, manifest, "throughput_kops");
    b.restore_state(a.state_to_json());
    CHECK(b.state_to_json() == a.state_to_json());
}

TEST_CASE("monitor samples become digest metrics") {
    RawBenchmarkOutput raw;
    raw.monitor_samples = {{1.0, 50.0, 100.0}, {2.0, 150.0, 300.0}};
    auto d = build_digest({{"x", {1.0, ""}}}, {}, raw, "n0001", "x");
    CHECK(d.value("monitor_cpu_mean_pct") == 100.0);
    CHECK(d.value("monitor_cpu_max_pct") == 150.0);
    CHECK(d.value("monitor_mem_max_mb") == 300.0);
}
