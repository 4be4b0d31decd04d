// SPDX-License-Identifier: Apache-2.0
#include <agenttune/adapter.hpp>

#include <cmath>
#include <limits>

namespace agenttune {

namespace {

constexpr double kBaseKops = 300.0;

double compression_factor(const std::string& codec) {
    if (codec == "snappy")
        return 1.05;
    if (codec == "zstd")
        return 0.90;
    return 1.00;
}

} // namespace

AdapterManifest simkv_manifest() {
    AdapterManifest m;
    m.name = "simkv";
    m.system_info = "SimKV 1.0 (deterministic simulated LSM key-value store)";
    m.schema = ParamSchema({
        {"write_buffer_mb", ParamType::Integer, 8, 1024, {}, "MB", {"memory-mb"}, std::int64_t{64},
         "memtable size; larger buffers absorb more writes before flushing"},
        {"block_cache_mb", ParamType::Integer, 8, 1024, {}, "MB", {"memory-mb"}, std::int64_t{8},
         "block cache for reads"},
        {"background_jobs", ParamType::Integer, 1, 8, {}, "threads", {}, std::int64_t{2},
         "flush and compaction threads"},
        {"compression", ParamType::Enum, 0, 0, {"none", "snappy", "zstd"}, "", {}, std::string("none"),
         "block compression codec"},
    });
    m.config_file_name = "config.json";
    m.config_file_template = "";
    m.command_template = "";
    const std::string number = R"(([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?))";
    m.fixed_parsers = {
        {"throughput_kops", "stdout", R"(^throughput_kops\s*=\s*)" + number, "kops/s", 1.0},
        {"p99_us", "stdout", R"(^p99_us\s*=\s*)" + number, "us", 1.0},
    };
    m.metrics = {
        {"throughput_kops", "kops/s", "operations completed per second, in thousands", Objective::Maximize, 0.0,
         10000.0},
        {"p99_us", "us", "99th percentile operation latency in microseconds", Objective::Minimize, 0.0, 1e7},
    };
    return m;
}

SimKvResult simkv_evaluate(const Configuration& config, const WorkloadSpec& workload,
                           const ResourceSpec& resources) {
    static const AdapterManifest manifest = simkv_manifest();
    try {
        workload.validate();
        resources.validate();
    } catch (const std::invalid_argument& e) {
        throw InvalidConfig(e.what());
    }
    auto verdict = validate_config(config, manifest.schema, resources, {},
                                   std::numeric_limits<double>::infinity());
    if (!verdict.ok())
        throw InvalidConfig(verdict.describe());

    const auto full = manifest.schema.complete(config);
    const double write_buffer = *full.number("write_buffer_mb");
    const double block_cache = *full.number("block_cache_mb");
    const double jobs = *full.number("background_jobs");
    const auto& codec = std::get<std::string>(*full.get("compression"));

    const double write_factor = (1.0 - std::exp(-write_buffer / 128.0)) * (1.0 - std::exp(-jobs / 2.0));
    const double read_factor = 1.0 - std::exp(-block_cache / 256.0);
    const double w = workload.write_fraction;

    SimKvResult r;
    r.throughput_kops = kBaseKops * (resources.cpu_cores / 2.0) * (w * write_factor + (1.0 - w) * read_factor) *
                        compression_factor(codec);
    r.p99_us = 200000.0 / (r.throughput_kops + 50.0);
    return r;
}

SimKvAdapter::SimKvAdapter() : manifest_(simkv_manifest()) {}

LaunchHandle SimKvAdapter::render_and_launch(const Configuration& config, const WorkloadSpec& workload,
                                             const ResourceSpec& resources, const LaunchContext& ctx) const {
    LaunchHandle handle;
    RawBenchmarkOutput out;
    if (!ctx.working_dir.empty())
        write_file(ctx.working_dir / manifest_.config_file_name, manifest_.schema.complete(config).to_json().dump(2));
    try {
        auto r = simkv_evaluate(config, workload, resources);
        out.stdout_text = "throughput_kops=" + format_double(r.throughput_kops) + "\n" +
                          "p99_us=" + format_double(r.p99_us) + "\n";
        out.exit_status = ExitStatus::Ok;
    } catch (const InvalidConfig& e) {
        out.stdout_text = std::string("simkv: invalid configuration: ") + e.what() + "\n";
        out.exit_status = ExitStatus::Nonzero;
    }
    handle.completed = std::move(out);
    handle.command_line = {"<simkv in-process>"};
    return handle;
}

} // namespace agenttune
