// SPDX-License-Identifier: Apache-2.0
#include <agenttune/extractor.hpp>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

namespace agenttune {

std::optional<double> PerformanceDigest::value(std::string_view metric) const {
    auto it = metrics.find(std::string(metric));
    if (it == metrics.end())
        return std::nullopt;
    return it->second.value;
}

json PerformanceDigest::to_json() const {
    json m = json::object();
    for (const auto& [k, v] : metrics)
        m[k] = {{"value", v.value}, {"unit", v.unit}};
    return {{"metrics", m},
            {"summary", summary},
            {"anomalies", anomalies},
            {"source_node", source_node},
            {"exit_status", to_string(exit_status)}};
}

PerformanceDigest PerformanceDigest::from_json(const json& j) {
    PerformanceDigest d;
    for (const auto& [k, v] : j.at("metrics").items())
        d.metrics[k] = {v.at("value").get<double>(), v.value("unit", std::string())};
    d.summary = j.value("summary", std::string());
    d.anomalies = j.value("anomalies", std::vector<std::string>{});
    d.source_node = j.value("source_node", std::string());
    d.exit_status = exit_status_from_string(j.value("exit_status", std::string("ok")));
    return d;
}

namespace {

std::optional<std::string> first_capture(const std::regex& re, std::string_view text) {
    std::istringstream lines{std::string(text)};
    std::smatch m;
    for (std::string line; std::getline(lines, line);) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (std::regex_search(line, m, re))
            return m[1].str();
    }
    return std::nullopt;
}

std::optional<double> parse_real(const std::string& text) {
    auto t = trim(text);
    if (t.empty())
        return std::nullopt;
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size())
        return std::nullopt;
    return v;
}

} // namespace

ExtractionResult apply_spec(const ExtractionSpec& spec, const RawBenchmarkOutput& raw) {
    ExtractionResult result;
    for (const auto& rule : spec.rules) {
        std::regex re(rule.pattern, std::regex::ECMAScript);
        std::optional<std::string> captured;
        if (rule.source == "stdout") {
            captured = first_capture(re, raw.stdout_text);
        } else {
            const auto glob = rule.source.substr(4);
            for (const auto& [path, content] : raw.log_files) {
                if (::fnmatch(glob.c_str(), path.c_str(), 0) != 0)
                    continue;
                if ((captured = first_capture(re, content)))
                    break;
            }
        }
        if (!captured) {
            result.gaps.push_back(rule.metric);
            continue;
        }
        auto v = parse_real(*captured);
        if (!v) {
            result.parse_failures.push_back(rule.metric);
            continue;
        }
        result.metrics[rule.metric] = {*v * rule.scale, rule.unit};
    }
    return result;
}

std::map<std::string, Plausibility> plausibility_from(const AdapterManifest& manifest) {
    std::map<std::string, Plausibility> out;
    for (const auto& m : manifest.metrics)
        if (m.plausible_max > m.plausible_min)
            out[m.name] = {m.plausible_min, m.plausible_max};
    return out;
}

std::vector<std::string> check_values(const std::map<std::string, MetricValue>& metrics,
                                      const std::map<std::string, Plausibility>& plausibility) {
    std::vector<std::string> anomalies;
    for (const auto& [name, mv] : metrics) {
        if (!std::isfinite(mv.value)) {
            anomalies.push_back(fmt::format("{}: non-finite value", name));
            continue;
        }
        auto it = plausibility.find(name);
        if (it == plausibility.end())
            continue;
        if (mv.value > it->second.max)
            anomalies.push_back(fmt::format("{}={} exceeds plausible maximum {}", name, format_double(mv.value),
                                            format_double(it->second.max)));
        else if (mv.value < it->second.min)
            anomalies.push_back(fmt::format("{}={} below plausible minimum {}", name, format_double(mv.value),
                                            format_double(it->second.min)));
    }
    return anomalies;
}

PerformanceDigest build_digest(const std::map<std::string, MetricValue>& metrics, std::vector<std::string> anomalies,
                               const RawBenchmarkOutput& raw, const std::string& node_id, const std::string& target) {
    PerformanceDigest d;
    d.source_node = node_id;
    d.exit_status = raw.exit_status;
    d.anomalies = std::move(anomalies);
    if (raw.exit_status == ExitStatus::Ok) {
        // non-finite values never enter the digest; they stay listed as anomalies
        for (const auto& [k, v] : metrics)
            if (std::isfinite(v.value))
                d.metrics[k] = v;
        if (!raw.monitor_samples.empty()) {
            double sum = 0.0, cpu_max = 0.0, mem_max = 0.0;
            for (const auto& s : raw.monitor_samples) {
                sum += s.cpu_pct;
                cpu_max = std::max(cpu_max, s.cpu_pct);
                mem_max = std::max(mem_max, s.mem_mb);
            }
            d.metrics["monitor_cpu_mean_pct"] = {sum / static_cast<double>(raw.monitor_samples.size()), "%"};
            d.metrics["monitor_cpu_max_pct"] = {cpu_max, "%"};
            d.metrics["monitor_mem_max_mb"] = {mem_max, "MB"};
        }
    }
    auto v = d.value(target);
    d.summary = fmt::format("{}={}; exit={}; anomalies={}", target, v ? format_double(*v) : std::string("n/a"),
                            to_string(raw.exit_status), d.anomalies.size());
    return d;
}

// --- Extractor ----------------------------------------------------------------

Extractor::Extractor(LlmGateway& gateway, const PromptSet& prompts, const AdapterManifest& manifest, std::string target,
                     ExtractorOptions options)
    : gateway_(gateway), prompts_(prompts), manifest_(manifest), target_(std::move(target)), options_(options),
      plausibility_(plausibility_from(manifest)) {}

std::vector<WantedMetric> Extractor::wanted_metrics() const {
    std::vector<WantedMetric> out;
    for (const auto& m : manifest_.metrics)
        out.push_back({m.name, m.description, m.unit});
    if (std::none_of(out.begin(), out.end(), [&](const WantedMetric& w) { return w.name == target_; }))
        out.push_back({target_, "primary tuning target", ""});
    return out;
}

std::vector<std::string> Extractor::samples_of(const RawBenchmarkOutput& raw) const {
    std::vector<std::string> out;
    out.push_back("[stdout]\n" + raw.stdout_text.substr(0, options_.sample_chars));
    for (const auto& [path, content] : raw.log_files)
        out.push_back("[log:" + path + "]\n" + content.substr(0, options_.sample_chars));
    return out;
}

ExtractionSpec Extractor::synthesize_spec(std::span<const std::string> samples, std::span<const WantedMetric> wanted,
                                          std::string_view system_info, int max_attempts, std::string feedback) {
    if (samples.empty())
        throw std::invalid_argument("synthesize_spec needs at least one sample");
    json metrics = json::array();
    for (const auto& w : wanted)
        metrics.push_back({{"name", w.name}, {"description", w.description}, {"unit", w.unit}});
    json sample_json(std::vector<std::string>(samples.begin(), samples.end()));

    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        LlmRequest req;
        req.kind = RequestKind::SynthesizeExtraction;
        req.prompt = prompts_.extract.render({
            {"SYSTEM", std::string(system_info)},
            {"METRICS", fenced_block("metrics", metrics)},
            {"SAMPLES", fenced_block("samples", sample_json)},
            {"FEEDBACK", feedback.empty() ? std::string() : "Your previous attempt failed: " + feedback + "\n"},
        });
        LlmResponse resp;
        try {
            ++stats_.synthesis_calls;
            resp = gateway_.complete(req);
        } catch (const LlmError& e) {
            throw FallbackRequired(fmt::format("extraction synthesis unavailable: {}", e.what()));
        }
        try {
            auto payload = response_payload(resp.text);
            if (!payload)
                throw MalformedSpec("response holds no JSON payload");
            ExtractionSpec spec;
            try {
                spec = spec_from_json(*payload);
            } catch (const std::exception& e) {
                throw MalformedSpec(fmt::format("bad spec structure: {}", e.what()));
            }
            validate_spec(spec, wanted);
            return spec;
        } catch (const MalformedSpec& e) {
            ++stats_.malformed_specs;
            spdlog::debug("extraction spec attempt {} rejected: {}", attempt + 1, e.what());
            feedback = e.what();
        }
    }
    throw FallbackRequired(fmt::format("no valid extraction spec after {} attempts (last error: {})", max_attempts,
                                       feedback));
}

PerformanceDigest Extractor::extract(const RawBenchmarkOutput& raw, const std::string& node_id) {
    if (raw.exit_status != ExitStatus::Ok) {
        auto d = build_digest({}, {}, raw, node_id, target_);
        d.summary += "; run failed";
        return d;
    }

    const auto wanted = wanted_metrics();
    const auto samples = samples_of(raw);
    int attempts_left = options_.max_synthesis_attempts;
    bool anomaly_regeneration_left = true;
    std::string feedback;
    std::optional<ExtractionSpec> spec = fixed_mode_ ? std::nullopt : active_spec_;

    while (!fixed_mode_) {
        if (!spec) {
            if (attempts_left <= 0)
                break;
            const int before = stats_.synthesis_calls;
            try {
                spec = synthesize_spec(samples, wanted, manifest_.system_info, attempts_left, feedback);
                attempts_left -= stats_.synthesis_calls - before;
            } catch (const FallbackRequired& e) {
                spdlog::warn("node {}: {}; falling back to fixed parsers", node_id, e.what());
                break;
            }
        }
        auto result = apply_spec(*spec, raw);
        if (!result.complete()) {
            feedback = fmt::format("the extraction rules found no value for [{}] and unparsable text for [{}]",
                                   fmt::join(result.gaps, ", "), fmt::join(result.parse_failures, ", "));
            spec.reset();
            continue;
        }
        auto anomalies = check_values(result.metrics, plausibility_);
        if (!anomalies.empty() && anomaly_regeneration_left) {
            anomaly_regeneration_left = false;
            ++stats_.anomaly_regenerations;
            ++attempts_left;
            feedback = fmt::format("implausible values: {}", fmt::join(anomalies, "; "));
            spec.reset();
            continue;
        }
        active_spec_ = spec;
        auto d = build_digest(result.metrics, std::move(anomalies), raw, node_id, target_);
        d.summary = summarize(d);
        return d;
    }

    if (!fixed_mode_) {
        fixed_mode_ = true;
        active_spec_.reset();
        ++stats_.fallbacks;
    }
    auto result = apply_spec(ExtractionSpec{manifest_.fixed_parsers}, raw);
    auto anomalies = check_values(result.metrics, plausibility_);
    for (const auto& gap : result.gaps)
        if (gap == target_)
            anomalies.push_back(fmt::format("{}: not found by fixed parsers", gap));
    auto d = build_digest(result.metrics, std::move(anomalies), raw, node_id, target_);
    d.summary = summarize(d);
    return d;
}

std::string Extractor::summarize(const PerformanceDigest& digest) {
    if (!options_.llm_summary)
        return digest.summary;
    LlmRequest req;
    req.kind = RequestKind::SummarizeDigest;
    req.prompt = prompts_.summarize.render({
        {"TASK", fenced_block("task", {{"system", manifest_.name}, {"target", target_}})},
        {"DIGESTS", fenced_block("digest", digest.to_json())},
    });
    try {
        auto text = trim(gateway_.complete(req).text);
        return text.empty() ? digest.summary : digest.summary + " | " + text;
    } catch (const LlmError& e) {
        spdlog::debug("digest summary fell back to template: {}", e.what());
        return digest.summary;
    }
}

json Extractor::state_to_json() const {
    return {{"fixed_mode", fixed_mode_},
            {"spec", active_spec_ ? to_json(*active_spec_) : json(nullptr)},
            {"stats",
             {{"synthesis_calls", stats_.synthesis_calls},
              {"malformed_specs", stats_.malformed_specs},
              {"anomaly_regenerations", stats_.anomaly_regenerations},
              {"fallbacks", stats_.fallbacks}}}};
}

void Extractor::restore_state(const json& j) {
    fixed_mode_ = j.value("fixed_mode", false);
    if (j.contains("spec") && !j.at("spec").is_null())
        active_spec_ = spec_from_json(j.at("spec"));
    else
        active_spec_.reset();
    if (j.contains("stats")) {
        const auto& s = j.at("stats");
        stats_.synthesis_calls = s.value("synthesis_calls", 0);
        stats_.malformed_specs = s.value("malformed_specs", 0);
        stats_.anomaly_regenerations = s.value("anomaly_regenerations", 0);
        stats_.fallbacks = s.value("fallbacks", 0);
    }
}

} // namespace agenttune
