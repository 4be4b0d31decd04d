// SPDX-License-Identifier: Apache-2.0
#include <agenttune/adapter.hpp>

#include <fmt/format.h>

namespace agenttune {

std::map<std::string, std::string> template_values(const Configuration& config, const WorkloadSpec& workload,
                                                   const ResourceSpec& resources,
                                                   const std::filesystem::path& config_file,
                                                   const std::filesystem::path& dir) {
    std::map<std::string, std::string> v;
    for (const auto& [k, value] : workload.extra)
        v[k] = scalar_to_string(value);
    for (const auto& [k, value] : config.values)
        v[k] = scalar_to_string(value);
    v["file"] = config_file.string();
    v["dir"] = dir.string();
    v["workload"] = workload.name;
    v["op_count"] = std::to_string(workload.op_count);
    v["write_fraction"] = format_double(workload.write_fraction);
    v["cpu_cores"] = std::to_string(resources.cpu_cores);
    v["memory_mb"] = std::to_string(resources.memory_mb);
    v["time_limit_s"] = std::to_string(resources.time_limit_s);
    return v;
}

std::string render_template(std::string_view text, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
            out += '{';
            ++i;
        } else if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
            out += '}';
            ++i;
        } else if (c == '{') {
            auto close = text.find('}', i);
            if (close == std::string_view::npos)
                throw LaunchFailure(fmt::format("template error: unterminated placeholder at offset {}", i));
            auto name = std::string(text.substr(i + 1, close - i - 1));
            auto it = values.find(name);
            if (it == values.end())
                throw LaunchFailure(fmt::format("template error: unknown placeholder {{{}}}", name));
            out += it->second;
            i = close;
        } else {
            out += c;
        }
    }
    return out;
}

std::vector<std::string> split_command(std::string_view command) {
    std::vector<std::string> args;
    std::string current;
    bool in_token = false;
    char quote = 0;
    for (char c : command) {
        if (quote) {
            if (c == quote)
                quote = 0;
            else
                current += c;
        } else if (c == '\'' || c == '"') {
            quote = c;
            in_token = true;
        } else if (c == ' ' || c == '\t' || c == '\n') {
            if (in_token) {
                args.push_back(std::move(current));
                current.clear();
                in_token = false;
            }
        } else {
            current += c;
            in_token = true;
        }
    }
    if (quote)
        throw LaunchFailure("template error: unbalanced quote in command");
    if (in_token)
        args.push_back(std::move(current));
    return args;
}

ExternalProcessAdapter::ExternalProcessAdapter(AdapterManifest manifest) : manifest_(std::move(manifest)) {
    if (manifest_.command_template.empty())
        throw AdapterError(fmt::format("adapter '{}' has no command template", manifest_.name));
}

LaunchHandle ExternalProcessAdapter::render_and_launch(const Configuration& config, const WorkloadSpec& workload,
                                                       const ResourceSpec& resources,
                                                       const LaunchContext& ctx) const {
    if (!ctx.sandbox)
        throw LaunchFailure("no sandbox available for external launch");
    const auto full = manifest_.schema.complete(config);
    const auto config_file = ctx.working_dir / manifest_.config_file_name;
    const auto values = template_values(full, workload, resources, config_file, ctx.working_dir);

    std::string body;
    if (manifest_.config_file_template.empty()) {
        for (const auto& [k, v] : full.values)
            body += k + "=" + scalar_to_string(v) + "\n";
    } else {
        body = render_template(manifest_.config_file_template, values);
    }
    write_file(config_file, body);

    LaunchHandle handle;
    handle.command_line = split_command(render_template(manifest_.command_template, values));
    if (handle.command_line.empty())
        throw LaunchFailure("template error: command renders to nothing");

    SpawnRequest req;
    req.argv = handle.command_line;
    req.working_dir = ctx.working_dir;
    req.limits = resources;
    req.stdout_path = ctx.working_dir / "stdout.txt";
    req.stderr_path = ctx.working_dir / "stderr.txt";
    handle.process = ctx.sandbox->spawn(req);
    return handle;
}

std::unique_ptr<TargetAdapter> resolve_adapter(const std::string& target) {
    if (target == "simkv")
        return std::make_unique<SimKvAdapter>();
    std::filesystem::path path(target);
    if (!std::filesystem::is_regular_file(path))
        throw AdapterError(fmt::format("unknown target '{}': not a built-in and no manifest file there", target));
    try {
        auto manifest = AdapterManifest::from_json(json::parse(read_file(path)));
        return std::make_unique<ExternalProcessAdapter>(std::move(manifest));
    } catch (const AdapterError&) {
        throw;
    } catch (const std::exception& e) {
        throw AdapterError(fmt::format("bad adapter manifest {}: {}", target, e.what()));
    }
}

} // namespace agenttune
