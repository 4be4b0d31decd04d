// SPDX-License-Identifier: Apache-2.0
#include <agenttune/common.hpp>

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace agenttune {

json scalar_to_json(const Scalar& value) {
    return std::visit([](const auto& v) { return json(v); }, value);
}

Scalar scalar_from_json(const json& value) {
    switch (value.type()) {
    case json::value_t::boolean:
        return value.get<bool>();
    case json::value_t::number_integer:
    case json::value_t::number_unsigned:
        return value.get<std::int64_t>();
    case json::value_t::number_float:
        return value.get<double>();
    case json::value_t::string:
        return value.get<std::string>();
    default:
        throw std::invalid_argument("not a scalar value: " + value.dump());
    }
}

std::string scalar_to_string(const Scalar& value) {
    struct Visitor {
        std::string operator()(bool v) const { return v ? "true" : "false"; }
        std::string operator()(std::int64_t v) const { return std::to_string(v); }
        std::string operator()(double v) const { return format_double(v); }
        std::string operator()(const std::string& v) const { return v; }
    };
    return std::visit(Visitor{}, value);
}

std::optional<double> scalar_as_number(const Scalar& value) {
    if (const auto* i = std::get_if<std::int64_t>(&value))
        return static_cast<double>(*i);
    if (const auto* d = std::get_if<double>(&value))
        return *d;
    return std::nullopt;
}

std::string_view to_string(Objective objective) {
    return objective == Objective::Maximize ? "maximize" : "minimize";
}

Objective objective_from_string(std::string_view text) {
    if (text == "maximize" || text == "max")
        return Objective::Maximize;
    if (text == "minimize" || text == "min")
        return Objective::Minimize;
    throw std::invalid_argument(fmt::format("unknown objective direction '{}'", text));
}

bool better(double candidate, double incumbent, Objective objective) {
    return objective == Objective::Maximize ? candidate > incumbent : candidate < incumbent;
}

std::string format_double(double value) {
    return fmt::format("{}", value);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    // write-then-rename so a crash never leaves a half-written checkpoint
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out)
            throw IoError("short write on " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string trim(std::string_view text) {
    const auto* ws = " \t\r\n";
    auto b = text.find_first_not_of(ws);
    if (b == std::string_view::npos)
        return {};
    auto e = text.find_last_not_of(ws);
    return std::string(text.substr(b, e - b + 1));
}

} // namespace agenttune
