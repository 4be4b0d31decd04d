// SPDX-License-Identifier: Apache-2.0
#include <agenttune/target.hpp>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>

namespace agenttune {

std::string_view to_string(ParamType type) {
    switch (type) {
    case ParamType::Integer:
        return "integer";
    case ParamType::Real:
        return "real";
    case ParamType::Enum:
        return "enum";
    case ParamType::Boolean:
        return "boolean";
    }
    return "unknown";
}

ParamType param_type_from_string(std::string_view text) {
    if (text == "integer" || text == "int")
        return ParamType::Integer;
    if (text == "real" || text == "float" || text == "double")
        return ParamType::Real;
    if (text == "enum")
        return ParamType::Enum;
    if (text == "boolean" || text == "bool")
        return ParamType::Boolean;
    throw SchemaError(fmt::format("unknown parameter type '{}'", text));
}

namespace {

// Empty optional means the value is acceptable for the type.
std::optional<Violation> check_value(const ParamSpec& spec, const Scalar& value) {
    auto mismatch = [&](std::string_view expected) {
        return Violation{ViolationKind::TypeMismatch, spec.name,
                         fmt::format("{}: expected {}, got '{}'", spec.name, expected,
                                     scalar_to_string(value))};
    };
    auto out_of_range = [&](double v) {
        return Violation{ViolationKind::OutOfRange, spec.name,
                         fmt::format("{}: {} outside [{}, {}]", spec.name, format_double(v),
                                     format_double(spec.min), format_double(spec.max))};
    };
    switch (spec.type) {
    case ParamType::Integer: {
        const auto* v = std::get_if<std::int64_t>(&value);
        if (!v)
            return mismatch("integer");
        if (static_cast<double>(*v) < spec.min || static_cast<double>(*v) > spec.max)
            return out_of_range(static_cast<double>(*v));
        return std::nullopt;
    }
    case ParamType::Real: {
        auto v = scalar_as_number(value);
        if (!v)
            return mismatch("real");
        if (!std::isfinite(*v) || *v < spec.min || *v > spec.max)
            return out_of_range(*v);
        return std::nullopt;
    }
    case ParamType::Enum: {
        const auto* v = std::get_if<std::string>(&value);
        if (!v)
            return mismatch("enum string");
        if (std::find(spec.allowed.begin(), spec.allowed.end(), *v) == spec.allowed.end())
            return Violation{ViolationKind::OutOfRange, spec.name,
                             fmt::format("{}: value '{}' not in enum {{{}}}", spec.name, *v,
                                         fmt::join(spec.allowed, ", "))};
        return std::nullopt;
    }
    case ParamType::Boolean:
        if (!std::holds_alternative<bool>(value))
            return mismatch("boolean");
        return std::nullopt;
    }
    return std::nullopt;
}

} // namespace

// --- ParamSchema ------------------------------------------------------------

ParamSchema::ParamSchema(std::vector<ParamSpec> params) : params_(std::move(params)) {
    std::set<std::string> seen;
    for (const auto& p : params_) {
        if (p.name.empty())
            throw SchemaError("parameter without a name");
        if (!seen.insert(p.name).second)
            throw SchemaError(fmt::format("duplicate parameter '{}'", p.name));
        if (p.type == ParamType::Enum && p.allowed.empty())
            throw SchemaError(fmt::format("enum parameter '{}' has no values", p.name));
        if (p.numeric() && p.min > p.max)
            throw SchemaError(fmt::format("parameter '{}' has min > max", p.name));
        if (auto v = check_value(p, p.default_value))
            throw SchemaError(fmt::format("invalid default: {}", v->message));
    }
}

const ParamSpec* ParamSchema::find(std::string_view name) const {
    for (const auto& p : params_)
        if (p.name == name)
            return &p;
    return nullptr;
}

Configuration ParamSchema::defaults() const {
    Configuration c;
    for (const auto& p : params_)
        c.values[p.name] = p.default_value;
    return c;
}

Configuration ParamSchema::complete(const Configuration& config) const {
    Configuration c = config;
    for (const auto& p : params_)
        c.values.try_emplace(p.name, p.default_value);
    return c;
}

json ParamSchema::to_json() const {
    json out = json::array();
    for (const auto& p : params_) {
        json j{{"name", p.name},
               {"type", to_string(p.type)},
               {"unit", p.unit},
               {"tags", p.tags},
               {"default", scalar_to_json(p.default_value)}};
        if (p.numeric()) {
            j["min"] = p.min;
            j["max"] = p.max;
        }
        if (p.type == ParamType::Enum)
            j["values"] = p.allowed;
        if (!p.description.empty())
            j["description"] = p.description;
        out.push_back(std::move(j));
    }
    return out;
}

ParamSchema ParamSchema::from_json(const json& j) {
    auto parse_one = [](const std::string& name, const json& p) {
        ParamSpec spec;
        spec.name = name;
        spec.type = param_type_from_string(p.at("type").get<std::string>());
        if (spec.numeric()) {
            spec.min = p.at("min").get<double>();
            spec.max = p.at("max").get<double>();
        }
        if (spec.type == ParamType::Enum)
            spec.allowed = p.at("values").get<std::vector<std::string>>();
        spec.unit = p.value("unit", std::string());
        if (p.contains("tags"))
            spec.tags = p.at("tags").get<std::set<std::string>>();
        spec.default_value = scalar_from_json(p.at("default"));
        spec.description = p.value("description", std::string());
        return spec;
    };
    std::vector<ParamSpec> params;
    if (j.is_array()) {
        for (const auto& p : j)
            params.push_back(parse_one(p.at("name").get<std::string>(), p));
    } else if (j.is_object()) {
        for (const auto& [name, p] : j.items())
            params.push_back(parse_one(name, p));
    } else {
        throw SchemaError("schema must be an array or object");
    }
    return ParamSchema(std::move(params));
}

// --- Configuration ----------------------------------------------------------

const Scalar* Configuration::get(std::string_view name) const {
    auto it = values.find(std::string(name));
    return it == values.end() ? nullptr : &it->second;
}

std::optional<double> Configuration::number(std::string_view name) const {
    const auto* v = get(name);
    return v ? scalar_as_number(*v) : std::nullopt;
}

std::set<std::string> Configuration::diff(const Configuration& a, const Configuration& b) {
    std::set<std::string> out;
    for (const auto& [k, v] : a.values) {
        auto it = b.values.find(k);
        if (it == b.values.end() || it->second != v)
            out.insert(k);
    }
    for (const auto& [k, v] : b.values)
        if (!a.values.contains(k))
            out.insert(k);
    return out;
}

json Configuration::to_json() const {
    json out = json::object();
    for (const auto& [k, v] : values)
        out[k] = scalar_to_json(v);
    return out;
}

Configuration Configuration::from_json(const json& j) {
    if (!j.is_object())
        throw std::invalid_argument("configuration must be a JSON object");
    Configuration c;
    for (const auto& [k, v] : j.items())
        c.values[k] = scalar_from_json(v);
    return c;
}

// --- Workload / resources -----------------------------------------------------

void WorkloadSpec::validate() const {
    if (!(write_fraction >= 0.0 && write_fraction <= 1.0))
        throw std::invalid_argument("write_fraction must be in [0, 1]");
    if (op_count <= 0)
        throw std::invalid_argument("op_count must be positive");
}

json WorkloadSpec::to_json() const {
    json ex = json::object();
    for (const auto& [k, v] : extra)
        ex[k] = scalar_to_json(v);
    return {{"name", name}, {"write_fraction", write_fraction}, {"op_count", op_count}, {"extra", ex}};
}

WorkloadSpec WorkloadSpec::from_json(const json& j) {
    WorkloadSpec w;
    w.name = j.value("name", w.name);
    w.write_fraction = j.value("write_fraction", w.write_fraction);
    w.op_count = j.value("op_count", w.op_count);
    if (j.contains("extra"))
        for (const auto& [k, v] : j.at("extra").items())
            w.extra[k] = scalar_from_json(v);
    w.validate();
    return w;
}

void ResourceSpec::validate() const {
    if (cpu_cores < 1)
        throw std::invalid_argument("cpu_cores must be >= 1");
    if (memory_mb < 64)
        throw std::invalid_argument("memory_mb must be >= 64");
    if (time_limit_s <= 0)
        throw std::invalid_argument("time_limit_s must be positive");
}

json ResourceSpec::to_json() const {
    return {{"cpu_cores", cpu_cores}, {"memory_mb", memory_mb}, {"time_limit_s", time_limit_s}};
}

ResourceSpec ResourceSpec::from_json(const json& j) {
    ResourceSpec r;
    r.cpu_cores = j.value("cpu_cores", r.cpu_cores);
    r.memory_mb = j.value("memory_mb", r.memory_mb);
    r.time_limit_s = j.value("time_limit_s", r.time_limit_s);
    r.validate();
    return r;
}

// --- validation -------------------------------------------------------------

std::string_view to_string(ViolationKind kind) {
    switch (kind) {
    case ViolationKind::UnknownKey:
        return "unknown-key";
    case ViolationKind::TypeMismatch:
        return "type-mismatch";
    case ViolationKind::OutOfRange:
        return "out-of-range";
    case ViolationKind::Blacklisted:
        return "blacklisted";
    case ViolationKind::BudgetCap:
        return "budget-cap";
    }
    return "unknown";
}

bool ValidationVerdict::has(ViolationKind kind) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.kind == kind; });
}

std::string ValidationVerdict::describe() const {
    if (ok())
        return "ok";
    std::vector<std::string> parts;
    for (const auto& v : violations)
        parts.push_back(fmt::format("[{}] {}", to_string(v.kind), v.message));
    return fmt::format("{}", fmt::join(parts, "; "));
}

double memory_sum(const Configuration& config, const ParamSchema& schema) {
    double sum = 0.0;
    auto full = schema.complete(config);
    for (const auto& p : schema.params()) {
        if (!p.tags.contains(std::string(kMemoryTag)))
            continue;
        if (auto v = full.number(p.name))
            sum += *v;
    }
    return sum;
}

ValidationVerdict validate_config(const Configuration& config, const ParamSchema& schema,
                                  const ResourceSpec& resources, const std::set<std::string>& blacklist,
                                  double cap_factor) {
    ValidationVerdict verdict;
    bool memory_values_typed = true;
    for (const auto& [name, value] : config.values) {
        const auto* spec = schema.find(name);
        if (!spec) {
            verdict.violations.push_back(
                {ViolationKind::UnknownKey, name, fmt::format("{}: not a parameter of this target", name)});
            continue;
        }
        if (auto v = check_value(*spec, value)) {
            if (v->kind == ViolationKind::TypeMismatch && spec->tags.contains(std::string(kMemoryTag)))
                memory_values_typed = false;
            verdict.violations.push_back(std::move(*v));
        }
        if (blacklist.contains(name) && value != spec->default_value)
            verdict.violations.push_back({ViolationKind::Blacklisted, name,
                                          fmt::format("{}: blacklisted parameter may not be changed", name)});
    }
    if (memory_values_typed) {
        const double sum = memory_sum(config, schema);
        const double cap = cap_factor * static_cast<double>(resources.memory_mb);
        if (sum > cap + 1e-9)
            verdict.violations.push_back(
                {ViolationKind::BudgetCap, "",
                 fmt::format("memory-tagged parameters sum to {} MB, cap is {} MB", format_double(sum),
                             format_double(cap))});
    }
    std::sort(verdict.violations.begin(), verdict.violations.end());
    return verdict;
}

// --- manifest ---------------------------------------------------------------

const MetricSpec* AdapterManifest::metric(std::string_view name) const {
    for (const auto& m : metrics)
        if (m.name == name)
            return &m;
    return nullptr;
}

Objective AdapterManifest::objective_of(std::string_view name) const {
    const auto* m = metric(name);
    return m ? m->objective : Objective::Maximize;
}

json AdapterManifest::to_json() const {
    json parsers = json::array();
    for (const auto& r : fixed_parsers)
        parsers.push_back(agenttune::to_json(r));
    json ms = json::array();
    for (const auto& m : metrics)
        ms.push_back({{"name", m.name},
                      {"unit", m.unit},
                      {"description", m.description},
                      {"direction", to_string(m.objective)},
                      {"plausible", {m.plausible_min, m.plausible_max}}});
    return {{"name", name},
            {"system_info", system_info},
            {"schema", schema.to_json()},
            {"config_file_name", config_file_name},
            {"config_file_template", config_file_template},
            {"command_template", command_template},
            {"fixed_parsers", parsers},
            {"metrics", ms}};
}

AdapterManifest AdapterManifest::from_json(const json& j) {
    AdapterManifest m;
    m.name = j.at("name").get<std::string>();
    m.system_info = j.value("system_info", std::string());
    m.schema = ParamSchema::from_json(j.at("schema"));
    m.config_file_name = j.value("config_file_name", m.config_file_name);
    m.config_file_template = j.value("config_file_template", std::string());
    m.command_template = j.value("command_template", std::string());
    if (j.contains("fixed_parsers"))
        for (const auto& r : j.at("fixed_parsers"))
            m.fixed_parsers.push_back(rule_from_json(r));
    if (j.contains("metrics"))
        for (const auto& mj : j.at("metrics")) {
            MetricSpec ms;
            ms.name = mj.at("name").get<std::string>();
            ms.unit = mj.value("unit", std::string());
            ms.description = mj.value("description", std::string());
            ms.objective = objective_from_string(mj.value("direction", std::string("maximize")));
            if (mj.contains("plausible")) {
                ms.plausible_min = mj.at("plausible").at(0).get<double>();
                ms.plausible_max = mj.at("plausible").at(1).get<double>();
            }
            m.metrics.push_back(std::move(ms));
        }
    return m;
}

} // namespace agenttune
