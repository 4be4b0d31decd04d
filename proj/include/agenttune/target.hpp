// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/common.hpp>
#include <agenttune/extraction_spec.hpp>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace agenttune {

enum class ParamType { Integer, Real, Enum, Boolean };

std::string_view to_string(ParamType type);
ParamType param_type_from_string(std::string_view text);

struct ParamSpec {
    std::string name;
    ParamType type = ParamType::Integer;
    double min = 0.0; ///< numeric types only
    double max = 0.0;
    std::vector<std::string> allowed; ///< enum only
    std::string unit;
    std::set<std::string> tags;
    Scalar default_value;
    std::string description;

    bool numeric() const { return type == ParamType::Integer || type == ParamType::Real; }
};

class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Configuration;

/// Ordered parameter schema of one target. Order matters: it is the
/// "schema order" used by deterministic fallbacks.
class ParamSchema {
public:
    ParamSchema() = default;
    explicit ParamSchema(std::vector<ParamSpec> params);

    const std::vector<ParamSpec>& params() const { return params_; }
    const ParamSpec* find(std::string_view name) const;

    Configuration defaults() const;
    /// Copy of `config` with every missing parameter set to its default.
    Configuration complete(const Configuration& config) const;

    json to_json() const;
    static ParamSchema from_json(const json& j);

private:
    std::vector<ParamSpec> params_;
};

/// Parameter name to value. Keys are kept sorted so serialization and
/// validation never depend on insertion order.
struct Configuration {
    std::map<std::string, Scalar> values;
    std::optional<std::string> parent_id;

    const Scalar* get(std::string_view name) const;
    std::optional<double> number(std::string_view name) const;

    /// Names whose value differs between `a` and `b` (missing counts as different).
    static std::set<std::string> diff(const Configuration& a, const Configuration& b);

    json to_json() const; ///< values only
    static Configuration from_json(const json& j);

    bool operator==(const Configuration& other) const { return values == other.values; }
};

struct WorkloadSpec {
    std::string name = "fillrandom";
    double write_fraction = 1.0;
    std::int64_t op_count = 1000000;
    std::map<std::string, Scalar> extra;

    void validate() const; ///< throws std::invalid_argument
    json to_json() const;
    static WorkloadSpec from_json(const json& j);
};

struct ResourceSpec {
    int cpu_cores = 2;
    int memory_mb = 1024;
    int time_limit_s = 600;

    void validate() const; ///< throws std::invalid_argument
    json to_json() const;
    static ResourceSpec from_json(const json& j);
};

enum class ViolationKind { UnknownKey, TypeMismatch, OutOfRange, Blacklisted, BudgetCap };

std::string_view to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::string param;
    std::string message;

    auto operator<=>(const Violation&) const = default;
};

struct ValidationVerdict {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    bool has(ViolationKind kind) const;
    std::string describe() const;
};

inline constexpr double kDefaultBudgetCapFactor = 0.8;
inline constexpr std::string_view kMemoryTag = "memory-mb";

/// Mechanical layer-2 check. A blacklisted parameter counts as touched when
/// its value differs from the schema default. The memory-tagged sum of the
/// completed configuration must not exceed cap_factor * resources.memory_mb.
ValidationVerdict validate_config(const Configuration& config, const ParamSchema& schema,
                                  const ResourceSpec& resources,
                                  const std::set<std::string>& blacklist = {},
                                  double cap_factor = kDefaultBudgetCapFactor);

/// Sum of the values of memory-tagged parameters, defaults filled in.
double memory_sum(const Configuration& config, const ParamSchema& schema);

struct MetricSpec {
    std::string name;
    std::string unit;
    std::string description;
    Objective objective = Objective::Maximize;
    double plausible_min = 0.0;
    double plausible_max = 0.0;
};

struct AdapterManifest {
    std::string name;
    std::string system_info;
    ParamSchema schema;
    std::string config_file_name = "config.ini";
    std::string config_file_template;
    std::string command_template;
    std::vector<ExtractionRule> fixed_parsers;
    std::vector<MetricSpec> metrics;

    const MetricSpec* metric(std::string_view name) const;
    Objective objective_of(std::string_view metric) const; ///< Maximize when unknown

    json to_json() const;
    static AdapterManifest from_json(const json& j);
};

} // namespace agenttune
