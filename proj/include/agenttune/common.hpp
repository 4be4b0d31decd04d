// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

namespace agenttune {

using json = nlohmann::json;

/// A single knob value. Integers and reals are kept apart so that schema
/// validation can report type mismatches.
using Scalar = std::variant<bool, std::int64_t, double, std::string>;

json scalar_to_json(const Scalar& value);
Scalar scalar_from_json(const json& value);
std::string scalar_to_string(const Scalar& value);
std::optional<double> scalar_as_number(const Scalar& value);

enum class Objective { Maximize, Minimize };

std::string_view to_string(Objective objective);
Objective objective_from_string(std::string_view text);

/// true when `candidate` is strictly better than `incumbent`.
bool better(double candidate, double incumbent, Objective objective);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

std::string trim(std::string_view text);

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace agenttune
