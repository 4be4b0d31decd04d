// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/common.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>

namespace agenttune {

class DegenerateBaseline : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One row of the per-iteration table.
struct IterationRow {
    int iteration = 0;
    double best = 0.0;                   ///< best target value so far
    std::int64_t cumulative_tokens = 0;
    int error_count = 0;                 ///< rejected + failed nodes so far

    json to_json() const;
    static IterationRow from_json(const json& j);
    bool operator==(const IterationRow&) const = default;
};

struct TuningMetrics {
    double mpg = 0.0;          ///< relative gain over the baseline
    std::int64_t tc95 = 0;     ///< tokens spent to reach 95% of the final best
    double te = 0.0;           ///< mpg per thousand tc95 tokens
    double twer = 0.0;         ///< errors per thousand tokens
};

inline constexpr double kPeakFraction = 0.95;

/// Closed-form metrics. For minimized targets the gain is baseline/best - 1.
TuningMetrics compute_metrics(double baseline, double best, std::int64_t tc95, std::int64_t total_tokens,
                              int error_count, Objective objective = Objective::Maximize);

/// First row whose best is within `fraction` of the last row's best
/// (>= fraction * final, or <= final / fraction when minimizing).
std::optional<std::size_t> first_near_peak(std::span<const IterationRow> rows, Objective objective,
                                           double fraction = kPeakFraction);

/// Metrics from the per-iteration table; tc95 is the cumulative token count
/// of first_near_peak.
TuningMetrics compute_metrics(std::span<const IterationRow> rows, double baseline, std::int64_t total_tokens,
                              int error_count, Objective objective = Objective::Maximize);

} // namespace agenttune
