// SPDX-License-Identifier: Apache-2.0
#include <agenttune/metrics.hpp>

#include <fmt/format.h>

namespace agenttune {

json IterationRow::to_json() const {
    return {{"iteration", iteration}, {"best", best}, {"cumulative_tokens", cumulative_tokens},
            {"error_count", error_count}};
}

IterationRow IterationRow::from_json(const json& j) {
    return {j.at("iteration").get<int>(), j.at("best").get<double>(), j.at("cumulative_tokens").get<std::int64_t>(),
            j.at("error_count").get<int>()};
}

TuningMetrics compute_metrics(double baseline, double best, std::int64_t tc95, std::int64_t total_tokens,
                              int error_count, Objective objective) {
    if (!(baseline > 0.0))
        throw DegenerateBaseline(fmt::format("baseline {} is not positive", baseline));
    if (objective == Objective::Minimize && !(best > 0.0))
        throw DegenerateBaseline(fmt::format("best value {} is not positive", best));
    TuningMetrics m;
    m.mpg = objective == Objective::Maximize ? (best - baseline) / baseline : (baseline - best) / best;
    m.tc95 = tc95;
    m.te = tc95 > 0 ? m.mpg / (static_cast<double>(tc95) / 1000.0) : 0.0;
    m.twer = total_tokens > 0 ? error_count / (static_cast<double>(total_tokens) / 1000.0) : 0.0;
    return m;
}

std::optional<std::size_t> first_near_peak(std::span<const IterationRow> rows, Objective objective,
                                           double fraction) {
    if (rows.empty())
        return std::nullopt;
    const double peak = rows.back().best;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const bool near = objective == Objective::Maximize ? rows[i].best >= fraction * peak
                                                           : rows[i].best <= peak / fraction;
        if (near)
            return i;
    }
    return rows.size() - 1;
}

TuningMetrics compute_metrics(std::span<const IterationRow> rows, double baseline, std::int64_t total_tokens,
                              int error_count, Objective objective) {
    if (rows.empty())
        throw std::invalid_argument("metrics need at least one iteration row");
    const auto idx = *first_near_peak(rows, objective);
    return compute_metrics(baseline, rows.back().best, rows[idx].cumulative_tokens, total_tokens, error_count,
                           objective);
}

} // namespace agenttune
