/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <triples/telemetry.hpp>

namespace triples {

struct SpeedupRow {
    int nppn{0};
    double total_elapsed_s{0};
    double speedup{1};
    std::optional<SeriesStats> gpu_load;
    std::optional<SeriesStats> gpu_mem_mib;
    int failures{0};
};

using SpeedupTable = std::vector<SpeedupRow>;

/**
 * @brief speedup(k) = elapsed(baseline) / elapsed(k), unrounded.
 *
 * The baseline defaults to the smallest NPPN present. Rows come back sorted
 * by NPPN. Throws Error(MissingBaseline) if the baseline is absent or the
 * input is empty.
 */
[[nodiscard]] SpeedupTable compute_speedup(
    const std::map<int, double>& elapsed_by_nppn, std::optional<int> baseline = std::nullopt
);

/// One finished run (executed or simulated) feeding the table.
struct RunRecord {
    int nppn{0};
    double elapsed_s{0};
    int failures{0};
    TelemetrySeries telemetry;
};

/// Speedups plus GPU load/memory statistics from each run's telemetry.
[[nodiscard]] SpeedupTable build_speedup_table(
    const std::vector<RunRecord>& runs, std::optional<int> baseline = std::nullopt
);

/// Full-precision CSV.
[[nodiscard]] std::string to_csv(const SpeedupTable& table);

/// Human-readable table: 2 decimals, memory in GB.
[[nodiscard]] std::string format_table(const SpeedupTable& table);

}  // namespace triples
