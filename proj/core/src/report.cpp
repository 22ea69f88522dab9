/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#include <triples/report.hpp>

#include <fmt/format.h>

namespace triples {

SpeedupTable compute_speedup(const std::map<int, double>& elapsed_by_nppn, std::optional<int> baseline) {
    if (elapsed_by_nppn.empty()) {
        throw Error(ErrorCode::MissingBaseline, "no runs to compare");
    }
    int base = baseline.value_or(elapsed_by_nppn.begin()->first);
    auto it = elapsed_by_nppn.find(base);
    if (it == elapsed_by_nppn.end()) {
        throw Error(ErrorCode::MissingBaseline, fmt::format("baseline NPPN={} not among the runs", base));
    }
    const double base_elapsed = it->second;

    SpeedupTable table;
    for (const auto& [nppn, elapsed] : elapsed_by_nppn) {
        SpeedupRow row;
        row.nppn = nppn;
        row.total_elapsed_s = elapsed;
        row.speedup = nppn == base ? 1.0 : base_elapsed / elapsed;
        table.push_back(row);
    }
    return table;
}

SpeedupTable build_speedup_table(const std::vector<RunRecord>& runs, std::optional<int> baseline) {
    std::map<int, double> elapsed;
    for (const auto& r : runs) {
        elapsed[r.nppn] = r.elapsed_s;
    }
    auto table = compute_speedup(elapsed, baseline);
    for (auto& row : table) {
        for (const auto& r : runs) {
            if (r.nppn != row.nppn) {
                continue;
            }
            row.failures = r.failures;
            if (!r.telemetry.samples.empty()) {
                row.gpu_load = series_stats(r.telemetry.samples, Metric{Metric::Kind::GpuLoad, 0});
                row.gpu_mem_mib = series_stats(r.telemetry.samples, Metric{Metric::Kind::GpuMem, 0});
            }
        }
    }
    return table;
}

std::string to_csv(const SpeedupTable& table) {
    std::string out =
        "nppn,total_elapsed_s,speedup,gpu_load_min,gpu_load_avg,gpu_load_max,"
        "gpu_mem_min_mib,gpu_mem_avg_mib,gpu_mem_max_mib,failures\n";
    auto stats = [](const std::optional<SeriesStats>& s) {
        return s ? fmt::format("{},{},{}", s->min, s->avg, s->max) : std::string(",,");
    };
    for (const auto& row : table) {
        out += fmt::format(
            "{},{},{},{},{},{}\n",
            row.nppn,
            row.total_elapsed_s,
            row.speedup,
            stats(row.gpu_load),
            stats(row.gpu_mem_mib),
            row.failures
        );
    }
    return out;
}

std::string format_table(const SpeedupTable& table) {
    std::string out = fmt::format(
        "{:>5} {:>12} {:>8} {:>20} {:>22} {:>8}\n",
        "NPPN",
        "elapsed (s)",
        "speedup",
        "GPU load min/avg/max",
        "GPU mem GB min/avg/max",
        "failures"
    );
    for (const auto& row : table) {
        std::string load = "-";
        std::string mem = "-";
        if (row.gpu_load) {
            load = fmt::format("{:.2f}/{:.2f}/{:.2f}", row.gpu_load->min, row.gpu_load->avg, row.gpu_load->max);
        }
        if (row.gpu_mem_mib) {
            mem = fmt::format(
                "{:.2f}/{:.2f}/{:.2f}",
                row.gpu_mem_mib->min / 1024.0,
                row.gpu_mem_mib->avg / 1024.0,
                row.gpu_mem_mib->max / 1024.0
            );
        }
        out += fmt::format(
            "{:>5} {:>12.2f} {:>8.2f} {:>20} {:>22} {:>8}\n",
            row.nppn,
            row.total_elapsed_s,
            row.speedup,
            load,
            mem,
            row.failures
        );
    }
    return out;
}

}  // namespace triples
