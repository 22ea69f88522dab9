/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <triples/plan.hpp>

namespace triples {

enum class FailureClass { None, Oom, Generic, Timeout };

[[nodiscard]] std::string_view to_string(FailureClass c) noexcept;

struct TaskResult {
    long task_id{0};
    int slot_index{0};
    std::optional<int> gpu_index;
    double start_ms{0};  // monotonic, relative to run start
    double end_ms{0};
    int exit_status{0};  // 128 + signal for signalled children, -1 if never spawned
    FailureClass failure{FailureClass::None};

    [[nodiscard]] bool oom() const noexcept {
        return failure == FailureClass::Oom;
    }

    [[nodiscard]] double duration_ms() const noexcept {
        return end_ms - start_ms;
    }
};

struct RunReport {
    PlanSummary plan;
    int node_index{0};
    std::vector<TaskResult> results;  // sorted by task_id
    double elapsed_ms{0};
    int max_observed_concurrency{0};
    std::string started_at;  // wall clock, ISO 8601 UTC

    [[nodiscard]] int failures() const noexcept;
};

/// Substrings (case-insensitive) that mark a failure as out-of-memory.
[[nodiscard]] const std::vector<std::string>& default_oom_patterns();

/// Pattern-based; call only for failed tasks. Timeouts are classified by the
/// executor itself, never here.
[[nodiscard]] FailureClass classify_failure(
    int exit_status,
    std::string_view stderr_tail,
    const std::vector<std::string>& patterns = default_oom_patterns()
);

struct ExecOptions {
    std::filesystem::path log_dir{"."};
    std::optional<std::chrono::milliseconds> task_timeout;
    std::vector<std::string> oom_patterns{default_oom_patterns()};
    std::size_t stderr_tail_bytes{4096};
};

/**
 * @brief Run one node's slot queues with `nppn` concurrent worker lanes.
 *
 * Each lane runs its queue in order, spawning every task with the slot
 * environment, the task-id variable and the task's extra environment layered
 * over the launcher's own environment. stdout/stderr go to
 * `<log_dir>/task_<id>.out|.err`. Failed, unspawnable or timed-out tasks are
 * recorded and the lane moves on. Throws Error(BadNodeIndex).
 */
[[nodiscard]] RunReport run_plan(
    const LaunchPlan& plan, int node_index, const ExecOptions& options = {}
);

/// Largest number of simultaneously open [start, end) intervals.
[[nodiscard]] int max_concurrency(const std::vector<TaskResult>& results);

/// Launcher exit status: 0 when every task succeeded, else min(failures, 125).
[[nodiscard]] int launcher_exit_status(const RunReport& report) noexcept;

[[nodiscard]] std::string to_json(const RunReport& report);
[[nodiscard]] RunReport run_report_from_json(const std::string& text);

}  // namespace triples
