/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <triples/triple.hpp>

namespace triples {

struct TaskDef {
    long task_id{0};
    std::vector<std::string> argv;
    EnvList extra_env;

    friend bool operator==(const TaskDef&, const TaskDef&) = default;
};

/// Task queues for every slot in the grid, plus the slot bindings.
///
/// `queues` is indexed by global slot index (node-major), i.e. the queue of
/// (node n, slot s) is `queues[n * nppn + s]`.
struct LaunchPlan {
    TripleSpec triple;
    NodeSpec node;
    EnvNames names;
    std::vector<SlotBinding> bindings;
    std::vector<std::vector<TaskDef>> queues;

    [[nodiscard]] const std::vector<TaskDef>& queue(int node_index, int slot_index) const {
        return queues.at(static_cast<std::size_t>(node_index) * triple.nppn + slot_index);
    }

    [[nodiscard]] const SlotBinding& binding(int node_index, int slot_index) const {
        return bindings.at(static_cast<std::size_t>(node_index) * triple.nppn + slot_index);
    }

    [[nodiscard]] std::size_t task_count() const noexcept;
};

/**
 * @brief Deal tasks cyclically onto the slot grid.
 *
 * Task i goes to global slot `i mod (nnode * nppn)`; input order is kept
 * within every queue. Throws EmptyWorkload, NonPositiveField, or BadWorkload
 * (duplicate task id or empty argv).
 */
[[nodiscard]] LaunchPlan build_plan(
    const std::vector<TaskDef>& tasks,
    const TripleSpec& triple,
    const NodeSpec& node,
    const EnvNames& names = {}
);

/// POSIX sh quoting of a single word.
[[nodiscard]] std::string shell_quote(const std::string& word);

/**
 * @brief Generate the launch script for one node.
 *
 * Every slot becomes one backgrounded subshell that exports the slot
 * environment and runs its queue in order; the script ends with `wait`.
 * Each task writes `task_<id>.out` / `task_<id>.err` under `$TRIPLES_LOG_DIR`
 * (default: current directory). A failing task does not stop its queue.
 * Output depends only on the plan. Throws Error(BadNodeIndex).
 */
[[nodiscard]] std::string emit_script(const LaunchPlan& plan, int node_index);

struct PlanSummary {
    TripleSpec triple;
    NodeSpec node;
    std::size_t tasks{0};
    long slots{0};
    std::vector<std::size_t> queue_lengths;  // per global slot
    std::map<int, long> gpu_slot_counts;     // per node; identical on all nodes

    friend bool operator==(const PlanSummary&, const PlanSummary&) = default;
};

[[nodiscard]] PlanSummary plan_summary(const LaunchPlan& plan);

/// Pretty-printed JSON with a stable key order.
[[nodiscard]] std::string to_json(const PlanSummary& summary);
[[nodiscard]] PlanSummary plan_summary_from_json(const std::string& text);

/**
 * @brief Load a workload file.
 *
 * Two formats are accepted. A file whose first non-blank line starts with
 * `{` is JSON lines: one `{"task_id": N, "argv": [...], "env": {...}}` object
 * per line (`task_id` and `env` optional). Otherwise every non-blank line not
 * starting with `#` is a shell command and becomes `/bin/sh -c <line>`.
 * Task ids default to the 0-based line order of the tasks.
 */
[[nodiscard]] std::vector<TaskDef> load_workload(const std::filesystem::path& path);
[[nodiscard]] std::vector<TaskDef> parse_workload(const std::string& text);

/// `count` placeholder tasks running `true`, for simulation-only workloads.
[[nodiscard]] std::vector<TaskDef> placeholder_workload(std::size_t count);

}  // namespace triples
