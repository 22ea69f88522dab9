/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

/**
 * @file gpusim.hpp
 * @brief Discrete-event model of independent tasks sharing GPUs.
 *
 * Each slot runs its queue in order on its pinned GPU. While k tasks compute
 * on the same GPU, each progresses at 1/slowdown(k) of its solo rate. GPU
 * memory is checked once, at launch: a task that does not fit in the device's
 * free memory fails as OOM on the spot and its slot moves to the next task.
 * Simultaneous events are processed by (time, task_id).
 *
 * Optional `startup_s` models process initialization: the task holds its
 * memory reservation but shows no resident memory or load and does no work
 * until startup completes. It defaults to 0.
 */

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <triples/plan.hpp>
#include <triples/telemetry.hpp>

namespace triples::sim {

/// Maps co-resident task count k >= 1 to a multiplicative slowdown >= 1.
class SlowdownFn {
  public:
    SlowdownFn() : SlowdownFn("constant", [](int) { return 1.0; }) {}

    SlowdownFn(std::string name, std::function<double(int)> fn)
        : name_(std::move(name)), fn_(std::move(fn)) {}

    [[nodiscard]] double operator()(int k) const {
        return fn_(k);
    }

    [[nodiscard]] const std::string& name() const noexcept {
        return name_;
    }

  private:
    std::string name_;
    std::function<double(int)> fn_;
};

struct SlowdownParams {
    /// (k, slowdown) knots for the piecewise-linear model.
    std::vector<std::pair<int, double>> table;
    /// Concurrent kernel capacity c for the saturating model.
    double capacity{1.0};
};

/**
 * @brief Named slowdown models.
 *
 * Built in:
 *  - `constant`: slowdown(k) = 1.
 *  - `piecewise`: linear interpolation between table knots, constant beyond
 *    the last knot. The first knot must be (1, 1.0).
 *  - `saturating`: slowdown(k) = max(1, k / capacity).
 */
class SlowdownRegistry {
  public:
    using Factory = std::function<SlowdownFn(const SlowdownParams&)>;

    [[nodiscard]] static SlowdownRegistry& builtin();

    void add(std::string name, Factory factory);

    /// Throws Error(BadProfile) for an unknown name or invalid parameters.
    [[nodiscard]] SlowdownFn make(std::string_view name, const SlowdownParams& params = {}) const;

    [[nodiscard]] std::vector<std::string> names() const;

  private:
    std::map<std::string, Factory, std::less<>> factories_;
};

/// Checks slowdown(1) == 1 and monotonicity for k in [1, k_max].
void check_slowdown(const SlowdownFn& fn, int k_max = 256);

struct SimTaskProfile {
    double base_duration_s{1.0};
    long mem_mib{1};
    SlowdownFn slowdown;
    double gpu_util{1.0};  // utilization of a GPU running this task alone
    double startup_s{0.0};
    double cpu_per_task{1.0};
    long host_mem_mib{0};
};

/// Throws Error(BadProfile).
void check_profile(const SimTaskProfile& profile);

/// Built-in profiles: "uniform", "mnist", "imagenet".
[[nodiscard]] SimTaskProfile preset_profile(std::string_view name);
[[nodiscard]] std::vector<std::string> preset_names();

/// Profile (and optional node) loaded from a JSON simulation config.
struct SimConfig {
    SimTaskProfile profile;
    std::optional<NodeSpec> node;
};

[[nodiscard]] SimConfig parse_sim_config(const std::string& json_text);

enum class TaskStatus { Done, Oom };

struct SimTask {
    long task_id{0};
    int node_index{0};
    int slot_index{0};
    std::optional<int> gpu;
    double start_s{0};
    double end_s{0};
    TaskStatus status{TaskStatus::Done};

    [[nodiscard]] double duration_s() const noexcept {
        return end_s - start_s;
    }
};

struct DeviceState {
    double util{0};
    long mem_mib{0};    // resident (past startup)
    long reserved_mib{0};
    int running{0};

    friend bool operator==(const DeviceState&, const DeviceState&) = default;
};

/// Node state from `t` until the next snapshot.
struct NodeSnapshot {
    double t{0};
    int active_tasks{0};
    std::vector<DeviceState> devices;
};

struct SimOutcome {
    NodeSpec node;
    double cpu_per_task{1.0};
    long host_mem_mib{0};
    std::vector<SimTask> tasks;                     // sorted by task_id
    double total_elapsed_s{0};
    std::vector<std::vector<NodeSnapshot>> traces;  // per node

    [[nodiscard]] int failures() const noexcept;

    /// Time-weighted mean of the node GPU load over [0, total_elapsed_s].
    [[nodiscard]] double mean_gpu_load(int node_index = 0) const;
};

/**
 * @brief Run the plan's slot queues through the contention model.
 *
 * Deterministic in its inputs. Slots on GPU-less nodes never contend.
 */
[[nodiscard]] SimOutcome simulate(const LaunchPlan& plan, const SimTaskProfile& profile);

/// Node snapshots sampled at k * interval_s for k = 0 .. ceil(elapsed / interval_s),
/// so the last sample shows the drained node. Empty outcome, empty trace.
[[nodiscard]] TelemetrySeries synthetic_trace(
    const SimOutcome& outcome, double interval_s, int node_index = 0
);

/// Number of decreases of node GPU memory between consecutive samples.
[[nodiscard]] int count_memory_dips(const TelemetrySeries& series);

struct SweepTemplate {
    std::vector<TaskDef> tasks;
    int nnode{1};
};

struct SweepRow {
    int nppn{0};
    TripleSpec triple;
    double elapsed_s{0};
    double speedup{1};
    double avg_gpu_load{0};  // time-weighted
    int failures{0};
    SimOutcome outcome;
};

/// NTPP for a node and NPPN: cores / nppn, at least 1.
[[nodiscard]] int threads_for(const NodeSpec& node, int nppn);

/**
 * @brief One simulation per NPPN value, sorted by NPPN.
 *
 * Triples are (nnode, nppn, threads_for(node, nppn)); speedup is relative to
 * the smallest NPPN. Throws Error(ParseError) for an empty list.
 */
[[nodiscard]] std::vector<SweepRow> sweep(
    const SweepTemplate& tmpl, const SimTaskProfile& profile, const NodeSpec& node, std::vector<int> nppn_list
);

[[nodiscard]] std::string to_json(const SimOutcome& outcome);

}  // namespace triples::sim
