/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include <triples/executor.hpp>

#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace triples;

namespace {

const NodeSpec kV100Node{40, 2, 32768};

std::vector<TaskDef> sh_tasks(std::size_t n, const std::string& command) {
    std::vector<TaskDef> tasks;
    for (std::size_t i = 0; i < n; ++i) {
        tasks.push_back(TaskDef{static_cast<long>(i), {"/bin/sh", "-c", command}, {}});
    }
    return tasks;
}

std::string read(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST(RunPlan, SleepsOverlapTwoAtATime) {
    testing_support::TempDir dir("exec_sleep");
    auto plan = build_plan(sh_tasks(4, "sleep 1"), {1, 2, 1}, kV100Node);
    auto report = run_plan(plan, 0, ExecOptions{dir.path()});
    double expected = oracle::no_contention_elapsed(4, 2, 1000.0);
    EXPECT_NEAR(report.elapsed_ms, expected, 500.0);
    EXPECT_EQ(report.max_observed_concurrency, 2);
    EXPECT_EQ(report.results.size(), 4u);
    EXPECT_EQ(report.failures(), 0);
    EXPECT_EQ(launcher_exit_status(report), 0);
}

TEST(RunPlan, ExitStatusPassesThrough) {
    testing_support::TempDir dir("exec_status");
    auto plan = build_plan(sh_tasks(1, "exit 3"), {1, 1, 1}, kV100Node);
    auto report = run_plan(plan, 0, ExecOptions{dir.path()});
    ASSERT_EQ(report.results.size(), 1u);
    EXPECT_EQ(report.results[0].exit_status, 3);
    EXPECT_EQ(report.results[0].failure, FailureClass::Generic);
    EXPECT_FALSE(report.results[0].oom());
    EXPECT_EQ(launcher_exit_status(report), 1);
}

TEST(RunPlan, DevicePinningVisibleToChildren) {
    testing_support::TempDir dir("exec_pin");
    auto plan = build_plan(sh_tasks(24, "printf '%s' \"$CUDA_VISIBLE_DEVICES\""), {1, 24, 1}, kV100Node);
    auto report = run_plan(plan, 0, ExecOptions{dir.path()});
    std::map<std::string, int> seen;
    for (const auto& r : report.results) {
        auto value = read(dir.path() / ("task_" + std::to_string(r.task_id) + ".out"));
        ++seen[value];
        EXPECT_EQ(value, std::to_string(*r.gpu_index));
    }
    EXPECT_EQ(seen, (std::map<std::string, int>{{"0", 12}, {"1", 12}}));
}

TEST(RunPlan, FailuresDoNotStopTheQueue) {
    testing_support::TempDir dir("exec_continue");
    std::vector<TaskDef> tasks{
        {0, {"/bin/sh", "-c", "echo 'RuntimeError: CUDA out of memory.' >&2; exit 1"}, {}},
        {1, {"/nonexistent/binary"}, {}},
        {2, {"/bin/sh", "-c", "echo segmentation fault >&2; exit 139"}, {}},
        {3, {"/bin/sh", "-c", "exit 0"}, {}},
    };
    auto plan = build_plan(tasks, {1, 1, 1}, kV100Node);
    auto report = run_plan(plan, 0, ExecOptions{dir.path()});
    ASSERT_EQ(report.results.size(), 4u);
    EXPECT_EQ(report.results[0].failure, FailureClass::Oom);
    EXPECT_EQ(report.results[1].exit_status, -1);
    EXPECT_EQ(report.results[1].failure, FailureClass::Generic);
    EXPECT_NE(read(dir.path() / "task_1.err").find("cannot spawn"), std::string::npos);
    EXPECT_EQ(report.results[2].failure, FailureClass::Generic);
    EXPECT_EQ(report.results[3].exit_status, 0);
    EXPECT_EQ(report.results[3].failure, FailureClass::None);
    EXPECT_EQ(report.failures(), 3);
    EXPECT_EQ(launcher_exit_status(report), 3);
}

TEST(RunPlan, TimeoutKillsTask) {
    testing_support::TempDir dir("exec_timeout");
    auto plan = build_plan(sh_tasks(2, "sleep 5"), {1, 1, 1}, kV100Node);
    ExecOptions opts{dir.path()};
    opts.task_timeout = std::chrono::milliseconds(100);
    auto report = run_plan(plan, 0, opts);
    for (const auto& r : report.results) {
        EXPECT_EQ(r.failure, FailureClass::Timeout);
        EXPECT_NE(r.exit_status, 0);
    }
    EXPECT_LT(report.elapsed_ms, 2000.0);
}

TEST(RunPlan, QueueOrderAndConcurrencyBound) {
    testing_support::TempDir dir("exec_order");
    auto plan = build_plan(sh_tasks(9, "sleep 0.05"), {1, 3, 1}, kV100Node);
    auto report = run_plan(plan, 0, ExecOptions{dir.path()});
    ASSERT_EQ(report.results.size(), 9u);
    std::map<int, std::vector<const TaskResult*>> by_slot;
    for (const auto& r : report.results) {
        by_slot[r.slot_index].push_back(&r);
        EXPECT_GE(r.end_ms, r.start_ms);
    }
    for (auto& [slot, rs] : by_slot) {
        for (std::size_t k = 1; k < rs.size(); ++k) {
            EXPECT_GE(rs[k]->start_ms, rs[k - 1]->end_ms);
        }
    }
    EXPECT_LE(report.max_observed_concurrency, 3);
    double longest = 0;
    for (const auto& r : report.results) {
        longest = std::max(longest, r.duration_ms());
    }
    EXPECT_GE(report.elapsed_ms, longest);
}

TEST(RunPlan, ConcurrentSlotsSeeDistinctIdentity) {
    testing_support::TempDir dir("exec_identity");
    auto tasks = sh_tasks(
        4, "printf '%s %s %s %s' \"$TRIPLES_SLOT_INDEX\" \"$TRIPLES_TASK_ID\" \"$OMP_NUM_THREADS\" \"$SEED\""
    );
    for (auto& t : tasks) {
        t.extra_env = {{"SEED", "s" + std::to_string(t.task_id)}};
    }
    auto plan = build_plan(tasks, {1, 4, 10}, kV100Node);
    auto report = run_plan(plan, 0, ExecOptions{dir.path()});
    std::set<std::string> slots;
    for (const auto& r : report.results) {
        std::istringstream in(read(dir.path() / ("task_" + std::to_string(r.task_id) + ".out")));
        std::string slot, task, threads, seed;
        in >> slot >> task >> threads >> seed;
        slots.insert(slot);
        EXPECT_EQ(slot, std::to_string(r.slot_index));
        EXPECT_EQ(task, std::to_string(r.task_id));
        EXPECT_EQ(threads, "10");
        EXPECT_EQ(seed, "s" + std::to_string(r.task_id));
    }
    EXPECT_EQ(slots.size(), 4u);
}

TEST(RunPlan, BadNodeIndex) {
    auto plan = build_plan(sh_tasks(1, "true"), {1, 1, 1}, kV100Node);
    EXPECT_THROW((void)run_plan(plan, 1), Error);
}

TEST(ClassifyFailure, Patterns) {
    EXPECT_EQ(classify_failure(1, "RuntimeError: CUDA out of memory. Tried to allocate"), FailureClass::Oom);
    EXPECT_EQ(classify_failure(1, "CUDA_ERROR_OUT_OF_MEMORY"), FailureClass::Oom);
    EXPECT_EQ(classify_failure(139, "segmentation fault"), FailureClass::Generic);
    EXPECT_EQ(classify_failure(1, ""), FailureClass::Generic);
    EXPECT_EQ(classify_failure(1, "allocator exhausted", {"exhausted"}), FailureClass::Oom);
}

TEST(MaxConcurrency, MatchesBruteForce) {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> start(0, 100);
    std::uniform_real_distribution<double> len(0.5, 30);
    for (int iter = 0; iter < 200; ++iter) {
        std::vector<TaskResult> results;
        std::vector<std::pair<double, double>> intervals;
        int n = 1 + static_cast<int>(rng() % 25);
        for (int i = 0; i < n; ++i) {
            TaskResult r;
            r.start_ms = std::round(start(rng));
            r.end_ms = r.start_ms + std::round(len(rng));
            results.push_back(r);
            intervals.emplace_back(r.start_ms, r.end_ms);
        }
        EXPECT_EQ(max_concurrency(results), oracle::brute_force_overlap(intervals));
    }
}

TEST(MaxConcurrency, BackToBackIsNotOverlap) {
    std::vector<TaskResult> rs(2);
    rs[0].start_ms = 0;
    rs[0].end_ms = 10;
    rs[1].start_ms = 10;
    rs[1].end_ms = 20;
    EXPECT_EQ(max_concurrency(rs), 1);
}

TEST(LauncherExitStatus, CappedAt125) {
    RunReport report;
    report.results.resize(200);
    for (auto& r : report.results) {
        r.exit_status = 1;
        r.failure = FailureClass::Generic;
    }
    EXPECT_EQ(launcher_exit_status(report), 125);
}

TEST(RunReport, JsonRoundTrip) {
    testing_support::TempDir dir("exec_json");
    auto plan = build_plan(sh_tasks(3, "exit 0"), {1, 2, 1}, NodeSpec{4, 0, 0});
    auto report = run_plan(plan, 0, ExecOptions{dir.path()});
    auto text = to_json(report);
    auto back = run_report_from_json(text);
    EXPECT_EQ(to_json(back), text);
    EXPECT_FALSE(back.results[0].gpu_index);
}
