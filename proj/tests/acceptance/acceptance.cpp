/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */

// Acceptance suite: one PASS/FAIL line per criterion, with its runtime budget.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include <triples/executor.hpp>
#include <triples/gpusim.hpp>
#include <triples/plan.hpp>
#include <triples/report.hpp>
#include <triples/telemetry.hpp>
#include <triples/triple.hpp>

#include "oracles.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;
using namespace triples;

namespace {

const NodeSpec kV100Node{40, 2, 32768};

const std::vector<TripleSpec> kV100Triples{
    {1, 1, 40}, {1, 2, 20}, {1, 4, 10}, {1, 6, 6}, {1, 8, 5}, {1, 12, 3}, {1, 24, 1},
};

struct Outcome {
    bool ok{true};
    std::string detail;

    void check(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<TaskDef> sh_tasks(std::size_t n, const std::string& command) {
    std::vector<TaskDef> tasks;
    for (std::size_t i = 0; i < n; ++i) {
        tasks.push_back(TaskDef{static_cast<long>(i), {"/bin/sh", "-c", command}, {}});
    }
    return tasks;
}

sim::SimTaskProfile uniform(double base, long mem, sim::SlowdownFn slowdown = {}) {
    sim::SimTaskProfile p;
    p.base_duration_s = base;
    p.mem_mib = mem;
    p.slowdown = std::move(slowdown);
    return p;
}

Outcome reference_triples() {
    Outcome o;
    for (const auto& t : kV100Triples) {
        auto v = validate_triple(t, kV100Node, Oversubscription::Strict);
        o.check(v.status == Validation::Status::Ok, fmt::format("{} not valid", format_triple(t)));
        auto b = expand_slots(t, kV100Node);
        o.check(b.size() == static_cast<std::size_t>(t.nppn), fmt::format("{} binding count", format_triple(t)));
        std::map<int, int> per_gpu;
        for (const auto& s : b) {
            ++per_gpu[s.gpu_index.value_or(-1)];
            o.check(s.thread_count == t.ntpp, "thread count");
        }
        int lo = t.nppn;
        int hi = 0;
        for (int g = 0; g < kV100Node.gpus; ++g) {
            lo = std::min(lo, per_gpu[g]);
            hi = std::max(hi, per_gpu[g]);
        }
        o.check(hi - lo <= 1, fmt::format("{} unbalanced", format_triple(t)));
        if (t.nppn == 24) {
            o.check(per_gpu[0] == 12 && per_gpu[1] == 12, "(1,24,1) is not 12/12");
        }
    }
    return o;
}

Outcome plan_semantics() {
    Outcome o;
    auto serial = build_plan(placeholder_workload(24), {1, 1, 40}, kV100Node);
    o.check(serial.queues.size() == 1 && serial.queue(0, 0).size() == 24, "(1,1,40) is not one queue of 24");
    auto pair = build_plan(placeholder_workload(24), {1, 2, 20}, kV100Node);
    o.check(pair.queues.size() == 2 && pair.queue(0, 0).size() == 12 && pair.queue(0, 1).size() == 12,
            "(1,2,20) is not two queues of 12");

    std::mt19937 rng(2024);
    for (int iter = 0; iter < 500 && o.ok; ++iter) {
        long T = 1 + static_cast<long>(rng() % 200);
        int S = 1 + static_cast<int>(rng() % 64);
        auto plan = build_plan(placeholder_workload(static_cast<std::size_t>(T)), {1, S, 1}, NodeSpec{64, 2, 1024});
        std::vector<int> seen(static_cast<std::size_t>(T), 0);
        for (const auto& q : plan.queues) {
            auto len = static_cast<long>(q.size());
            o.check(len == T / S || len == (T + S - 1) / S, fmt::format("T={} S={} queue length {}", T, S, len));
            for (const auto& task : q) {
                ++seen[static_cast<std::size_t>(task.task_id)];
            }
        }
        for (int c : seen) {
            o.check(c == 1, fmt::format("T={} S={} not a partition", T, S));
        }
    }
    return o;
}

Outcome executor_concurrency() {
    Outcome o;
    for (int nppn : {1, 3, 6, 12}) {
        testing_support::TempDir dir("acc3");
        auto plan = build_plan(sh_tasks(12, "sleep 0.1"), {1, nppn, 1}, kV100Node);
        auto report = run_plan(plan, 0, ExecOptions{dir.path()});
        std::vector<std::pair<double, double>> intervals;
        for (const auto& r : report.results) {
            intervals.emplace_back(r.start_ms, r.end_ms);
        }
        int overlap = oracle::brute_force_overlap(intervals);
        double expected = oracle::no_contention_elapsed(12, nppn, 100.0);
        o.check(overlap <= nppn, fmt::format("nppn={} overlap {}", nppn, overlap));
        o.check(std::abs(report.elapsed_ms - expected) <= 0.5 * expected,
                fmt::format("nppn={} elapsed {:.1f} ms vs {:.0f} ms", nppn, report.elapsed_ms, expected));
        o.check(report.failures() == 0, fmt::format("nppn={} had failures", nppn));
    }
    return o;
}

Outcome env_pinning() {
    Outcome o;
    testing_support::TempDir dir("acc4");
    auto plan = build_plan(
        sh_tasks(24, "printf '%s %s' \"$CUDA_VISIBLE_DEVICES\" \"$OMP_NUM_THREADS\""), {1, 24, 1}, kV100Node
    );
    auto report = run_plan(plan, 0, ExecOptions{dir.path()});
    std::map<std::string, int> devices;
    for (const auto& r : report.results) {
        std::istringstream in(read(dir.path() / fmt::format("task_{}.out", r.task_id)));
        std::string device, threads;
        in >> device >> threads;
        ++devices[device];
        o.check(threads == "1", fmt::format("task {} thread count '{}'", r.task_id, threads));
    }
    o.check(devices == std::map<std::string, int>{{"0", 12}, {"1", 12}}, "device values are not 0x12 / 1x12");
    return o;
}

Outcome no_contention() {
    Outcome o;
    auto profile = uniform(300.0, 1024);
    for (int k : {1, 2, 4, 8}) {
        auto out = sim::simulate(build_plan(placeholder_workload(24), {1, k, 1}, kV100Node), profile);
        double expected = oracle::no_contention_elapsed(24, k, 300.0);
        o.check(out.total_elapsed_s == expected, fmt::format("S={} elapsed {} != {}", k, out.total_elapsed_s, expected));
        o.check(7200.0 / out.total_elapsed_s == k, fmt::format("S={} speedup not linear", k));
    }
    return o;
}

Outcome speedup_identity() {
    Outcome o;
    auto& reg = sim::SlowdownRegistry::builtin();
    std::vector<sim::SlowdownFn> models{
        reg.make("constant"),
        reg.make("saturating", {{}, 2.0}),
        reg.make("saturating", {{}, 5.0}),
        reg.make("piecewise", {{{1, 1.0}, {4, 1.0}, {6, 1.1}, {12, 2.4}}, 1.0}),
        reg.make("piecewise", {{{1, 1.0}, {2, 1.9}, {3, 7568.0 / (38848.0 / 12.0)}}, 1.0}),
    };
    const long T = 48;
    for (const auto& model : models) {
        for (long S : {1L, 2L, 4L, 6L, 8L, 12L, 16L, 24L, 48L}) {
            auto out = sim::simulate(
                build_plan(placeholder_workload(T), {1, static_cast<int>(S), 1}, kV100Node), uniform(977.0, 256, model)
            );
            double expected = oracle::speedup_identity_elapsed(T, S, 2, 977.0, [&](int k) { return model(k); });
            o.check(std::abs(out.total_elapsed_s - expected) <= 1e-9 * expected,
                    fmt::format("{} S={}: {} vs {}", model.name(), S, out.total_elapsed_s, expected));
        }
    }
    return o;
}

Outcome imagenet() {
    Outcome o;
    auto table = compute_speedup({{1, 38848.0}, {6, 15136.0}});
    o.check(std::abs(table[1].speedup - 2.567) <= 0.001, fmt::format("speedup {}", table[1].speedup));
    auto rows = sim::sweep({placeholder_workload(12), 1}, sim::preset_profile("imagenet"), kV100Node, {1, 6});
    o.check(std::abs(rows[0].elapsed_s - 38848.0) <= 38.848, fmt::format("NPPN=1 elapsed {}", rows[0].elapsed_s));
    o.check(std::abs(rows[1].elapsed_s - 15136.0) <= 15.136, fmt::format("NPPN=6 elapsed {}", rows[1].elapsed_s));
    return o;
}

Outcome oom_admission() {
    Outcome o;
    auto out = sim::simulate(build_plan(placeholder_workload(48), {1, 48, 1}, NodeSpec{48, 2, 32768}), uniform(100.0, 4096));
    auto expected = oracle::replay_admission(48, 2, 32768, 4096);
    std::map<int, int> admitted;
    int oom = 0;
    for (const auto& t : out.tasks) {
        if (t.status == sim::TaskStatus::Oom) {
            ++oom;
        } else {
            o.check(t.start_s == 0.0 && t.end_s > 0.0, fmt::format("task {} did not complete", t.task_id));
            ++admitted[t.gpu.value_or(-1)];
        }
    }
    o.check(admitted == expected.admitted_per_gpu, "admitted counts differ from replay");
    o.check(admitted == std::map<int, int>{{0, 8}, {1, 8}}, "not 8 per GPU");
    o.check(oom == expected.oom && oom == 32, fmt::format("{} oom", oom));
    for (const auto& snap : out.traces[0]) {
        for (const auto& d : snap.devices) {
            o.check(d.mem_mib <= 32768 && d.reserved_mib <= 32768, fmt::format("memory over capacity at t={}", snap.t));
        }
    }
    return o;
}

Outcome telemetry_stats() {
    Outcome o;
    std::vector<TelemetrySeries> all;

    std::mt19937 rng(12);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<TelemetrySample> trace;
    for (int i = 0; i < 50; ++i) {
        trace.push_back(TelemetrySample{
            static_cast<double>(i), 40 * u(rng), static_cast<long>(1e5 * u(rng)),
            {{u(rng), static_cast<long>(32768 * u(rng))}, {u(rng), static_cast<long>(32768 * u(rng))}}});
    }
    std::string first;
    for (int run = 0; run < 2; ++run) {
        auto provider = SyntheticProvider::replay(2, trace);
        VirtualSamplerClock clock(49.0);
        std::stop_source never;
        auto series = run_sampler(provider, 1.0, never.get_token(), clock);
        auto csv = to_csv(series);
        if (run == 0) {
            first = csv;
        } else {
            o.check(csv == first, "synthetic runs are not bit-reproducible");
        }
        all.push_back(std::move(series));
    }

    auto rows = sim::sweep(
        {placeholder_workload(24), 1}, sim::preset_profile("mnist"), kV100Node, {1, 2, 4, 6, 8, 12, 24}
    );
    double prev = -1;
    for (const auto& row : rows) {
        auto series = sim::synthetic_trace(row.outcome, 10.0);
        auto load = series_stats(series.samples, Metric{Metric::Kind::GpuLoad, 0});
        o.check(load.avg > prev, fmt::format("average GPU load not increasing at NPPN={}", row.nppn));
        prev = load.avg;
        all.push_back(std::move(series));
    }

    for (const auto& series : all) {
        std::vector<Metric> metrics{{Metric::Kind::CpuLoad, 0}, {Metric::Kind::SysMem, 0},
                                    {Metric::Kind::GpuLoad, 0}, {Metric::Kind::GpuMem, 0}};
        for (int g = 0; g < series.gpus; ++g) {
            metrics.push_back({Metric::Kind::DeviceUtil, g});
            metrics.push_back({Metric::Kind::DeviceMem, g});
        }
        for (const auto& m : metrics) {
            auto s = series_stats(series.samples, m);
            o.check(s.min <= s.avg && s.avg <= s.max, fmt::format("{} violates min <= avg <= max", m.name()));
        }
    }
    return o;
}

Outcome script_equivalence() {
    Outcome o;
    std::mt19937 rng(31337);
    const std::string probe = "printf '%s %s %s' \"$TRIPLES_NODE_INDEX\" \"$TRIPLES_SLOT_INDEX\" \"$CUDA_VISIBLE_DEVICES\"";
    for (int iter = 0; iter < 3; ++iter) {
        int nnode = 1 + static_cast<int>(rng() % 2);
        int nppn = 1 + static_cast<int>(rng() % 6);
        int gpus = static_cast<int>(rng() % 4);
        std::size_t T = 1 + rng() % 16;
        auto plan = build_plan(sh_tasks(T, probe), {nnode, nppn, 1}, NodeSpec{8, gpus, 16384});
        testing_support::TempDir script_logs("acc10s");
        testing_support::TempDir exec_logs("acc10e");
        for (int n = 0; n < nnode; ++n) {
            auto script = script_logs.path() / fmt::format("node_{}.sh", n);
            std::ofstream(script) << emit_script(plan, n);
            auto cmd = fmt::format("TRIPLES_LOG_DIR='{}' /bin/sh '{}'", script_logs.path().string(), script.string());
            o.check(std::system(cmd.c_str()) == 0, "script exited non-zero");
            (void)run_plan(plan, n, ExecOptions{exec_logs.path()});
        }
        for (std::size_t id = 0; id < T; ++id) {
            auto name = fmt::format("task_{}.out", id);
            auto a = read(script_logs.path() / name);
            auto b = read(exec_logs.path() / name);
            o.check(!a.empty() && a == b,
                    fmt::format("plan ({},{},1) gpus={} task {}: script '{}' vs executor '{}'", nnode, nppn, gpus, id, a, b));
        }
    }
    return o;
}

struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    std::vector<Criterion> criteria{
        {1, "reference triples validate with balanced GPU slots", 1, reference_triples},
        {2, "plan dealing is a balanced partition", 5, plan_semantics},
        {3, "executor concurrency bound and elapsed", 10, executor_concurrency},
        {4, "device and thread pinning in spawned tasks", 5, env_pinning},
        {5, "simulator no-contention elapsed is exact", 1, no_contention},
        {6, "simulator speedup identity", 1, speedup_identity},
        {7, "ImageNet speedup and elapsed totals", 1, imagenet},
        {8, "OOM admission at launch", 1, oom_admission},
        {9, "telemetry statistics and GPU load trend", 10, telemetry_stats},
        {10, "emitted script matches native executor", 10, script_equivalence},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = fmt::format("exception: {}", e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (o.ok && secs >= c.budget_s) {
            o.ok = false;
            o.detail = fmt::format("over budget ({:.3f} s >= {} s)", secs, c.budget_s);
        }
        failed += o.ok ? 0 : 1;
        std::cout << fmt::format("[{}] criterion {:>2}: {} ({:.3f} s){}\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs,
                                 o.ok ? "" : " - " + o.detail);
    }
    std::cout << fmt::format("{}/{} criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
