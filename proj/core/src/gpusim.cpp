/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#include <triples/gpusim.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include <fmt/format.h>
#include <json.hpp>

namespace triples::sim {

namespace {

SlowdownFn make_piecewise(const SlowdownParams& params) {
    auto table = params.table;
    if (table.empty()) {
        throw Error(ErrorCode::BadProfile, "piecewise slowdown needs at least one knot");
    }
    std::sort(table.begin(), table.end());
    if (table.front().first != 1 || table.front().second != 1.0) {
        throw Error(ErrorCode::BadProfile, "piecewise slowdown must start at knot (1, 1.0)");
    }
    for (std::size_t i = 1; i < table.size(); ++i) {
        if (table[i].first == table[i - 1].first) {
            throw Error(ErrorCode::BadProfile, fmt::format("duplicate slowdown knot k = {}", table[i].first));
        }
        if (table[i].second < table[i - 1].second) {
            throw Error(ErrorCode::BadProfile, "piecewise slowdown must be non-decreasing");
        }
    }
    return SlowdownFn("piecewise", [table = std::move(table)](int k) {
        if (k <= table.front().first) {
            return table.front().second;
        }
        if (k >= table.back().first) {
            return table.back().second;
        }
        auto hi = std::lower_bound(table.begin(), table.end(), k, [](const auto& knot, int v) {
            return knot.first < v;
        });
        if (hi->first == k) {
            return hi->second;
        }
        auto lo = std::prev(hi);
        double frac = static_cast<double>(k - lo->first) / static_cast<double>(hi->first - lo->first);
        return lo->second + frac * (hi->second - lo->second);
    });
}

SlowdownFn make_saturating(const SlowdownParams& params) {
    double c = params.capacity;
    if (!(c >= 1.0)) {
        throw Error(ErrorCode::BadProfile, fmt::format("saturating capacity must be >= 1, got {}", c));
    }
    return SlowdownFn("saturating", [c](int k) { return std::max(1.0, static_cast<double>(k) / c); });
}

double device_util(double solo, int running) {
    if (running <= 0) {
        return 0.0;
    }
    return 1.0 - std::pow(1.0 - solo, running);
}

struct Active {
    std::size_t record;  // index into outcome.tasks
    std::optional<std::size_t> device;
    bool starting;
    double phase_end;
    double remaining;  // solo-rate seconds of work left
};

}  // namespace

SlowdownRegistry& SlowdownRegistry::builtin() {
    static SlowdownRegistry registry = [] {
        SlowdownRegistry r;
        r.add("constant", [](const SlowdownParams&) { return SlowdownFn(); });
        r.add("piecewise", make_piecewise);
        r.add("saturating", make_saturating);
        return r;
    }();
    return registry;
}

void SlowdownRegistry::add(std::string name, Factory factory) {
    factories_.insert_or_assign(std::move(name), std::move(factory));
}

SlowdownFn SlowdownRegistry::make(std::string_view name, const SlowdownParams& params) const {
    auto it = factories_.find(name);
    if (it == factories_.end()) {
        throw Error(ErrorCode::BadProfile, fmt::format("unknown slowdown model '{}'", name));
    }
    auto fn = it->second(params);
    check_slowdown(fn);
    return fn;
}

std::vector<std::string> SlowdownRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, f] : factories_) {
        out.push_back(name);
    }
    return out;
}

void check_slowdown(const SlowdownFn& fn, int k_max) {
    if (fn(1) != 1.0) {
        throw Error(ErrorCode::BadProfile, fmt::format("slowdown({}) must be 1 at k = 1", fn.name()));
    }
    double prev = 1.0;
    for (int k = 2; k <= k_max; ++k) {
        double v = fn(k);
        if (!(v >= prev) || !std::isfinite(v)) {
            throw Error(
                ErrorCode::BadProfile, fmt::format("slowdown {} decreases or is not finite at k = {}", fn.name(), k)
            );
        }
        prev = v;
    }
}

void check_profile(const SimTaskProfile& p) {
    if (!(p.base_duration_s > 0) || !std::isfinite(p.base_duration_s)) {
        throw Error(ErrorCode::BadProfile, "base_duration_s must be positive");
    }
    if (p.mem_mib <= 0) {
        throw Error(ErrorCode::BadProfile, "mem_mib must be positive");
    }
    if (!(p.gpu_util >= 0 && p.gpu_util <= 1)) {
        throw Error(ErrorCode::BadProfile, "gpu_util must lie in [0, 1]");
    }
    if (!(p.startup_s >= 0) || !(p.cpu_per_task >= 0) || p.host_mem_mib < 0) {
        throw Error(ErrorCode::BadProfile, "startup_s, cpu_per_task and host_mem_mib must be non-negative");
    }
    check_slowdown(p.slowdown);
}

SimTaskProfile preset_profile(std::string_view name) {
    auto& reg = SlowdownRegistry::builtin();
    SimTaskProfile p;
    if (name == "uniform") {
        p.base_duration_s = 60.0;
        p.mem_mib = 1024;
        p.slowdown = reg.make("constant");
        return p;
    }
    if (name == "mnist") {
        // Small CNN: light on memory and on the GPU. Linear scaling up to four
        // tasks per GPU, a mild drop at six and a steep one at twelve.
        p.base_duration_s = 300.0;
        p.mem_mib = 2600;
        p.gpu_util = 0.3;
        p.cpu_per_task = 0.5;
        p.host_mem_mib = 2048;
        p.slowdown = reg.make("piecewise", {{{1, 1.0}, {4, 1.0}, {6, 1.1}, {12, 2.4}}, 1.0});
        return p;
    }
    if (name == "imagenet") {
        // 12 tasks take 38848 s in series and 15136 s at six per node (three per GPU).
        p.base_duration_s = 38848.0 / 12.0;
        p.mem_mib = 10240;
        p.gpu_util = 0.55;
        p.cpu_per_task = 4.0;
        p.host_mem_mib = 16384;
        p.slowdown = reg.make("piecewise", {{{1, 1.0}, {2, 1.9}, {3, 7568.0 / (38848.0 / 12.0)}}, 1.0});
        return p;
    }
    throw Error(ErrorCode::BadProfile, fmt::format("unknown profile preset '{}'", name));
}

std::vector<std::string> preset_names() {
    return {"imagenet", "mnist", "uniform"};
}

SimConfig parse_sim_config(const std::string& json_text) {
    SimConfig cfg;
    try {
        auto j = nlohmann::json::parse(json_text);
        cfg.profile = preset_profile(j.value("preset", std::string("uniform")));
        auto& p = cfg.profile;
        p.base_duration_s = j.value("base_duration_s", p.base_duration_s);
        p.mem_mib = j.value("mem_mib", p.mem_mib);
        p.gpu_util = j.value("gpu_util", p.gpu_util);
        p.startup_s = j.value("startup_s", p.startup_s);
        p.cpu_per_task = j.value("cpu_per_task", p.cpu_per_task);
        p.host_mem_mib = j.value("host_mem_mib", p.host_mem_mib);
        if (j.contains("slowdown")) {
            const auto& s = j.at("slowdown");
            SlowdownParams params;
            if (s.contains("table")) {
                for (const auto& knot : s.at("table")) {
                    params.table.emplace_back(knot.at(0).get<int>(), knot.at(1).get<double>());
                }
            }
            params.capacity = s.value("capacity", 1.0);
            p.slowdown = SlowdownRegistry::builtin().make(s.at("model").get<std::string>(), params);
        }
        if (j.contains("node")) {
            const auto& n = j.at("node");
            cfg.node = NodeSpec{n.at("cores").get<int>(), n.at("gpus").get<int>(), n.at("gpu_mem_mib").get<long>()};
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("bad simulation config: {}", e.what()));
    }
    check_profile(cfg.profile);
    return cfg;
}

int SimOutcome::failures() const noexcept {
    return static_cast<int>(std::count_if(tasks.begin(), tasks.end(), [](const SimTask& t) {
        return t.status == TaskStatus::Oom;
    }));
}

double SimOutcome::mean_gpu_load(int node_index) const {
    if (total_elapsed_s <= 0) {
        return 0.0;
    }
    const auto& trace = traces.at(static_cast<std::size_t>(node_index));
    double area = 0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        double begin = trace[i].t;
        double end = i + 1 < trace.size() ? trace[i + 1].t : total_elapsed_s;
        double load = 0;
        for (const auto& d : trace[i].devices) {
            load += d.util;
        }
        area += (std::min(end, total_elapsed_s) - begin) * load;
    }
    return area / total_elapsed_s;
}

SimOutcome simulate(const LaunchPlan& plan, const SimTaskProfile& profile) {
    check_profile(profile);
    const auto& node = plan.node;
    const int gpus = node.gpus;
    const int nnode = plan.triple.nnode;

    SimOutcome out;
    out.node = node;
    out.cpu_per_task = profile.cpu_per_task;
    out.host_mem_mib = profile.host_mem_mib;
    out.traces.resize(static_cast<std::size_t>(nnode));
    out.tasks.reserve(plan.task_count());

    const std::size_t ndev = static_cast<std::size_t>(nnode) * static_cast<std::size_t>(gpus);
    std::vector<long> reserved(ndev, 0);
    std::vector<std::size_t> next_in_queue(plan.queues.size(), 0);
    std::vector<Active> active;

    auto device_of = [&](std::size_t slot) -> std::optional<std::size_t> {
        const auto& b = plan.bindings[slot];
        if (!b.gpu_index) {
            return std::nullopt;
        }
        return static_cast<std::size_t>(b.node_index) * static_cast<std::size_t>(gpus)
               + static_cast<std::size_t>(*b.gpu_index);
    };

    // Launch the next task of each listed slot, strictly in task_id order;
    // an OOM task hands its slot straight to that slot's following task.
    auto launch = [&](double t, const std::vector<std::size_t>& slots) {
        using Pending = std::pair<long, std::size_t>;  // (task_id, slot)
        std::priority_queue<Pending, std::vector<Pending>, std::greater<>> pending;
        auto enqueue = [&](std::size_t slot) {
            const auto& q = plan.queues[slot];
            if (next_in_queue[slot] < q.size()) {
                pending.emplace(q[next_in_queue[slot]].task_id, slot);
            }
        };
        for (auto slot : slots) {
            enqueue(slot);
        }
        while (!pending.empty()) {
            auto [task_id, slot] = pending.top();
            pending.pop();
            const auto& b = plan.bindings[slot];
            ++next_in_queue[slot];

            SimTask rec;
            rec.task_id = task_id;
            rec.node_index = b.node_index;
            rec.slot_index = b.slot_index;
            rec.gpu = b.gpu_index;
            rec.start_s = t;
            auto dev = device_of(slot);
            if (dev && reserved[*dev] + profile.mem_mib > node.gpu_mem_mib) {
                rec.end_s = t;
                rec.status = TaskStatus::Oom;
                out.tasks.push_back(rec);
                enqueue(slot);
                continue;
            }
            if (dev) {
                reserved[*dev] += profile.mem_mib;
            }
            out.tasks.push_back(rec);
            bool starting = profile.startup_s > 0;
            active.push_back(Active{
                out.tasks.size() - 1,
                dev,
                starting,
                t + profile.startup_s,
                profile.base_duration_s,
            });
        }
    };

    auto running_counts = [&] {
        std::vector<int> k(ndev, 0);
        for (const auto& a : active) {
            if (a.device && !a.starting) {
                ++k[*a.device];
            }
        }
        return k;
    };

    auto snapshot = [&](double t) {
        auto k = running_counts();
        for (int n = 0; n < nnode; ++n) {
            NodeSnapshot snap;
            snap.t = t;
            snap.devices.resize(static_cast<std::size_t>(gpus));
            for (int g = 0; g < gpus; ++g) {
                auto d = static_cast<std::size_t>(n) * static_cast<std::size_t>(gpus) + static_cast<std::size_t>(g);
                auto& ds = snap.devices[static_cast<std::size_t>(g)];
                ds.running = k[d];
                ds.util = device_util(profile.gpu_util, k[d]);
                ds.mem_mib = static_cast<long>(k[d]) * profile.mem_mib;
                ds.reserved_mib = reserved[d];
            }
            for (const auto& a : active) {
                if (out.tasks[a.record].node_index == n) {
                    ++snap.active_tasks;
                }
            }
            auto& trace = out.traces[static_cast<std::size_t>(n)];
            if (!trace.empty() && trace.back().t == t) {
                trace.back() = std::move(snap);
            } else if (
                trace.empty() || trace.back().devices != snap.devices
                || trace.back().active_tasks != snap.active_tasks
            )
            {
                trace.push_back(std::move(snap));
            }
        }
    };

    double t = 0;
    {
        std::vector<std::size_t> all(plan.queues.size());
        for (std::size_t i = 0; i < all.size(); ++i) {
            all[i] = i;
        }
        launch(t, all);
    }
    snapshot(t);

    while (!active.empty()) {
        auto k = running_counts();
        auto rate_divisor = [&](const Active& a) {
            return a.device ? profile.slowdown(k[*a.device]) : 1.0;
        };
        double t_next = std::numeric_limits<double>::infinity();
        for (const auto& a : active) {
            double when = a.starting ? a.phase_end : t + a.remaining * rate_divisor(a);
            t_next = std::min(t_next, when);
        }
        const double dt = t_next - t;
        const double tol = 1e-12 * std::max(1.0, std::abs(t_next));

        std::vector<std::size_t> freed_slots;
        std::vector<Active> still;
        still.reserve(active.size());
        for (auto& a : active) {
            if (a.starting) {
                if (a.phase_end <= t_next + tol) {
                    a.starting = false;
                }
                still.push_back(a);
                continue;
            }
            double s = rate_divisor(a);
            if (t + a.remaining * s <= t_next + tol) {
                auto& rec = out.tasks[a.record];
                rec.end_s = t_next;
                if (a.device) {
                    reserved[*a.device] -= profile.mem_mib;
                }
                freed_slots.push_back(
                    static_cast<std::size_t>(rec.node_index) * static_cast<std::size_t>(plan.triple.nppn)
                    + static_cast<std::size_t>(rec.slot_index)
                );
                continue;
            }
            a.remaining = std::max(0.0, a.remaining - dt / s);
            still.push_back(a);
        }
        active = std::move(still);
        t = t_next;
        launch(t, freed_slots);
        snapshot(t);
    }

    out.total_elapsed_s = t;
    std::sort(out.tasks.begin(), out.tasks.end(), [](const SimTask& a, const SimTask& b) {
        return a.task_id < b.task_id;
    });
    return out;
}

TelemetrySeries synthetic_trace(const SimOutcome& outcome, double interval_s, int node_index) {
    if (!(interval_s > 0)) {
        throw Error(ErrorCode::ParseError, fmt::format("sampling interval must be > 0, got {}", interval_s));
    }
    TelemetrySeries series;
    series.gpus = outcome.node.gpus;
    if (outcome.tasks.empty()) {
        return series;
    }
    const auto& trace = outcome.traces.at(static_cast<std::size_t>(node_index));
    auto ticks = static_cast<long>(std::ceil(outcome.total_elapsed_s / interval_s));
    std::size_t cursor = 0;
    for (long i = 0; i <= ticks; ++i) {
        double t = static_cast<double>(i) * interval_s;
        while (cursor + 1 < trace.size() && trace[cursor + 1].t <= t) {
            ++cursor;
        }
        const auto& snap = trace[cursor];
        TelemetrySample s;
        s.t = t;
        s.cpu_load = outcome.cpu_per_task * snap.active_tasks;
        s.sys_mem_mib = outcome.host_mem_mib * snap.active_tasks;
        for (const auto& d : snap.devices) {
            s.gpu.push_back(GpuReading{d.util, d.mem_mib});
        }
        series.samples.push_back(std::move(s));
    }
    return series;
}

int count_memory_dips(const TelemetrySeries& series) {
    int dips = 0;
    for (std::size_t i = 1; i < series.samples.size(); ++i) {
        if (series.samples[i].gpu_mem_mib() < series.samples[i - 1].gpu_mem_mib()) {
            ++dips;
        }
    }
    return dips;
}

int threads_for(const NodeSpec& node, int nppn) {
    return std::max(1, node.cores / std::max(1, nppn));
}

std::vector<SweepRow> sweep(
    const SweepTemplate& tmpl, const SimTaskProfile& profile, const NodeSpec& node, std::vector<int> nppn_list
) {
    if (nppn_list.empty()) {
        throw Error(ErrorCode::ParseError, "sweep needs at least one NPPN value");
    }
    std::sort(nppn_list.begin(), nppn_list.end());
    nppn_list.erase(std::unique(nppn_list.begin(), nppn_list.end()), nppn_list.end());

    std::vector<SweepRow> rows;
    rows.reserve(nppn_list.size());
    for (int nppn : nppn_list) {
        SweepRow row;
        row.nppn = nppn;
        row.triple = TripleSpec{tmpl.nnode, nppn, threads_for(node, nppn)};
        auto plan = build_plan(tmpl.tasks, row.triple, node);
        row.outcome = simulate(plan, profile);
        row.elapsed_s = row.outcome.total_elapsed_s;
        row.avg_gpu_load = row.outcome.mean_gpu_load();
        row.failures = row.outcome.failures();
        rows.push_back(std::move(row));
    }
    for (auto& row : rows) {
        row.speedup = row.elapsed_s > 0 ? rows.front().elapsed_s / row.elapsed_s : 0.0;
    }
    return rows;
}

std::string to_json(const SimOutcome& outcome) {
    nlohmann::ordered_json j;
    j["node"] = {
        {"cores", outcome.node.cores},
        {"gpus", outcome.node.gpus},
        {"gpu_mem_mib", outcome.node.gpu_mem_mib},
    };
    j["total_elapsed_s"] = outcome.total_elapsed_s;
    j["failures"] = outcome.failures();
    auto tasks = nlohmann::ordered_json::array();
    for (const auto& t : outcome.tasks) {
        tasks.push_back({
            {"task_id", t.task_id},
            {"node_index", t.node_index},
            {"slot_index", t.slot_index},
            {"gpu", t.gpu ? nlohmann::ordered_json(*t.gpu) : nlohmann::ordered_json()},
            {"start_s", t.start_s},
            {"end_s", t.end_s},
            {"status", t.status == TaskStatus::Done ? "done" : "oom"},
        });
    }
    j["tasks"] = std::move(tasks);
    auto traces = nlohmann::ordered_json::array();
    for (const auto& trace : outcome.traces) {
        auto points = nlohmann::ordered_json::array();
        for (const auto& snap : trace) {
            auto devices = nlohmann::ordered_json::array();
            for (const auto& d : snap.devices) {
                devices.push_back({
                    {"util", d.util},
                    {"mem_mib", d.mem_mib},
                    {"reserved_mib", d.reserved_mib},
                    {"running", d.running},
                });
            }
            points.push_back({{"t", snap.t}, {"active_tasks", snap.active_tasks}, {"devices", devices}});
        }
        traces.push_back(std::move(points));
    }
    j["traces"] = std::move(traces);
    return j.dump(2) + "\n";
}

}  // namespace triples::sim
