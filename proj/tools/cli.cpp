/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <triples/executor.hpp>
#include <triples/gpusim.hpp>
#include <triples/plan.hpp>
#include <triples/report.hpp>
#include <triples/telemetry.hpp>
#include <triples/triple.hpp>

namespace fs = std::filesystem;

namespace triples::cli {

namespace {

struct Options {
    std::string mode;
    std::string triple{"1,1,1"};
    int cores{static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))};
    int gpus{0};
    long gpu_mem_mib{32768};
    std::string tasks_path;
    std::size_t num_tasks{0};
    double interval_s{10.0};
    std::string provider{"command"};
    std::string query_cmd{QueryCommandConfig{}.command};
    int query_util_col{0};
    int query_mem_col{1};
    double synthetic_util{0.0};
    long synthetic_mem_mib{0};
    std::string out_dir{"runs"};
    std::string run_dir;
    bool strict{false};
    int node_index{0};
    long timeout_ms{0};
    std::vector<int> nppn_list;
    std::string profile{"uniform"};
    std::string sim_config;
    std::optional<int> baseline;
    std::vector<std::string> inputs;
    std::string device_var{EnvNames{}.device_visibility};
    std::string thread_var{EnvNames{}.thread_count};
};

/// Configuration problems map to the usage exit status.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError(fmt::format("cannot read {}", path.string()));
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
    }
    out << content;
}

fs::path make_run_dir(const Options& o) {
    if (!o.run_dir.empty()) {
        fs::create_directories(o.run_dir);
        return o.run_dir;
    }
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
    fs::path base = fs::path(o.out_dir) / fmt::format("{}-{}", stamp, o.mode);
    fs::path dir = base;
    for (int i = 1; fs::exists(dir); ++i) {
        dir = fs::path(base.string() + fmt::format(".{}", i));
    }
    fs::create_directories(dir);
    return dir;
}

NodeSpec node_from(const Options& o) {
    NodeSpec node{o.cores, o.gpus, o.gpu_mem_mib};
    check_node(node);
    return node;
}

EnvNames names_from(const Options& o) {
    EnvNames names;
    names.device_visibility = o.device_var;
    names.thread_count = o.thread_var;
    return names;
}

TripleSpec checked_triple(const Options& o, const NodeSpec& node, std::ostream& err) {
    auto triple = parse_triple(o.triple);
    auto v = validate_triple(triple, node, o.strict ? Oversubscription::Strict : Oversubscription::Warn);
    if (!v.usable()) {
        throw ConfigError(fmt::format("{}: {}", to_string(*v.error), v.message));
    }
    for (const auto& w : v.warnings) {
        err << "warning: " << w << "\n";
    }
    return triple;
}

std::vector<TaskDef> workload_from(const Options& o) {
    if (!o.tasks_path.empty()) {
        return load_workload(o.tasks_path);
    }
    if (o.num_tasks > 0 && (o.mode == "sim" || o.mode == "sweep")) {
        return placeholder_workload(o.num_tasks);
    }
    throw ConfigError(
        o.mode == "sim" || o.mode == "sweep" ? "--tasks or --num-tasks is required" : "--tasks is required"
    );
}

sim::SimConfig sim_config_from(const Options& o) {
    if (!o.sim_config.empty()) {
        return sim::parse_sim_config(slurp(o.sim_config));
    }
    return sim::SimConfig{sim::preset_profile(o.profile), std::nullopt};
}

std::shared_ptr<TelemetryProvider> provider_from(const Options& o, const NodeSpec& node) {
    if (o.provider == "synthetic") {
        return std::make_shared<SyntheticProvider>(
            SyntheticProvider::constant(node.gpus, o.synthetic_util, o.synthetic_mem_mib)
        );
    }
    QueryCommandConfig q;
    q.command = o.query_cmd;
    q.util_column = o.query_util_col;
    q.mem_column = o.query_mem_col;
    return std::make_shared<CommandProvider>(q, node.gpus);
}

void print_summary(const PlanSummary& s, std::ostream& out) {
    out << fmt::format(
        "triple {} on {} cores / {} GPUs: {} tasks over {} slots\n",
        format_triple(s.triple),
        s.node.cores,
        s.node.gpus,
        s.tasks,
        s.slots
    );
    if (!s.queue_lengths.empty()) {
        auto [lo, hi] = std::minmax_element(s.queue_lengths.begin(), s.queue_lengths.end());
        out << fmt::format("queue length per slot: {}..{}\n", *lo, *hi);
    }
    for (const auto& [gpu, n] : s.gpu_slot_counts) {
        out << fmt::format("GPU {}: {} slots\n", gpu, n);
    }
}

int mode_plan(const Options& o, std::ostream& out, std::ostream& err) {
    auto node = node_from(o);
    auto triple = checked_triple(o, node, err);
    auto plan = build_plan(workload_from(o), triple, node, names_from(o));
    auto dir = make_run_dir(o);
    auto summary = plan_summary(plan);
    write_file(dir / "plan_summary.json", to_json(summary));
    for (int n = 0; n < triple.nnode; ++n) {
        auto path = dir / fmt::format("node_{}.sh", n);
        write_file(path, emit_script(plan, n));
        fs::permissions(
            path,
            fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
            fs::perm_options::add
        );
    }
    print_summary(summary, out);
    out << "wrote " << dir.string() << "\n";
    return 0;
}

int mode_exec(const Options& o, std::ostream& out, std::ostream& err) {
    auto node = node_from(o);
    auto triple = checked_triple(o, node, err);
    auto plan = build_plan(workload_from(o), triple, node, names_from(o));
    auto dir = make_run_dir(o);
    write_file(dir / "plan_summary.json", to_json(plan_summary(plan)));

    ExecOptions exec;
    exec.log_dir = dir / "logs";
    if (o.timeout_ms > 0) {
        exec.task_timeout = std::chrono::milliseconds(o.timeout_ms);
    }

    RunReport report;
    TelemetrySeries telemetry;
    if (o.provider == "none") {
        report = run_plan(plan, o.node_index, exec);
    } else {
        BackgroundSampler sampler(provider_from(o, node), o.interval_s);
        report = run_plan(plan, o.node_index, exec);
        telemetry = sampler.stop();
        write_file(dir / "telemetry.csv", to_csv(telemetry));
    }
    write_file(dir / "run_report.json", to_json(report));

    out << fmt::format(
        "{} tasks, {} failed, elapsed {:.3f} s, max concurrency {}\n",
        report.results.size(),
        report.failures(),
        report.elapsed_ms / 1000.0,
        report.max_observed_concurrency
    );
    if (!telemetry.gaps.empty()) {
        err << fmt::format("warning: {} telemetry samples failed\n", telemetry.gaps.size());
    }
    out << "wrote " << dir.string() << "\n";
    return launcher_exit_status(report);
}

void write_sim_artifacts(
    const fs::path& dir, const LaunchPlan& plan, const sim::SimOutcome& outcome, double interval_s
) {
    fs::create_directories(dir);
    write_file(dir / "plan_summary.json", to_json(plan_summary(plan)));
    write_file(dir / "sim_outcome.json", sim::to_json(outcome));
    write_file(dir / "telemetry.csv", to_csv(sim::synthetic_trace(outcome, interval_s)));
}

int mode_sim(const Options& o, std::ostream& out, std::ostream& err) {
    auto cfg = sim_config_from(o);
    auto node = cfg.node && o.sim_config.size() ? *cfg.node : node_from(o);
    check_node(node);
    auto triple = checked_triple(o, node, err);
    auto plan = build_plan(workload_from(o), triple, node, names_from(o));
    auto outcome = sim::simulate(plan, cfg.profile);
    auto dir = make_run_dir(o);
    write_sim_artifacts(dir, plan, outcome, o.interval_s);
    out << fmt::format(
        "simulated {} tasks: elapsed {:.2f} s, {} oom, mean GPU load {:.2f}\n",
        outcome.tasks.size(),
        outcome.total_elapsed_s,
        outcome.failures(),
        outcome.mean_gpu_load()
    );
    out << "wrote " << dir.string() << "\n";
    return 0;
}

int mode_sweep(const Options& o, std::ostream& out, std::ostream&) {
    if (o.nppn_list.empty()) {
        throw ConfigError("--mode sweep requires --nppn");
    }
    auto cfg = sim_config_from(o);
    auto node = cfg.node && o.sim_config.size() ? *cfg.node : node_from(o);
    check_node(node);
    sim::SweepTemplate tmpl{workload_from(o), 1};
    auto rows = sim::sweep(tmpl, cfg.profile, node, o.nppn_list);

    auto dir = make_run_dir(o);
    std::vector<RunRecord> records;
    for (const auto& row : rows) {
        auto plan = build_plan(tmpl.tasks, row.triple, node, names_from(o));
        write_sim_artifacts(dir / fmt::format("nppn_{}", row.nppn), plan, row.outcome, o.interval_s);
        records.push_back(RunRecord{
            row.nppn,
            row.elapsed_s,
            row.failures,
            sim::synthetic_trace(row.outcome, o.interval_s),
        });
    }
    auto table = build_speedup_table(records, o.baseline);
    write_file(dir / "speedup.csv", to_csv(table));
    out << format_table(table);
    out << "wrote " << dir.string() << "\n";
    return 0;
}

/// Run directories under `root`: itself if it holds a plan summary, else its
/// immediate subdirectories that do, in name order.
std::vector<fs::path> collect_runs(const fs::path& root) {
    if (fs::exists(root / "plan_summary.json")) {
        return {root};
    }
    std::vector<fs::path> runs;
    if (fs::is_directory(root)) {
        for (const auto& entry : fs::directory_iterator(root)) {
            if (entry.is_directory() && fs::exists(entry.path() / "plan_summary.json")) {
                runs.push_back(entry.path());
            }
        }
    }
    std::sort(runs.begin(), runs.end());
    return runs;
}

RunRecord load_run(const fs::path& dir) {
    RunRecord r;
    auto summary = plan_summary_from_json(slurp(dir / "plan_summary.json"));
    r.nppn = summary.triple.nppn;
    if (fs::exists(dir / "run_report.json")) {
        auto report = run_report_from_json(slurp(dir / "run_report.json"));
        r.elapsed_s = report.elapsed_ms / 1000.0;
        r.failures = report.failures();
    } else if (fs::exists(dir / "sim_outcome.json")) {
        try {
            auto j = nlohmann::json::parse(slurp(dir / "sim_outcome.json"));
            r.elapsed_s = j.at("total_elapsed_s").get<double>();
            r.failures = j.at("failures").get<int>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ParseError, fmt::format("bad sim outcome in {}: {}", dir.string(), e.what()));
        }
    } else {
        throw ConfigError(fmt::format("{} has neither run_report.json nor sim_outcome.json", dir.string()));
    }
    if (fs::exists(dir / "telemetry.csv")) {
        r.telemetry = telemetry_from_csv(slurp(dir / "telemetry.csv"));
    }
    return r;
}

int mode_report(const Options& o, std::ostream& out, std::ostream&) {
    if (o.inputs.empty()) {
        throw ConfigError("--mode report requires --inputs");
    }
    std::vector<RunRecord> records;
    for (const auto& input : o.inputs) {
        auto runs = collect_runs(input);
        if (runs.empty()) {
            throw ConfigError(fmt::format("no run directories under {}", input));
        }
        for (const auto& dir : runs) {
            records.push_back(load_run(dir));
        }
    }
    auto table = build_speedup_table(records, o.baseline);
    auto dir = make_run_dir(o);
    write_file(dir / "speedup.csv", to_csv(table));
    out << format_table(table);
    out << "wrote " << dir.string() << "\n";
    return 0;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> values;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            int v = std::stoi(item, &used);
            if (used != item.size() || v < 1) {
                throw std::invalid_argument(item);
            }
            values.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("bad NPPN list '{}'", text));
        }
    }
    return values;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    std::string nppn_text;
    std::string baseline_text;

    CLI::App app{"Triples-mode task launcher: plan, execute, monitor and simulate GPU-shared task batches", "triples"};
    app.set_config("--config", "", "Read options from a key = value file; flags take precedence");
    app.add_option("--mode", o.mode, "plan | exec | sim | sweep | report")
        ->check(CLI::IsMember({"plan", "exec", "sim", "sweep", "report"}));
    app.add_option("--triples", o.triple, "NNODE,NPPN,NTPP");
    app.add_option("--cores", o.cores, "Physical cores per node");
    app.add_option("--gpus", o.gpus, "GPUs per node");
    app.add_option("--gpu-mem-mib", o.gpu_mem_mib, "Memory per GPU in MiB");
    app.add_option("--tasks", o.tasks_path, "Workload file (command lines or JSON lines)");
    app.add_option("--num-tasks", o.num_tasks, "Placeholder workload size for sim/sweep");
    app.add_option("--interval", o.interval_s, "Monitoring interval in seconds")->check(CLI::PositiveNumber);
    app.add_option("--provider", o.provider, "Telemetry provider: command | synthetic | none")
        ->check(CLI::IsMember({"command", "synthetic", "none"}));
    app.add_option("--query-cmd", o.query_cmd, "Device query command printing one CSV row per GPU")
        ->envname("TRIPLES_QUERY_CMD");
    app.add_option("--query-util-col", o.query_util_col, "CSV column holding utilization percent");
    app.add_option("--query-mem-col", o.query_mem_col, "CSV column holding used memory in MiB");
    app.add_option("--synthetic-util", o.synthetic_util, "Per-GPU utilization reported by the synthetic provider");
    app.add_option("--synthetic-mem-mib", o.synthetic_mem_mib, "Per-GPU memory reported by the synthetic provider");
    app.add_option("--out", o.out_dir, "Parent directory for per-run output directories");
    app.add_option("--run-dir", o.run_dir, "Exact output directory (overrides --out)");
    app.add_flag("--strict", o.strict, "Treat NPPN x NTPP > cores as an error");
    app.add_option("--node", o.node_index, "Node index to execute (exec mode)");
    app.add_option("--timeout-ms", o.timeout_ms, "Per-task timeout in milliseconds (0 = none)");
    app.add_option("--nppn", nppn_text, "Comma-separated NPPN values (sweep mode)");
    app.add_option("--profile", o.profile, "Simulation profile preset: uniform | mnist | imagenet");
    app.add_option("--sim-config", o.sim_config, "Simulation config file (JSON)");
    app.add_option("--baseline", baseline_text, "Baseline NPPN for speedups (default: smallest)");
    app.add_option("--inputs", o.inputs, "Run directories to aggregate (report mode)");
    app.add_option("--device-var", o.device_var, "Device visibility variable name");
    app.add_option("--thread-var", o.thread_var, "Thread count variable name");

    if (args.empty()) {
        out << app.help();
        return kUsageError;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }
    if (o.mode.empty()) {
        err << "error: --mode is required\n" << app.help();
        return kUsageError;
    }

    try {
        if (!nppn_text.empty()) {
            o.nppn_list = parse_int_list(nppn_text);
        }
        if (!baseline_text.empty()) {
            auto b = parse_int_list(baseline_text);
            if (b.size() != 1) {
                throw ConfigError("--baseline takes a single NPPN");
            }
            o.baseline = b.front();
        }
        if (o.mode == "plan") {
            return mode_plan(o, out, err);
        }
        if (o.mode == "exec") {
            return mode_exec(o, out, err);
        }
        if (o.mode == "sim") {
            return mode_sim(o, out, err);
        }
        if (o.mode == "sweep") {
            return mode_sweep(o, out, err);
        }
        return mode_report(o, out, err);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const Error& e) {
        err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        return kUsageError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }
}

}  // namespace triples::cli
