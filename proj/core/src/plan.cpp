/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#include <triples/plan.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace triples {

namespace {

bool valid_env_name(const std::string& name) {
    if (name.empty() || std::isdigit(static_cast<unsigned char>(name.front()))) {
        return false;
    }
    return std::all_of(name.begin(), name.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
}

}  // namespace

std::size_t LaunchPlan::task_count() const noexcept {
    std::size_t n = 0;
    for (const auto& q : queues) {
        n += q.size();
    }
    return n;
}

LaunchPlan build_plan(
    const std::vector<TaskDef>& tasks,
    const TripleSpec& triple,
    const NodeSpec& node,
    const EnvNames& names
) {
    if (tasks.empty()) {
        throw Error(ErrorCode::EmptyWorkload, "workload contains no tasks");
    }
    std::set<long> seen;
    for (const auto& t : tasks) {
        if (t.argv.empty()) {
            throw Error(ErrorCode::BadWorkload, fmt::format("task {} has an empty argv", t.task_id));
        }
        if (!seen.insert(t.task_id).second) {
            throw Error(ErrorCode::BadWorkload, fmt::format("duplicate task id {}", t.task_id));
        }
        for (const auto& [name, value] : t.extra_env) {
            if (!valid_env_name(name)) {
                throw Error(
                    ErrorCode::BadWorkload,
                    fmt::format("task {} has invalid environment name '{}'", t.task_id, name)
                );
            }
        }
    }

    LaunchPlan plan;
    plan.triple = triple;
    plan.node = node;
    plan.names = names;
    plan.bindings = expand_slots(triple, node, names);
    plan.queues.resize(plan.bindings.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        plan.queues[i % plan.queues.size()].push_back(tasks[i]);
    }
    return plan;
}

std::string shell_quote(const std::string& word) {
    std::string out;
    out.reserve(word.size() + 2);
    out.push_back('\'');
    for (char c : word) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('\'');
    return out;
}

std::string emit_script(const LaunchPlan& plan, int node_index) {
    if (node_index < 0 || node_index >= plan.triple.nnode) {
        throw Error(
            ErrorCode::BadNodeIndex,
            fmt::format("node index {} outside [0, {})", node_index, plan.triple.nnode)
        );
    }
    std::string s;
    s += "#!/bin/sh\n";
    s += fmt::format(
        "# triples launch script: node {} of {}, triple {}\n",
        node_index,
        plan.triple.nnode,
        format_triple(plan.triple)
    );
    s += "LOG_DIR=\"${TRIPLES_LOG_DIR:-.}\"\n";
    s += "mkdir -p \"$LOG_DIR\"\n";

    for (int slot = 0; slot < plan.triple.nppn; ++slot) {
        const auto& b = plan.binding(node_index, slot);
        const auto& q = plan.queue(node_index, slot);
        s += "\n";
        if (b.gpu_index) {
            s += fmt::format("# slot {} (gpu {}, {} tasks)\n", slot, *b.gpu_index, q.size());
        } else {
            s += fmt::format("# slot {} ({} tasks)\n", slot, q.size());
        }
        s += "(\n";
        for (const auto& [name, value] : b.env) {
            s += fmt::format("  export {}={}\n", name, shell_quote(value));
        }
        for (const auto& task : q) {
            s += fmt::format("  (export {}={}", plan.names.task_id, shell_quote(std::to_string(task.task_id)));
            for (const auto& [name, value] : task.extra_env) {
                s += fmt::format(" {}={}", name, shell_quote(value));
            }
            s += "; exec";
            for (const auto& arg : task.argv) {
                s += ' ';
                s += shell_quote(arg);
            }
            s += fmt::format(
                ") >\"$LOG_DIR/task_{0}.out\" 2>\"$LOG_DIR/task_{0}.err\"\n", task.task_id
            );
        }
        s += ") &\n";
    }
    s += "\nwait\n";
    return s;
}

PlanSummary plan_summary(const LaunchPlan& plan) {
    PlanSummary sum;
    sum.triple = plan.triple;
    sum.node = plan.node;
    sum.tasks = plan.task_count();
    sum.slots = static_cast<long>(plan.queues.size());
    sum.queue_lengths.reserve(plan.queues.size());
    for (const auto& q : plan.queues) {
        sum.queue_lengths.push_back(q.size());
    }
    for (const auto& b : plan.bindings) {
        if (b.node_index == 0 && b.gpu_index) {
            ++sum.gpu_slot_counts[*b.gpu_index];
        }
    }
    return sum;
}

std::string to_json(const PlanSummary& summary) {
    nlohmann::ordered_json j;
    j["triple"] = {
        {"nnode", summary.triple.nnode},
        {"nppn", summary.triple.nppn},
        {"ntpp", summary.triple.ntpp},
    };
    j["node"] = {
        {"cores", summary.node.cores},
        {"gpus", summary.node.gpus},
        {"gpu_mem_mib", summary.node.gpu_mem_mib},
    };
    j["tasks"] = summary.tasks;
    j["slots"] = summary.slots;
    j["queue_lengths"] = summary.queue_lengths;
    auto counts = nlohmann::ordered_json::object();
    for (const auto& [gpu, n] : summary.gpu_slot_counts) {
        counts[std::to_string(gpu)] = n;
    }
    j["gpu_slot_counts"] = counts;
    return j.dump(2) + "\n";
}

PlanSummary plan_summary_from_json(const std::string& text) {
    try {
        auto j = nlohmann::json::parse(text);
        PlanSummary sum;
        sum.triple.nnode = j.at("triple").at("nnode").get<int>();
        sum.triple.nppn = j.at("triple").at("nppn").get<int>();
        sum.triple.ntpp = j.at("triple").at("ntpp").get<int>();
        sum.node.cores = j.at("node").at("cores").get<int>();
        sum.node.gpus = j.at("node").at("gpus").get<int>();
        sum.node.gpu_mem_mib = j.at("node").at("gpu_mem_mib").get<long>();
        sum.tasks = j.at("tasks").get<std::size_t>();
        sum.slots = j.at("slots").get<long>();
        sum.queue_lengths = j.at("queue_lengths").get<std::vector<std::size_t>>();
        for (const auto& [key, value] : j.at("gpu_slot_counts").items()) {
            sum.gpu_slot_counts[std::stoi(key)] = value.get<long>();
        }
        return sum;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("bad plan summary: {}", e.what()));
    }
}

std::vector<TaskDef> parse_workload(const std::string& text) {
    std::vector<std::string> lines;
    {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            auto first = line.find_first_not_of(" \t");
            if (first == std::string::npos) {
                continue;
            }
            lines.push_back(line);
        }
    }
    std::vector<TaskDef> tasks;
    if (lines.empty()) {
        return tasks;
    }

    bool json_lines = lines.front()[lines.front().find_first_not_of(" \t")] == '{';
    for (const auto& line : lines) {
        auto trimmed = line.substr(line.find_first_not_of(" \t"));
        TaskDef t;
        t.task_id = static_cast<long>(tasks.size());
        if (json_lines) {
            try {
                auto j = nlohmann::ordered_json::parse(trimmed);
                if (j.contains("task_id")) {
                    t.task_id = j.at("task_id").get<long>();
                }
                t.argv = j.at("argv").get<std::vector<std::string>>();
                if (j.contains("env")) {
                    for (const auto& [name, value] : j.at("env").items()) {
                        t.extra_env.emplace_back(name, value.get<std::string>());
                    }
                }
            } catch (const nlohmann::json::exception& e) {
                throw Error(
                    ErrorCode::BadWorkload, fmt::format("bad workload line '{}': {}", trimmed, e.what())
                );
            }
            if (t.argv.empty()) {
                throw Error(ErrorCode::BadWorkload, fmt::format("empty argv in '{}'", trimmed));
            }
        } else {
            if (trimmed.front() == '#') {
                continue;
            }
            t.argv = {"/bin/sh", "-c", trimmed};
        }
        tasks.push_back(std::move(t));
    }
    return tasks;
}

std::vector<TaskDef> load_workload(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, fmt::format("cannot read workload file {}", path.string()));
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_workload(buf.str());
}

std::vector<TaskDef> placeholder_workload(std::size_t count) {
    std::vector<TaskDef> tasks(count);
    for (std::size_t i = 0; i < count; ++i) {
        tasks[i].task_id = static_cast<long>(i);
        tasks[i].argv = {"true"};
    }
    return tasks;
}

}  // namespace triples
