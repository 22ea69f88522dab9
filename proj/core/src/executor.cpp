/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#include <triples/executor.hpp>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>
#include <json.hpp>

extern char** environ;

namespace triples {

std::string_view to_string(FailureClass c) noexcept {
    switch (c) {
    case FailureClass::None:
        return "none";
    case FailureClass::Oom:
        return "oom";
    case FailureClass::Generic:
        return "generic";
    case FailureClass::Timeout:
        return "timeout";
    }
    return "generic";
}

namespace {

FailureClass failure_from_string(std::string_view s) {
    if (s == "none") {
        return FailureClass::None;
    }
    if (s == "oom") {
        return FailureClass::Oom;
    }
    if (s == "timeout") {
        return FailureClass::Timeout;
    }
    return FailureClass::Generic;
}

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point origin) {
    return std::chrono::duration<double, std::milli>(Clock::now() - origin).count();
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return out;
}

std::string read_tail(const std::filesystem::path& path, std::size_t bytes) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        return {};
    }
    auto size = static_cast<std::size_t>(in.tellg());
    auto offset = size > bytes ? size - bytes : 0;
    in.seekg(static_cast<std::streamoff>(offset));
    std::string tail(size - offset, '\0');
    in.read(tail.data(), static_cast<std::streamsize>(tail.size()));
    return tail;
}

/// Owns the argv/envp arrays handed to posix_spawn.
class ChildImage {
  public:
    ChildImage(const std::vector<std::string>& argv, const EnvList& overrides) {
        std::map<std::string, std::string> env;
        for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
            std::string_view kv(*e);
            auto eq = kv.find('=');
            if (eq != std::string_view::npos) {
                env.insert_or_assign(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
            }
        }
        for (const auto& [name, value] : overrides) {
            env.insert_or_assign(name, value);
        }
        for (auto& [name, value] : env) {
            env_storage_.push_back(name + "=" + value);
        }
        argv_storage_ = argv;
        for (auto& a : argv_storage_) {
            argv_.push_back(a.data());
        }
        argv_.push_back(nullptr);
        for (auto& e : env_storage_) {
            envp_.push_back(e.data());
        }
        envp_.push_back(nullptr);
    }

    [[nodiscard]] char* const* argv() const noexcept {
        return argv_.data();
    }

    [[nodiscard]] char* const* envp() const noexcept {
        return envp_.data();
    }

  private:
    std::vector<std::string> argv_storage_;
    std::vector<std::string> env_storage_;
    std::vector<char*> argv_;
    std::vector<char*> envp_;
};

class Fd {
  public:
    explicit Fd(const std::filesystem::path& path)
        : fd_(::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644)) {
        if (fd_ < 0) {
            throw Error(
                ErrorCode::IoError,
                fmt::format("cannot open {}: {}", path.string(), std::strerror(errno))
            );
        }
    }

    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;

    ~Fd() {
        ::close(fd_);
    }

    [[nodiscard]] int get() const noexcept {
        return fd_;
    }

  private:
    int fd_;
};

int decode_status(int status) {
    if (WIFEXITED(status)) {
        return WEXITSTATUS(status);
    }
    if (WIFSIGNALED(status)) {
        return 128 + WTERMSIG(status);
    }
    return -1;
}

struct LaneContext {
    const LaunchPlan& plan;
    const ExecOptions& options;
    Clock::time_point origin;
    std::mutex& sink_mutex;
    std::vector<TaskResult>& sink;
};

TaskResult run_task(const LaneContext& ctx, const SlotBinding& binding, const TaskDef& task) {
    TaskResult r;
    r.task_id = task.task_id;
    r.slot_index = binding.slot_index;
    r.gpu_index = binding.gpu_index;

    auto out_path = ctx.options.log_dir / fmt::format("task_{}.out", task.task_id);
    auto err_path = ctx.options.log_dir / fmt::format("task_{}.err", task.task_id);

    EnvList env = binding.env;
    env.emplace_back(ctx.plan.names.task_id, std::to_string(task.task_id));
    env.insert(env.end(), task.extra_env.begin(), task.extra_env.end());
    ChildImage image(task.argv, env);

    Fd out(out_path);
    Fd err(err_path);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, out.get(), STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, err.get(), STDERR_FILENO);
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);

    pid_t pid = -1;
    r.start_ms = ms_since(ctx.origin);
    int rc = posix_spawnp(&pid, image.argv()[0], &actions, &attr, image.argv(), image.envp());
    posix_spawn_file_actions_destroy(&actions);
    posix_spawnattr_destroy(&attr);

    if (rc != 0) {
        r.end_ms = ms_since(ctx.origin);
        r.exit_status = -1;
        r.failure = FailureClass::Generic;
        auto msg = fmt::format("triples: cannot spawn '{}': {}\n", task.argv.front(), std::strerror(rc));
        [[maybe_unused]] auto n = ::write(err.get(), msg.data(), msg.size());
        return r;
    }

    int status = 0;
    bool timed_out = false;
    if (!ctx.options.task_timeout) {
        while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
        }
    } else {
        auto deadline = Clock::now() + *ctx.options.task_timeout;
        for (;;) {
            pid_t done = ::waitpid(pid, &status, WNOHANG);
            if (done == pid || (done < 0 && errno != EINTR)) {
                break;
            }
            if (Clock::now() >= deadline) {
                ::kill(-pid, SIGKILL);
                ::kill(pid, SIGKILL);
                while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
                }
                timed_out = true;
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
    }
    r.end_ms = ms_since(ctx.origin);
    r.exit_status = decode_status(status);

    if (timed_out) {
        r.failure = FailureClass::Timeout;
    } else if (r.exit_status != 0) {
        r.failure = classify_failure(
            r.exit_status, read_tail(err_path, ctx.options.stderr_tail_bytes), ctx.options.oom_patterns
        );
    }
    return r;
}

std::string utc_now_iso() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

int RunReport::failures() const noexcept {
    return static_cast<int>(std::count_if(results.begin(), results.end(), [](const TaskResult& r) {
        return r.exit_status != 0 || r.failure != FailureClass::None;
    }));
}

const std::vector<std::string>& default_oom_patterns() {
    static const std::vector<std::string> patterns{
        "out of memory",
        "cuda_error_out_of_memory",
        "outofmemoryerror",
        "oom-kill",
        "cannot allocate memory",
    };
    return patterns;
}

FailureClass classify_failure(
    int /*exit_status*/, std::string_view stderr_tail, const std::vector<std::string>& patterns
) {
    auto haystack = lower(stderr_tail);
    for (const auto& p : patterns) {
        if (!p.empty() && haystack.find(lower(p)) != std::string::npos) {
            return FailureClass::Oom;
        }
    }
    return FailureClass::Generic;
}

int max_concurrency(const std::vector<TaskResult>& results) {
    // Ends sort before starts at equal timestamps: back-to-back tasks do not overlap.
    std::vector<std::pair<double, int>> events;
    events.reserve(results.size() * 2);
    for (const auto& r : results) {
        events.emplace_back(r.start_ms, +1);
        events.emplace_back(r.end_ms, -1);
    }
    std::sort(events.begin(), events.end());
    int open = 0;
    int best = 0;
    for (const auto& [t, delta] : events) {
        open += delta;
        best = std::max(best, open);
    }
    return best;
}

int launcher_exit_status(const RunReport& report) noexcept {
    return std::min(report.failures(), 125);
}

RunReport run_plan(const LaunchPlan& plan, int node_index, const ExecOptions& options) {
    if (node_index < 0 || node_index >= plan.triple.nnode) {
        throw Error(
            ErrorCode::BadNodeIndex,
            fmt::format("node index {} outside [0, {})", node_index, plan.triple.nnode)
        );
    }
    std::error_code ec;
    std::filesystem::create_directories(options.log_dir, ec);
    if (ec) {
        throw Error(
            ErrorCode::IoError,
            fmt::format("cannot create log directory {}: {}", options.log_dir.string(), ec.message())
        );
    }

    RunReport report;
    report.plan = plan_summary(plan);
    report.node_index = node_index;
    report.started_at = utc_now_iso();

    std::mutex sink_mutex;
    std::vector<TaskResult> sink;
    auto origin = Clock::now();
    LaneContext ctx{plan, options, origin, sink_mutex, sink};

    {
        std::vector<std::jthread> lanes;
        lanes.reserve(static_cast<std::size_t>(plan.triple.nppn));
        for (int slot = 0; slot < plan.triple.nppn; ++slot) {
            lanes.emplace_back([&ctx, &plan, node_index, slot] {
                const auto& binding = plan.binding(node_index, slot);
                for (const auto& task : plan.queue(node_index, slot)) {
                    TaskResult r;
                    try {
                        r = run_task(ctx, binding, task);
                    } catch (const Error&) {
                        r.task_id = task.task_id;
                        r.slot_index = slot;
                        r.gpu_index = binding.gpu_index;
                        r.start_ms = r.end_ms = ms_since(ctx.origin);
                        r.exit_status = -1;
                        r.failure = FailureClass::Generic;
                    }
                    std::lock_guard lock(ctx.sink_mutex);
                    ctx.sink.push_back(r);
                }
            });
        }
    }

    report.elapsed_ms = ms_since(origin);
    std::sort(sink.begin(), sink.end(), [](const TaskResult& a, const TaskResult& b) {
        return a.task_id < b.task_id;
    });
    report.results = std::move(sink);
    report.max_observed_concurrency = max_concurrency(report.results);
    return report;
}

std::string to_json(const RunReport& report) {
    nlohmann::ordered_json j;
    j["plan"] = nlohmann::ordered_json::parse(to_json(report.plan));
    j["node_index"] = report.node_index;
    j["started_at"] = report.started_at;
    j["elapsed_ms"] = report.elapsed_ms;
    j["max_observed_concurrency"] = report.max_observed_concurrency;
    j["failures"] = report.failures();
    auto results = nlohmann::ordered_json::array();
    for (const auto& r : report.results) {
        nlohmann::ordered_json e;
        e["task_id"] = r.task_id;
        e["slot_index"] = r.slot_index;
        e["gpu_index"] = r.gpu_index ? nlohmann::ordered_json(*r.gpu_index) : nlohmann::ordered_json();
        e["start_ms"] = r.start_ms;
        e["end_ms"] = r.end_ms;
        e["exit_status"] = r.exit_status;
        e["oom"] = r.oom();
        e["failure"] = to_string(r.failure);
        results.push_back(std::move(e));
    }
    j["results"] = std::move(results);
    return j.dump(2) + "\n";
}

RunReport run_report_from_json(const std::string& text) {
    try {
        auto j = nlohmann::json::parse(text);
        RunReport report;
        report.plan = plan_summary_from_json(j.at("plan").dump());
        report.node_index = j.at("node_index").get<int>();
        report.started_at = j.value("started_at", "");
        report.elapsed_ms = j.at("elapsed_ms").get<double>();
        report.max_observed_concurrency = j.at("max_observed_concurrency").get<int>();
        for (const auto& e : j.at("results")) {
            TaskResult r;
            r.task_id = e.at("task_id").get<long>();
            r.slot_index = e.at("slot_index").get<int>();
            if (!e.at("gpu_index").is_null()) {
                r.gpu_index = e.at("gpu_index").get<int>();
            }
            r.start_ms = e.at("start_ms").get<double>();
            r.end_ms = e.at("end_ms").get<double>();
            r.exit_status = e.at("exit_status").get<int>();
            r.failure = failure_from_string(e.at("failure").get<std::string>());
            report.results.push_back(r);
        }
        return report;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("bad run report: {}", e.what()));
    }
}

}  // namespace triples
