/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#include <triples/telemetry.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <fmt/format.h>

namespace triples {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t begin = 0;
    for (;;) {
        auto pos = line.find(sep, begin);
        out.push_back(line.substr(begin, pos == std::string_view::npos ? pos : pos - begin));
        if (pos == std::string_view::npos) {
            break;
        }
        begin = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

std::optional<double> to_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) {
        return std::nullopt;
    }
    std::string buf(s);
    char* end = nullptr;
    double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> out;
    for (auto line : split(text, '\n')) {
        line = trim(line);
        if (!line.empty()) {
            out.push_back(line);
        }
    }
    return out;
}

long host_used_mem_mib() {
    std::ifstream in("/proc/meminfo");
    if (!in) {
        throw Error(ErrorCode::SampleError, "cannot read /proc/meminfo");
    }
    long total_kb = -1;
    long avail_kb = -1;
    std::string key;
    long value = 0;
    std::string unit;
    while (in >> key >> value) {
        std::getline(in, unit);
        if (key == "MemTotal:") {
            total_kb = value;
        } else if (key == "MemAvailable:") {
            avail_kb = value;
        }
    }
    if (total_kb < 0 || avail_kb < 0) {
        throw Error(ErrorCode::SampleError, "/proc/meminfo lacks MemTotal or MemAvailable");
    }
    return (total_kb - avail_kb) / 1024;
}

}  // namespace

double TelemetrySample::gpu_load() const noexcept {
    double sum = 0;
    for (const auto& g : gpu) {
        sum += g.util;
    }
    return sum;
}

long TelemetrySample::gpu_mem_mib() const noexcept {
    long sum = 0;
    for (const auto& g : gpu) {
        sum += g.mem_mib;
    }
    return sum;
}

TelemetrySample sample_once(TelemetryProvider& provider, double t) {
    auto s = provider.query(t);
    if (static_cast<int>(s.gpu.size()) != provider.gpus()) {
        throw Error(
            ErrorCode::SampleError,
            fmt::format("provider returned {} GPU readings, expected {}", s.gpu.size(), provider.gpus())
        );
    }
    for (const auto& g : s.gpu) {
        if (!(g.util >= 0.0 && g.util <= 1.0) || g.mem_mib < 0) {
            throw Error(
                ErrorCode::SampleError,
                fmt::format("GPU reading out of range: util {} mem {}", g.util, g.mem_mib)
            );
        }
    }
    if (!(s.cpu_load >= 0) || s.sys_mem_mib < 0) {
        throw Error(ErrorCode::SampleError, "host reading out of range");
    }
    s.t = t;
    return s;
}

std::vector<GpuReading> parse_query_output(
    std::string_view text, const QueryCommandConfig& config, int expected_gpus
) {
    auto rows = lines_of(text);
    if (static_cast<int>(rows.size()) != expected_gpus) {
        throw Error(
            ErrorCode::SampleError,
            fmt::format("device query printed {} rows, expected {}", rows.size(), expected_gpus)
        );
    }
    std::vector<GpuReading> out;
    out.reserve(rows.size());
    for (auto row : rows) {
        auto fields = split(row, ',');
        auto need = static_cast<std::size_t>(std::max(config.util_column, config.mem_column));
        if (fields.size() <= need) {
            throw Error(ErrorCode::SampleError, fmt::format("short device query row '{}'", row));
        }
        auto util = to_double(fields[static_cast<std::size_t>(config.util_column)]);
        auto mem = to_double(fields[static_cast<std::size_t>(config.mem_column)]);
        if (!util || !mem) {
            throw Error(ErrorCode::SampleError, fmt::format("unparsable device query row '{}'", row));
        }
        out.push_back(GpuReading{
            std::clamp(*util * config.util_scale, 0.0, 1.0),
            std::lround(*mem * config.mem_scale),
        });
    }
    return out;
}

CommandProvider::CommandProvider(QueryCommandConfig config, int gpus)
    : config_(std::move(config)), gpus_(gpus) {}

TelemetrySample CommandProvider::query(double t) {
    TelemetrySample s;
    s.t = t;
    double load[1];
    if (::getloadavg(load, 1) != 1) {
        throw Error(ErrorCode::SampleError, "getloadavg failed");
    }
    s.cpu_load = load[0];
    s.sys_mem_mib = host_used_mem_mib();
    if (gpus_ == 0) {
        return s;
    }

    std::string cmd = config_.command + " 2>/dev/null";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (pipe == nullptr) {
        throw Error(ErrorCode::SampleError, fmt::format("cannot run '{}'", config_.command));
    }
    std::string output;
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) {
        output.append(buf, n);
    }
    int status = ::pclose(pipe);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw Error(ErrorCode::SampleError, fmt::format("device query '{}' failed", config_.command));
    }
    s.gpu = parse_query_output(output, config_, gpus_);
    return s;
}

SyntheticProvider SyntheticProvider::constant(
    int gpus, double util, long mem_mib, double cpu_load, long sys_mem_mib
) {
    TelemetrySample s;
    s.cpu_load = cpu_load;
    s.sys_mem_mib = sys_mem_mib;
    s.gpu.assign(static_cast<std::size_t>(gpus), GpuReading{util, mem_mib});
    return SyntheticProvider(gpus, {s});
}

SyntheticProvider SyntheticProvider::replay(int gpus, std::vector<TelemetrySample> trace) {
    std::stable_sort(trace.begin(), trace.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    return SyntheticProvider(gpus, std::move(trace));
}

TelemetrySample SyntheticProvider::query(double t) {
    if (trace_.empty()) {
        throw Error(ErrorCode::SampleError, "synthetic provider has no data");
    }
    // Constant providers hold a single sample at t = 0 and answer for any time.
    auto it = std::upper_bound(trace_.begin(), trace_.end(), t, [](double v, const auto& s) {
        return v < s.t;
    });
    if (it == trace_.begin()) {
        throw Error(ErrorCode::SampleError, fmt::format("no synthetic data at t = {}", t));
    }
    auto s = *std::prev(it);
    s.t = t;
    return s;
}

double SteadySamplerClock::now() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - origin_).count();
}

bool SteadySamplerClock::sleep_until(double t, std::stop_token stop) {
    auto deadline = origin_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double>(t)
                              );
    std::unique_lock lock(mutex_);
    cv_.wait_until(lock, stop, deadline, [] { return false; });
    return !stop.stop_requested();
}

bool VirtualSamplerClock::sleep_until(double t, std::stop_token stop) {
    if (stop.stop_requested() || t > stop_at_) {
        return false;
    }
    now_ = std::max(now_, t);
    return true;
}

TelemetrySeries run_sampler(
    TelemetryProvider& provider, double interval_s, std::stop_token stop, SamplerClock& clock
) {
    if (!(interval_s > 0)) {
        throw Error(ErrorCode::ParseError, fmt::format("sampling interval must be > 0, got {}", interval_s));
    }
    TelemetrySeries series;
    series.gpus = provider.gpus();
    long tick = 0;
    while (!stop.stop_requested()) {
        if (!clock.sleep_until(static_cast<double>(tick) * interval_s, stop)) {
            break;
        }
        double t = clock.now();
        try {
            series.samples.push_back(sample_once(provider, t));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SampleError) {
                throw;
            }
            series.gaps.push_back(t);
        }
        tick = std::max(tick + 1, static_cast<long>(std::floor(clock.now() / interval_s)) + 1);
    }
    return series;
}

BackgroundSampler::BackgroundSampler(std::shared_ptr<TelemetryProvider> provider, double interval_s)
    : provider_(std::move(provider)) {
    if (!(interval_s > 0)) {
        throw Error(ErrorCode::ParseError, fmt::format("sampling interval must be > 0, got {}", interval_s));
    }
    thread_ = std::jthread([this, interval_s](std::stop_token st) {
        SteadySamplerClock clock;
        result_ = run_sampler(*provider_, interval_s, st, clock);
    });
}

BackgroundSampler::~BackgroundSampler() {
    if (!stopped_) {
        stop();
    }
}

TelemetrySeries BackgroundSampler::stop() {
    thread_.request_stop();
    if (thread_.joinable()) {
        thread_.join();
    }
    stopped_ = true;
    return result_;
}

std::string Metric::name() const {
    switch (kind) {
    case Kind::CpuLoad:
        return "cpu_load";
    case Kind::SysMem:
        return "sys_mem_mib";
    case Kind::GpuLoad:
        return "gpu_load";
    case Kind::GpuMem:
        return "gpu_mem_mib";
    case Kind::DeviceUtil:
        return fmt::format("gpu{}_util", device);
    case Kind::DeviceMem:
        return fmt::format("gpu{}_mem_mib", device);
    }
    return "unknown";
}

double Metric::of(const TelemetrySample& s) const {
    switch (kind) {
    case Kind::CpuLoad:
        return s.cpu_load;
    case Kind::SysMem:
        return static_cast<double>(s.sys_mem_mib);
    case Kind::GpuLoad:
        return s.gpu_load();
    case Kind::GpuMem:
        return static_cast<double>(s.gpu_mem_mib());
    case Kind::DeviceUtil:
        return s.gpu.at(static_cast<std::size_t>(device)).util;
    case Kind::DeviceMem:
        return static_cast<double>(s.gpu.at(static_cast<std::size_t>(device)).mem_mib);
    }
    return 0;
}

Metric Metric::parse(std::string_view name) {
    if (name == "cpu_load") {
        return {Kind::CpuLoad, 0};
    }
    if (name == "sys_mem_mib") {
        return {Kind::SysMem, 0};
    }
    if (name == "gpu_load") {
        return {Kind::GpuLoad, 0};
    }
    if (name == "gpu_mem_mib") {
        return {Kind::GpuMem, 0};
    }
    if (name.substr(0, 3) == "gpu") {
        auto rest = name.substr(3);
        auto us = rest.find('_');
        int device = 0;
        if (us != std::string_view::npos && us > 0) {
            auto idx = to_double(rest.substr(0, us));
            if (idx && *idx >= 0 && *idx == std::floor(*idx)) {
                device = static_cast<int>(*idx);
                auto suffix = rest.substr(us + 1);
                if (suffix == "util") {
                    return {Kind::DeviceUtil, device};
                }
                if (suffix == "mem_mib") {
                    return {Kind::DeviceMem, device};
                }
            }
        }
    }
    throw Error(ErrorCode::ParseError, fmt::format("unknown metric '{}'", name));
}

SeriesStats series_stats(const std::vector<TelemetrySample>& samples, const Metric& metric) {
    if (samples.empty()) {
        throw Error(ErrorCode::EmptySeries, fmt::format("no samples for {}", metric.name()));
    }
    SeriesStats st;
    st.metric = metric.name();
    st.n_samples = samples.size();
    st.min = st.max = metric.of(samples.front());
    long double sum = 0;
    for (const auto& s : samples) {
        double v = metric.of(s);
        st.min = std::min(st.min, v);
        st.max = std::max(st.max, v);
        sum += v;
    }
    // The true mean lies in [min, max]; rounding must not push it outside.
    st.avg = std::clamp(static_cast<double>(sum / static_cast<long double>(samples.size())), st.min, st.max);
    return st;
}

std::string to_csv(const TelemetrySeries& series) {
    std::string out = "t_s,cpu_load,sys_mem_mib";
    for (int g = 0; g < series.gpus; ++g) {
        out += fmt::format(",gpu{0}_util,gpu{0}_mem_mib", g);
    }
    out += '\n';

    // Merge samples and gaps by time.
    std::size_t si = 0;
    std::size_t gi = 0;
    while (si < series.samples.size() || gi < series.gaps.size()) {
        bool take_gap = si == series.samples.size()
                        || (gi < series.gaps.size() && series.gaps[gi] < series.samples[si].t);
        if (take_gap) {
            out += fmt::format("{}", series.gaps[gi++]);
            out += std::string(static_cast<std::size_t>(2 + 2 * series.gpus), ',');
        } else {
            const auto& s = series.samples[si++];
            out += fmt::format("{},{},{}", s.t, s.cpu_load, s.sys_mem_mib);
            for (const auto& g : s.gpu) {
                out += fmt::format(",{},{}", g.util, g.mem_mib);
            }
        }
        out += '\n';
    }
    return out;
}

TelemetrySeries telemetry_from_csv(std::string_view text) {
    auto rows = lines_of(text);
    if (rows.empty()) {
        throw Error(ErrorCode::ParseError, "telemetry CSV has no header");
    }
    auto header = split(rows.front(), ',');
    if (header.size() < 3 || (header.size() - 3) % 2 != 0 || trim(header[0]) != "t_s") {
        throw Error(ErrorCode::ParseError, fmt::format("bad telemetry CSV header '{}'", rows.front()));
    }
    TelemetrySeries series;
    series.gpus = static_cast<int>((header.size() - 3) / 2);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        auto fields = split(rows[r], ',');
        if (fields.size() != header.size()) {
            throw Error(ErrorCode::ParseError, fmt::format("bad telemetry CSV row '{}'", rows[r]));
        }
        auto t = to_double(fields[0]);
        if (!t) {
            throw Error(ErrorCode::ParseError, fmt::format("bad time in row '{}'", rows[r]));
        }
        bool gap = std::all_of(fields.begin() + 1, fields.end(), [](auto f) { return trim(f).empty(); });
        if (gap) {
            series.gaps.push_back(*t);
            continue;
        }
        std::vector<double> values;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            auto v = to_double(fields[i]);
            if (!v) {
                throw Error(ErrorCode::ParseError, fmt::format("bad value in row '{}'", rows[r]));
            }
            values.push_back(*v);
        }
        TelemetrySample s;
        s.t = *t;
        s.cpu_load = values[0];
        s.sys_mem_mib = std::lround(values[1]);
        for (int g = 0; g < series.gpus; ++g) {
            s.gpu.push_back(GpuReading{
                values[2 + 2 * static_cast<std::size_t>(g)],
                std::lround(values[3 + 2 * static_cast<std::size_t>(g)]),
            });
        }
        series.samples.push_back(std::move(s));
    }
    return series;
}

}  // namespace triples
