/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

/**
 * @file telemetry.hpp
 * @brief Node resource sampling: CPU load, system memory, per-GPU load and
 * per-GPU memory, collected periodically while a run is in progress.
 *
 * "GPU load" of a node is the sum of per-device utilization fractions, so a
 * two-GPU node ranges over [0, 2]. Memory is kept in MiB.
 */

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <triples/error.hpp>

namespace triples {

struct GpuReading {
    double util{0};  // [0, 1]
    long mem_mib{0};

    friend bool operator==(const GpuReading&, const GpuReading&) = default;
};

struct TelemetrySample {
    double t{0};  // seconds since run start
    double cpu_load{0};
    long sys_mem_mib{0};
    std::vector<GpuReading> gpu;

    [[nodiscard]] double gpu_load() const noexcept;
    [[nodiscard]] long gpu_mem_mib() const noexcept;

    friend bool operator==(const TelemetrySample&, const TelemetrySample&) = default;
};

/// Samples plus the times of ticks whose query failed.
struct TelemetrySeries {
    int gpus{0};
    std::vector<TelemetrySample> samples;
    std::vector<double> gaps;

    friend bool operator==(const TelemetrySeries&, const TelemetrySeries&) = default;
};

class TelemetryProvider {
  public:
    virtual ~TelemetryProvider() = default;

    [[nodiscard]] virtual int gpus() const = 0;

    /// One reading; `t` is the sampler's time since run start. Implementations
    /// throw Error(SampleError) instead of returning partial data.
    [[nodiscard]] virtual TelemetrySample query(double t) = 0;
};

/// Query the provider and check the reading's shape. Throws Error(SampleError).
[[nodiscard]] TelemetrySample sample_once(TelemetryProvider& provider, double t = 0);

/// Column mapping for an external device-query command that prints one CSV
/// row per GPU.
struct QueryCommandConfig {
    std::string command{
        "nvidia-smi --query-gpu=utilization.gpu,memory.used --format=csv,noheader,nounits"
    };
    int util_column{0};
    int mem_column{1};
    double util_scale{0.01};  // percent -> fraction
    double mem_scale{1.0};    // -> MiB
};

/// Parse the command's output into per-GPU readings; throws Error(SampleError)
/// on a row count mismatch or an unparsable field.
[[nodiscard]] std::vector<GpuReading> parse_query_output(
    std::string_view text, const QueryCommandConfig& config, int expected_gpus
);

/// Host-side readings from /proc: 1-minute load average and used memory.
class CommandProvider final : public TelemetryProvider {
  public:
    CommandProvider(QueryCommandConfig config, int gpus);

    [[nodiscard]] int gpus() const override {
        return gpus_;
    }

    [[nodiscard]] TelemetrySample query(double t) override;

  private:
    QueryCommandConfig config_;
    int gpus_;
};

/// Constant readings or step-wise replay of a fixed trace.
class SyntheticProvider final : public TelemetryProvider {
  public:
    static SyntheticProvider constant(int gpus, double util, long mem_mib, double cpu_load = 0, long sys_mem_mib = 0);

    /// Reading at time t is the last trace sample with sample.t <= t.
    static SyntheticProvider replay(int gpus, std::vector<TelemetrySample> trace);

    [[nodiscard]] int gpus() const override {
        return gpus_;
    }

    [[nodiscard]] TelemetrySample query(double t) override;

  private:
    SyntheticProvider(int gpus, std::vector<TelemetrySample> trace)
        : gpus_(gpus), trace_(std::move(trace)) {}

    int gpus_;
    std::vector<TelemetrySample> trace_;
};

/// Time source for the sampler.
class SamplerClock {
  public:
    virtual ~SamplerClock() = default;

    /// Seconds since the clock was created.
    [[nodiscard]] virtual double now() = 0;

    /// Block until `t`; false when stopped first.
    virtual bool sleep_until(double t, std::stop_token stop) = 0;
};

class SteadySamplerClock final : public SamplerClock {
  public:
    SteadySamplerClock() : origin_(std::chrono::steady_clock::now()) {}

    [[nodiscard]] double now() override;
    bool sleep_until(double t, std::stop_token stop) override;

  private:
    std::chrono::steady_clock::time_point origin_;
    std::mutex mutex_;
    std::condition_variable_any cv_;
};

/// Jumps instantly; stops once asked to sleep past `stop_at`.
class VirtualSamplerClock final : public SamplerClock {
  public:
    explicit VirtualSamplerClock(double stop_at) : stop_at_(stop_at) {}

    [[nodiscard]] double now() override {
        return now_;
    }

    bool sleep_until(double t, std::stop_token stop) override;

  private:
    double stop_at_;
    double now_{0};
};

/**
 * @brief Sample every `interval_s` seconds until stopped.
 *
 * Ticks are scheduled at k * interval_s from the clock origin, starting with
 * k = 0; ticks missed because a query overran are skipped rather than burst.
 * Failed queries are recorded in `gaps`. Throws Error(ParseError) if
 * interval_s <= 0.
 */
[[nodiscard]] TelemetrySeries run_sampler(
    TelemetryProvider& provider, double interval_s, std::stop_token stop, SamplerClock& clock
);

/// run_sampler on a background thread with a steady clock.
class BackgroundSampler {
  public:
    BackgroundSampler(std::shared_ptr<TelemetryProvider> provider, double interval_s);
    ~BackgroundSampler();

    BackgroundSampler(const BackgroundSampler&) = delete;
    BackgroundSampler& operator=(const BackgroundSampler&) = delete;

    /// Request stop, join, and return everything collected.
    TelemetrySeries stop();

  private:
    std::shared_ptr<TelemetryProvider> provider_;
    TelemetrySeries result_;
    std::jthread thread_;
    bool stopped_{false};
};

struct Metric {
    enum class Kind { CpuLoad, SysMem, GpuLoad, GpuMem, DeviceUtil, DeviceMem };

    Kind kind{Kind::GpuLoad};
    int device{0};

    [[nodiscard]] std::string name() const;
    [[nodiscard]] double of(const TelemetrySample& s) const;

    /// Accepts cpu_load, sys_mem_mib, gpu_load, gpu_mem_mib, gpuN_util, gpuN_mem_mib.
    [[nodiscard]] static Metric parse(std::string_view name);
};

struct SeriesStats {
    std::string metric;
    double min{0};
    double avg{0};
    double max{0};
    std::size_t n_samples{0};
};

/// Exact min/avg/max over the samples. Throws Error(EmptySeries).
[[nodiscard]] SeriesStats series_stats(const std::vector<TelemetrySample>& samples, const Metric& metric);

/// CSV: t_s,cpu_load,sys_mem_mib,gpu0_util,gpu0_mem_mib,...; a gap is a row
/// with only t_s filled in. Values are printed in shortest round-trip form.
[[nodiscard]] std::string to_csv(const TelemetrySeries& series);
[[nodiscard]] TelemetrySeries telemetry_from_csv(std::string_view text);

}  // namespace triples
