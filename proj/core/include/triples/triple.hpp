/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

/**
 * @file triple.hpp
 * @brief Triple layout (nodes, processes per node, threads per process),
 * slot enumeration and per-slot GPU pinning.
 *
 * A triple `(nnode, nppn, ntpp)` describes `nnode * nppn` concurrent process
 * slots. Each slot is pinned to one GPU of its node, cyclically, and throttled
 * to `ntpp` threads. Both are communicated to the child process through
 * environment variables only.
 */

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <triples/error.hpp>

namespace triples {

using EnvPair = std::pair<std::string, std::string>;
using EnvList = std::vector<EnvPair>;

struct TripleSpec {
    int nnode{1};
    int nppn{1};
    int ntpp{1};

    [[nodiscard]] long total_processes() const noexcept {
        return static_cast<long>(nnode) * nppn;
    }

    friend bool operator==(const TripleSpec&, const TripleSpec&) = default;
};

/// Parse the comma-joined form "NNODE,NPPN,NTPP". Throws Error(ParseError).
[[nodiscard]] TripleSpec parse_triple(std::string_view text);

[[nodiscard]] std::string format_triple(const TripleSpec& triple);

struct NodeSpec {
    int cores{1};
    int gpus{0};
    long gpu_mem_mib{0};  // per device

    friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

/// Throws Error(InvalidNode) when cores < 1 or a GPU node has no memory.
void check_node(const NodeSpec& node);

/// Names of the variables exported to every child process.
struct EnvNames {
    std::string device_visibility{"CUDA_VISIBLE_DEVICES"};
    std::string thread_count{"OMP_NUM_THREADS"};
    std::string node_index{"TRIPLES_NODE_INDEX"};
    std::string slot_index{"TRIPLES_SLOT_INDEX"};
    std::string num_slots{"TRIPLES_NUM_SLOTS"};
    std::string task_id{"TRIPLES_TASK_ID"};
};

struct SlotBinding {
    int node_index{0};
    int slot_index{0};
    std::optional<int> gpu_index;
    int thread_count{1};
    long total_slots{1};
    EnvList env;

    /// Node-major position in the slot grid.
    [[nodiscard]] long global_index(int nppn) const noexcept {
        return static_cast<long>(node_index) * nppn + slot_index;
    }

    friend bool operator==(const SlotBinding&, const SlotBinding&) = default;
};

enum class Oversubscription { Warn, Strict };

struct Validation {
    enum class Status { Ok, Warning, Error };

    Status status{Status::Ok};
    std::vector<std::string> warnings;
    std::optional<ErrorCode> error;
    std::string message;

    [[nodiscard]] bool usable() const noexcept {
        return status != Status::Error;
    }
};

/**
 * @brief Check a triple against a node.
 *
 * Any field below 1 is a NonPositiveField error. `nppn * ntpp > cores` is a
 * warning under Oversubscription::Warn and a CpuOversubscribed error under
 * Oversubscription::Strict.
 */
[[nodiscard]] Validation validate_triple(
    const TripleSpec& triple, const NodeSpec& node, Oversubscription policy
);

/// Cyclic round-robin. Throws Error(NoGpu) when gpus == 0.
[[nodiscard]] int assign_gpu(int slot_index, int gpus);

/// Environment pairs for a slot, in a fixed order: device visibility (GPU
/// slots only), thread count, node index, slot index, total slot count.
[[nodiscard]] EnvList render_env(const SlotBinding& binding, const EnvNames& names = {});

/**
 * @brief Enumerate all `nnode * nppn` slots ordered by (node, slot).
 *
 * Throws Error(NonPositiveField) for a malformed triple; oversubscription is
 * the caller's concern (see validate_triple).
 */
[[nodiscard]] std::vector<SlotBinding> expand_slots(
    const TripleSpec& triple, const NodeSpec& node, const EnvNames& names = {}
);

}  // namespace triples
