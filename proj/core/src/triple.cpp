/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#include <triples/triple.hpp>

#include <charconv>

#include <fmt/format.h>

namespace triples {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::NonPositiveField:
        return "NonPositiveField";
    case ErrorCode::CpuOversubscribed:
        return "CpuOversubscribed";
    case ErrorCode::InvalidNode:
        return "InvalidNode";
    case ErrorCode::NoGpu:
        return "NoGpu";
    case ErrorCode::EmptyWorkload:
        return "EmptyWorkload";
    case ErrorCode::BadNodeIndex:
        return "BadNodeIndex";
    case ErrorCode::BadWorkload:
        return "BadWorkload";
    case ErrorCode::SpawnFailure:
        return "SpawnFailure";
    case ErrorCode::SampleError:
        return "SampleError";
    case ErrorCode::EmptySeries:
        return "EmptySeries";
    case ErrorCode::MissingBaseline:
        return "MissingBaseline";
    case ErrorCode::BadProfile:
        return "BadProfile";
    case ErrorCode::ParseError:
        return "ParseError";
    case ErrorCode::IoError:
        return "IoError";
    }
    return "Unknown";
}

namespace {

int parse_int_field(std::string_view text, std::string_view whole) {
    while (!text.empty() && text.front() == ' ') {
        text.remove_prefix(1);
    }
    while (!text.empty() && text.back() == ' ') {
        text.remove_suffix(1);
    }
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw Error(
            ErrorCode::ParseError,
            fmt::format("malformed triple '{}': expected NNODE,NPPN,NTPP", whole)
        );
    }
    return value;
}

}  // namespace

TripleSpec parse_triple(std::string_view text) {
    auto first = text.find(',');
    auto second = first == std::string_view::npos ? first : text.find(',', first + 1);
    if (second == std::string_view::npos || text.find(',', second + 1) != std::string_view::npos)
    {
        throw Error(
            ErrorCode::ParseError,
            fmt::format("malformed triple '{}': expected NNODE,NPPN,NTPP", text)
        );
    }
    return TripleSpec{
        parse_int_field(text.substr(0, first), text),
        parse_int_field(text.substr(first + 1, second - first - 1), text),
        parse_int_field(text.substr(second + 1), text),
    };
}

std::string format_triple(const TripleSpec& triple) {
    return fmt::format("{},{},{}", triple.nnode, triple.nppn, triple.ntpp);
}

void check_node(const NodeSpec& node) {
    if (node.cores < 1) {
        throw Error(ErrorCode::InvalidNode, fmt::format("node cores must be >= 1, got {}", node.cores));
    }
    if (node.gpus < 0) {
        throw Error(ErrorCode::InvalidNode, fmt::format("node gpus must be >= 0, got {}", node.gpus));
    }
    if (node.gpus > 0 && node.gpu_mem_mib <= 0) {
        throw Error(
            ErrorCode::InvalidNode,
            fmt::format("node has {} GPUs but gpu_mem_mib = {}", node.gpus, node.gpu_mem_mib)
        );
    }
}

Validation validate_triple(
    const TripleSpec& triple, const NodeSpec& node, Oversubscription policy
) {
    Validation v;
    if (triple.nnode < 1 || triple.nppn < 1 || triple.ntpp < 1) {
        v.status = Validation::Status::Error;
        v.error = ErrorCode::NonPositiveField;
        v.message = fmt::format("triple ({}) has a field below 1", format_triple(triple));
        return v;
    }
    long demand = static_cast<long>(triple.nppn) * triple.ntpp;
    if (demand > node.cores) {
        auto msg = fmt::format(
            "NPPN x NTPP = {} x {} = {} exceeds {} physical cores",
            triple.nppn,
            triple.ntpp,
            demand,
            node.cores
        );
        if (policy == Oversubscription::Strict) {
            v.status = Validation::Status::Error;
            v.error = ErrorCode::CpuOversubscribed;
            v.message = std::move(msg);
            return v;
        }
        v.status = Validation::Status::Warning;
        v.warnings.push_back(std::move(msg));
    }
    return v;
}

int assign_gpu(int slot_index, int gpus) {
    if (gpus < 1) {
        throw Error(ErrorCode::NoGpu, "cannot assign a GPU on a node without GPUs");
    }
    return slot_index % gpus;
}

EnvList render_env(const SlotBinding& binding, const EnvNames& names) {
    EnvList env;
    env.reserve(5);
    if (binding.gpu_index) {
        env.emplace_back(names.device_visibility, std::to_string(*binding.gpu_index));
    }
    env.emplace_back(names.thread_count, std::to_string(binding.thread_count));
    env.emplace_back(names.node_index, std::to_string(binding.node_index));
    env.emplace_back(names.slot_index, std::to_string(binding.slot_index));
    env.emplace_back(names.num_slots, std::to_string(binding.total_slots));
    return env;
}

std::vector<SlotBinding> expand_slots(
    const TripleSpec& triple, const NodeSpec& node, const EnvNames& names
) {
    if (triple.nnode < 1 || triple.nppn < 1 || triple.ntpp < 1) {
        throw Error(
            ErrorCode::NonPositiveField,
            fmt::format("triple ({}) has a field below 1", format_triple(triple))
        );
    }
    std::vector<SlotBinding> slots;
    slots.reserve(static_cast<std::size_t>(triple.total_processes()));
    for (int n = 0; n < triple.nnode; ++n) {
        for (int s = 0; s < triple.nppn; ++s) {
            SlotBinding b;
            b.node_index = n;
            b.slot_index = s;
            if (node.gpus > 0) {
                b.gpu_index = assign_gpu(s, node.gpus);
            }
            b.thread_count = triple.ntpp;
            b.total_slots = triple.total_processes();
            b.env = render_env(b, names);
            slots.push_back(std::move(b));
        }
    }
    return slots;
}

}  // namespace triples
