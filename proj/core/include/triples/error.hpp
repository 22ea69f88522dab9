/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace triples {

enum class ErrorCode {
    NonPositiveField,
    CpuOversubscribed,
    InvalidNode,
    NoGpu,
    EmptyWorkload,
    BadNodeIndex,
    BadWorkload,
    SpawnFailure,
    SampleError,
    EmptySeries,
    MissingBaseline,
    BadProfile,
    ParseError,
    IoError,
};

[[nodiscard]] std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept {
        return code_;
    }

  private:
    ErrorCode code_;
};

}  // namespace triples
