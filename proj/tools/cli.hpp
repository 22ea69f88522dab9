/**
 * SPDX-FileCopyrightText: Copyright (c) 2026, The triples-launcher authors.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace triples::cli {

/// Exit status for usage and configuration errors.
inline constexpr int kUsageError = 2;

/// Entry point of the `triples` command. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace triples::cli
