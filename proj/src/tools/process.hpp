// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace steward::tools::detail
{

struct ProcessResult
{
    bool spawned = false;
    std::string spawn_error;
    bool timed_out = false;
    int exit_code = -1; // 128 + signal when killed by a signal
    std::string out;
    std::string err;
    bool out_truncated = false;
    bool err_truncated = false;
    std::chrono::milliseconds duration { 0 };
};

/// Runs argv in its own process group with stdin from /dev/null, capturing
/// up to `cap` bytes of each output stream. On timeout the group gets
/// SIGTERM, then SIGKILL.
auto run_process(const std::filesystem::path& working_dir,
                 const std::vector<std::string>& argv,
                 std::chrono::milliseconds timeout,
                 std::size_t cap,
                 std::chrono::milliseconds drain_grace) -> ProcessResult;

} // namespace steward::tools::detail
