// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/protocol/bodies.hpp>

#include <fmt/format.h>

#include <sys/stat.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

namespace steward::tools::detail
{

inline auto resolve(const std::filesystem::path& working_dir, const std::string& path) -> std::filesystem::path
{
    auto p = std::filesystem::path(path);
    return p.is_absolute() ? p : working_dir / p;
}

/// Reads the whole file; on failure returns the model-facing error outcome.
/// `shown` is the path as the model wrote it.
inline auto read_file(const std::filesystem::path& full, const std::string& shown, std::string& bytes)
    -> std::optional<protocol::ToolOutcome>
{
    using protocol::ToolOutcome;

    struct stat st {};
    if (::stat(full.c_str(), &st) != 0)
    {
        if (errno == EACCES)
            return ToolOutcome::failure("PermissionDenied", fmt::format("permission denied reading {}", shown));
        return ToolOutcome::failure(
            "NotFound",
            fmt::format("{} does not exist. Check the path against the project structure; paths are relative to the "
                        "working directory.",
                        shown));
    }
    if (S_ISDIR(st.st_mode))
        return ToolOutcome::failure(
            "NotAFile",
            fmt::format("{} is a directory, not a file. Use shell with ls to list its contents.", shown));
    if (!S_ISREG(st.st_mode))
        return ToolOutcome::failure("NotAFile", fmt::format("{} is not a regular file", shown));

    auto in = std::ifstream(full, std::ios::binary);
    if (!in)
    {
        if (errno == EACCES)
            return ToolOutcome::failure("PermissionDenied", fmt::format("permission denied reading {}", shown));
        return ToolOutcome::failure("ReadFailed", fmt::format("cannot open {}: {}", shown, std::strerror(errno)));
    }
    auto buffer = std::ostringstream {};
    buffer << in.rdbuf();
    bytes = std::move(buffer).str();
    return std::nullopt;
}

} // namespace steward::tools::detail
