// SPDX-License-Identifier: Apache-2.0
#include "file_util.hpp"

#include <steward/protocol/message.hpp>
#include <steward/tools/tools.hpp>

#include <fmt/format.h>

namespace steward::tools
{

using protocol::ToolOutcome;

auto tool_read(const std::filesystem::path& working_dir, const std::string& path, const ToolLimits& limits)
    -> ToolOutcome
{
    if (path.empty())
        return ToolOutcome::failure("InvalidArguments", "path must not be empty, e.g. read(path=\"src/main.cpp\")");

    auto const full = detail::resolve(working_dir, path);
    auto bytes = std::string {};
    if (auto error = detail::read_file(full, path, bytes))
        return *error;

    auto const truncated = bytes.size() > limits.read_cap;
    auto content = protocol::sanitize_utf8(std::string_view(bytes).substr(0, limits.read_cap));
    if (truncated)
        content += TruncationMarker;

    return ToolOutcome::success({
        { "path", path },
        { "content", std::move(content) },
        { "hash", sha256_hex(bytes) },
        { "size", bytes.size() },
        { "truncated", truncated },
    });
}

} // namespace steward::tools
