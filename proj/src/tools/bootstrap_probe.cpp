// SPDX-License-Identifier: Apache-2.0
#include "process.hpp"

#include <steward/protocol/message.hpp>
#include <steward/tools/tools.hpp>

#include <fmt/format.h>

#include <sys/utsname.h>

#include <algorithm>
#include <array>

namespace steward::tools
{

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace
{

constexpr auto kExcluded = std::array<std::string_view, 12> {
    ".git",         ".hg",         ".svn",          "node_modules", "bower_components", ".venv",
    "venv",         "__pycache__", ".mypy_cache",   ".pytest_cache", ".tox",            ".gradle",
};

auto os_name() -> std::string
{
    struct utsname info {};
    if (::uname(&info) != 0)
        return {};
    return fmt::format("{} {}", info.sysname, info.release);
}

auto git_history(const fs::path& dir, int max_commits, std::chrono::milliseconds budget) -> std::vector<std::string>
{
    if (max_commits <= 0 || budget.count() <= 0)
        return {};
    auto const r = detail::run_process(dir,
                                       { "/usr/bin/env",
                                         "git",
                                         "-C",
                                         dir.string(),
                                         "log",
                                         fmt::format("-n{}", max_commits),
                                         "--no-color",
                                         "--pretty=format:%h %s" },
                                       budget,
                                       256 * 1024,
                                       std::chrono::milliseconds(0));
    if (!r.spawned || r.timed_out || r.exit_code != 0)
        return {};

    auto lines = std::vector<std::string> {};
    auto text = std::string_view(r.out);
    while (!text.empty() && static_cast<int>(lines.size()) < max_commits)
    {
        auto const nl = text.find('\n');
        auto line = text.substr(0, nl);
        if (!line.empty())
            lines.push_back(protocol::sanitize_utf8(line));
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    }
    return lines;
}

void walk(const fs::path& root,
          const fs::path& rel,
          int depth,
          const protocol::BootstrapLimits& limits,
          Clock::time_point deadline,
          std::vector<std::string>& out)
{
    if (depth > limits.max_depth)
        return;

    auto ec = std::error_code {};
    auto names = std::vector<std::pair<std::string, bool>> {};
    for (auto it = fs::directory_iterator(root / rel, fs::directory_options::skip_permission_denied, ec);
         !ec && it != fs::directory_iterator();
         it.increment(ec))
    {
        auto const name = it->path().filename().string();
        auto const isDir = it->is_directory(ec) && !it->is_symlink(ec);
        if (isDir && is_excluded_directory(name))
            continue;
        names.emplace_back(name, isDir);
    }
    std::sort(names.begin(), names.end());

    for (auto const& [name, isDir]: names)
    {
        if (static_cast<int>(out.size()) >= limits.max_entries || Clock::now() >= deadline)
            return;
        auto const path = rel / name;
        out.push_back(path.generic_string() + (isDir ? "/" : ""));
        if (isDir)
            walk(root, path, depth + 1, limits, deadline, out);
    }
}

} // namespace

auto is_excluded_directory(std::string_view name) -> bool
{
    return std::find(kExcluded.begin(), kExcluded.end(), name) != kExcluded.end();
}

auto bootstrap_probe(const fs::path& working_dir, const protocol::BootstrapLimits& limits) -> protocol::BootstrapMetadata
{
    auto const started = Clock::now();
    auto const deadline = started + limits.timeout;
    auto ec = std::error_code {};
    auto const absolute = fs::absolute(working_dir, ec);

    auto meta = protocol::BootstrapMetadata {};
    meta.os_name = os_name();
    meta.working_directory = (ec ? working_dir : absolute.lexically_normal()).string();
    if (meta.working_directory.size() > 1 && meta.working_directory.back() == '/')
        meta.working_directory.pop_back();
    meta.recent_git_history =
        git_history(working_dir,
                    limits.max_commits,
                    std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()));
    walk(working_dir, {}, 1, limits, deadline, meta.project_structure);
    return meta;
}

auto run_tool(const fs::path& working_dir,
              const protocol::ToolCall& call,
              const protocol::DispatchOptions& options,
              const ToolLimits& limits) -> protocol::ToolOutcome
{
    auto const* entry = protocol::find_tool(protocol::default_manifest(), call.tool);
    if (!entry)
        return protocol::ToolOutcome::failure("UnknownTool", fmt::format("this executor has no tool '{}'", call.tool));
    if (auto violations = protocol::validate_tool_args(*entry, call.args); !violations.empty())
        return protocol::ToolOutcome::failure("InvalidArguments", protocol::describe_violations(*entry, violations));

    auto const& a = call.args;
    if (call.tool == protocol::tool_names::Read)
        return tool_read(working_dir, a.at("path").get<std::string>(), limits);
    if (call.tool == protocol::tool_names::Edit)
        return tool_edit(working_dir,
                         EditSpec {
                             .file_name = a.at("file_name").get<std::string>(),
                             .old_string = a.at("old_string").get<std::string>(),
                             .new_string = a.at("new_string").get<std::string>(),
                         },
                         options.expected_hash,
                         options.enforce_read_before_edit);
    return tool_shell(working_dir,
                      ShellSpec {
                          .command = a.at("command").get<std::string>(),
                          .timeout_seconds = a.value("timeout_seconds", limits.default_timeout_seconds),
                      },
                      limits);
}

} // namespace steward::tools
