// SPDX-License-Identifier: Apache-2.0
#pragma once

// Typed views of the message bodies that both sides of the executor channel
// construct and inspect.

#include <steward/protocol/manifest.hpp>
#include <steward/protocol/message.hpp>

#include <nlohmann/json.hpp>

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace steward::protocol
{

struct BootstrapLimits
{
    int max_commits = 10;
    int max_depth = 3;
    int max_entries = 500;
    std::chrono::milliseconds timeout { 5000 };
};

struct BootstrapMetadata
{
    std::string os_name;
    std::string working_directory;
    std::vector<std::string> recent_git_history; // newest first
    std::vector<std::string> project_structure;  // relative paths, directories end in '/'

    friend auto operator==(const BootstrapMetadata&, const BootstrapMetadata&) -> bool = default;
};

[[nodiscard]] auto to_json(const BootstrapLimits& limits) -> nlohmann::json;
[[nodiscard]] auto bootstrap_limits_from_json(const nlohmann::json& j) -> BootstrapLimits;
[[nodiscard]] auto to_json(const BootstrapMetadata& meta) -> nlohmann::json;
[[nodiscard]] auto bootstrap_metadata_from_json(const nlohmann::json& j) -> BootstrapMetadata;

enum class ToolStatus
{
    Ok,
    Error,
};

/// Result of one tool invocation. `payload` is tool-specific:
///   read:  content, hash, truncated, size
///   edit:  file_name, summary, pre_hash, post_hash, bytes_removed, bytes_inserted
///   shell: exit_code, stdout, stderr, stdout_truncated, stderr_truncated
struct ToolOutcome
{
    ToolStatus status = ToolStatus::Ok;
    nlohmann::json payload = nlohmann::json::object();
    std::string error_kind;
    std::string message;

    [[nodiscard]] auto ok() const noexcept -> bool { return status == ToolStatus::Ok; }

    static auto success(nlohmann::json payload) -> ToolOutcome;
    static auto failure(std::string kind, std::string message, nlohmann::json payload = nlohmann::json::object())
        -> ToolOutcome;

    friend auto operator==(const ToolOutcome&, const ToolOutcome&) -> bool = default;
};

[[nodiscard]] auto to_json(const ToolOutcome& outcome) -> nlohmann::json;
[[nodiscard]] auto tool_outcome_from_json(const nlohmann::json& j) -> ToolOutcome;

/// Fields a ToolDispatch carries besides the call itself.
struct DispatchOptions
{
    bool redispatch = false;
    std::optional<std::string> expected_hash;
    bool enforce_read_before_edit = false;
};

[[nodiscard]] auto make_tool_dispatch(const std::string& task_id,
                                      const std::string& invocation_id,
                                      const ToolCall& call,
                                      const DispatchOptions& options) -> Message;
[[nodiscard]] auto make_tool_result(const std::string& task_id,
                                    const std::string& invocation_id,
                                    const std::string& tool,
                                    const ToolOutcome& outcome) -> Message;

} // namespace steward::protocol
