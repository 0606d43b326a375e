// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/cli/executor.hpp>
#include <steward/state/timeline_event.hpp>

#include <chrono>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace steward::cli
{

struct RunOptions
{
    std::string prompt;
    std::string mode = "approval";
    bool plan = false;
    std::string effort = "medium";
    std::string server = "http://127.0.0.1:8080";
    std::string token;
    std::string policy;
    /// Attach to this existing task instead of creating one.
    std::string resume;

    std::filesystem::path working_dir = ".";
    /// Defaults to default_cache_file(task_id).
    std::optional<std::filesystem::path> cache_file;
    tools::ToolLimits limits;
    /// Consecutive failed attaches tolerated after a dropped connection, or
    /// while the server still holds a previous session of ours.
    int reconnect_attempts = 5;
    std::chrono::milliseconds reconnect_delay { 500 };
    FaultHook fault;
    /// Receives the task id as soon as it is known.
    std::function<void(const std::string&)> on_task;
};

/// Creates or resumes a task and serves it as its executor. Returns the exit
/// code: 0 Completed, 1 Failed, 2 Cancelled, 3 transport failure or rejection.
auto cmd_run(const RunOptions& options, Steering& steering, std::ostream& out, std::ostream& err) -> int;

struct LogsOptions
{
    std::string task_id;
    bool follow = false;
    std::string server = "http://127.0.0.1:8080";
    std::string token;
};

/// Prints one line per event; with follow, tails the stream until the task ends.
auto cmd_logs(const LogsOptions& options, std::ostream& out, std::ostream& err) -> int;

/// "<seq> <kind> <summary>"
[[nodiscard]] auto format_log_line(const state::TimelineEvent& event) -> std::string;
[[nodiscard]] auto timeline_event_from_json(const nlohmann::json& j) -> state::TimelineEvent;

} // namespace steward::cli
