// SPDX-License-Identifier: Apache-2.0
#include <steward/protocol/bodies.hpp>

namespace steward::protocol
{

using nlohmann::json;

auto to_json(const BootstrapLimits& limits) -> json
{
    return json {
        { "max_commits", limits.max_commits },
        { "max_depth", limits.max_depth },
        { "max_entries", limits.max_entries },
        { "timeout_ms", limits.timeout.count() },
    };
}

auto bootstrap_limits_from_json(const json& j) -> BootstrapLimits
{
    return BootstrapLimits {
        .max_commits = j.at("max_commits").get<int>(),
        .max_depth = j.at("max_depth").get<int>(),
        .max_entries = j.at("max_entries").get<int>(),
        .timeout = std::chrono::milliseconds(j.at("timeout_ms").get<std::int64_t>()),
    };
}

auto to_json(const BootstrapMetadata& meta) -> json
{
    return json {
        { "os_name", meta.os_name },
        { "working_directory", meta.working_directory },
        { "recent_git_history", meta.recent_git_history },
        { "project_structure", meta.project_structure },
    };
}

auto bootstrap_metadata_from_json(const json& j) -> BootstrapMetadata
{
    return BootstrapMetadata {
        .os_name = j.at("os_name").get<std::string>(),
        .working_directory = j.at("working_directory").get<std::string>(),
        .recent_git_history = j.at("recent_git_history").get<std::vector<std::string>>(),
        .project_structure = j.at("project_structure").get<std::vector<std::string>>(),
    };
}

auto ToolOutcome::success(json payload) -> ToolOutcome
{
    return ToolOutcome { .status = ToolStatus::Ok, .payload = std::move(payload), .error_kind = {}, .message = {} };
}

auto ToolOutcome::failure(std::string kind, std::string message, json payload) -> ToolOutcome
{
    return ToolOutcome {
        .status = ToolStatus::Error,
        .payload = std::move(payload),
        .error_kind = std::move(kind),
        .message = std::move(message),
    };
}

auto to_json(const ToolOutcome& outcome) -> json
{
    auto j = json {
        { "status", outcome.ok() ? "ok" : "error" },
        { "payload", outcome.payload },
    };
    if (!outcome.ok())
    {
        j["error_kind"] = outcome.error_kind;
        j["message"] = outcome.message;
    }
    return j;
}

auto tool_outcome_from_json(const json& j) -> ToolOutcome
{
    auto outcome = ToolOutcome {};
    outcome.status = j.at("status").get<std::string>() == "ok" ? ToolStatus::Ok : ToolStatus::Error;
    outcome.payload = j.value("payload", json::object());
    outcome.error_kind = j.value("error_kind", std::string {});
    outcome.message = j.value("message", std::string {});
    return outcome;
}

auto make_tool_dispatch(const std::string& task_id,
                        const std::string& invocation_id,
                        const ToolCall& call,
                        const DispatchOptions& options) -> Message
{
    auto body = json {
        { "tool", call.tool },
        { "args", call.args },
    };
    if (options.redispatch)
        body["redispatch"] = true;
    if (options.expected_hash)
        body["expected_hash"] = *options.expected_hash;
    if (options.enforce_read_before_edit)
        body["enforce_read_before_edit"] = true;
    return make_message(MessageKind::ToolDispatch, task_id, std::move(body), invocation_id);
}

auto make_tool_result(const std::string& task_id,
                      const std::string& invocation_id,
                      const std::string& tool,
                      const ToolOutcome& outcome) -> Message
{
    auto body = to_json(outcome);
    body["tool"] = tool;
    return make_message(MessageKind::ToolResult, task_id, std::move(body), invocation_id);
}

} // namespace steward::protocol
