// SPDX-License-Identifier: Apache-2.0
#include <steward/state/timeline_event.hpp>

#include <fmt/format.h>

#include <array>
#include <utility>

namespace steward::state
{

using nlohmann::json;

namespace
{

constexpr auto kNames = std::array {
    std::pair { EventKind::TaskCreated, std::string_view("TaskCreated") },
    std::pair { EventKind::BootstrapCompleted, std::string_view("BootstrapCompleted") },
    std::pair { EventKind::ModelResponse, std::string_view("ModelResponse") },
    std::pair { EventKind::PlanProposed, std::string_view("PlanProposed") },
    std::pair { EventKind::PlanApproved, std::string_view("PlanApproved") },
    std::pair { EventKind::PlanModified, std::string_view("PlanModified") },
    std::pair { EventKind::PlanRejected, std::string_view("PlanRejected") },
    std::pair { EventKind::ApprovalRequested, std::string_view("ApprovalRequested") },
    std::pair { EventKind::ApprovalGranted, std::string_view("ApprovalGranted") },
    std::pair { EventKind::ApprovalDenied, std::string_view("ApprovalDenied") },
    std::pair { EventKind::PolicyDenied, std::string_view("PolicyDenied") },
    std::pair { EventKind::ToolDispatched, std::string_view("ToolDispatched") },
    std::pair { EventKind::ToolResult, std::string_view("ToolResult") },
    std::pair { EventKind::ReadBeforeEditWarning, std::string_view("ReadBeforeEditWarning") },
    std::pair { EventKind::DuplicateResultIgnored, std::string_view("DuplicateResultIgnored") },
    std::pair { EventKind::ClientDisconnected, std::string_view("ClientDisconnected") },
    std::pair { EventKind::ClientReconnected, std::string_view("ClientReconnected") },
    std::pair { EventKind::TaskCompleted, std::string_view("TaskCompleted") },
    std::pair { EventKind::TaskFailed, std::string_view("TaskFailed") },
    std::pair { EventKind::TaskCancelled, std::string_view("TaskCancelled") },
};

auto clip(std::string text, std::size_t limit = 100) -> std::string
{
    auto out = std::string {};
    for (auto ch: text)
    {
        if (ch == '\n')
            out += "\\n";
        else
            out.push_back(ch);
    }
    if (out.size() > limit)
    {
        out.resize(limit);
        out += "...";
    }
    return out;
}

auto str(const json& payload, const char* key) -> std::string
{
    auto it = payload.find(key);
    if (it == payload.end() || it->is_null())
        return {};
    return it->is_string() ? it->get<std::string>() : it->dump();
}

} // namespace

auto to_string(EventKind kind) -> std::string_view
{
    for (auto const& [value, name]: kNames)
        if (value == kind)
            return name;
    return "?";
}

auto parse_event_kind(std::string_view text) -> std::optional<EventKind>
{
    for (auto const& [value, name]: kNames)
        if (name == text)
            return value;
    return std::nullopt;
}

auto is_terminal(EventKind kind) -> bool
{
    return kind == EventKind::TaskCompleted || kind == EventKind::TaskFailed || kind == EventKind::TaskCancelled;
}

auto to_message(const TimelineEvent& event) -> protocol::Message
{
    return protocol::make_message(protocol::MessageKind::TaskUpdate,
                                  event.task_id,
                                  json {
                                      { "seq", event.seq },
                                      { "timestamp", event.timestamp_ms },
                                      { "kind", to_string(event.kind) },
                                      { "payload", event.payload },
                                  });
}

auto event_from_message(const protocol::Message& msg) -> TimelineEvent
{
    if (msg.kind != protocol::MessageKind::TaskUpdate)
        throw StateError(StateError::Code::CorruptTimeline, "timeline entry is not a TaskUpdate frame");
    auto kind = parse_event_kind(msg.body.at("kind").get<std::string>());
    if (!kind)
        throw StateError(StateError::Code::CorruptTimeline,
                         fmt::format("unknown event kind '{}'", msg.body.at("kind").get<std::string>()));
    return TimelineEvent {
        .task_id = msg.task_id,
        .seq = msg.body.at("seq").get<std::uint64_t>(),
        .timestamp_ms = msg.body.at("timestamp").get<std::int64_t>(),
        .kind = *kind,
        .payload = msg.body.at("payload"),
    };
}

auto to_json(const TimelineEvent& event) -> json
{
    return json {
        { "task_id", event.task_id },
        { "seq", event.seq },
        { "timestamp", event.timestamp_ms },
        { "kind", to_string(event.kind) },
        { "payload", event.payload },
    };
}

auto summarize(const TimelineEvent& event) -> std::string
{
    auto const& p = event.payload;
    switch (event.kind)
    {
        case EventKind::TaskCreated:
            return clip(fmt::format("mode={} planning={} effort={}: {}",
                                    str(p, "mode"),
                                    str(p, "planning"),
                                    str(p, "effort"),
                                    str(p, "prompt")));
        case EventKind::BootstrapCompleted:
        {
            auto const& meta = p.value("metadata", json::object());
            return clip(fmt::format("{} in {} ({} commits, {} entries)",
                                    str(meta, "os_name"),
                                    str(meta, "working_directory"),
                                    meta.value("recent_git_history", json::array()).size(),
                                    meta.value("project_structure", json::array()).size()));
        }
        case EventKind::ModelResponse: return clip(str(p, "text"));
        case EventKind::PlanProposed:
        case EventKind::PlanApproved:
        case EventKind::PlanModified:
            return clip(fmt::format("{} steps", p.value("steps", json::array()).size()));
        case EventKind::PlanRejected: return clip(str(p, "reason"));
        case EventKind::ApprovalRequested:
        case EventKind::ToolDispatched:
        case EventKind::PolicyDenied:
        {
            auto const& call = p.value("call", json::object());
            return clip(fmt::format("{} {} {}", str(p, "invocation_id"), str(call, "tool"), str(call, "args")));
        }
        case EventKind::ApprovalGranted: return str(p, "invocation_id");
        case EventKind::ApprovalDenied:
            return clip(fmt::format("{} {}", str(p, "invocation_id"), str(p, "reason")));
        case EventKind::ToolResult:
        {
            auto const& outcome = p.value("outcome", json::object());
            auto status = str(outcome, "status");
            if (status == "error")
                status = fmt::format("error ({})", str(outcome, "error_kind"));
            return fmt::format("{} {} {}", str(p, "invocation_id"), str(p, "tool"), status);
        }
        case EventKind::ReadBeforeEditWarning:
            return fmt::format("{} {} {}", str(p, "invocation_id"), str(p, "path"), str(p, "freshness"));
        case EventKind::DuplicateResultIgnored: return str(p, "invocation_id");
        case EventKind::ClientDisconnected:
            return clip(fmt::format("{} {}", str(p, "session_id"), str(p, "reason")));
        case EventKind::ClientReconnected:
            return clip(fmt::format("{}{}", str(p, "session_id"), p.value("redispatch", false) ? " redispatch" : ""));
        case EventKind::TaskCompleted: return clip(str(p, "final_text"));
        case EventKind::TaskFailed: return clip(fmt::format("{}: {}", str(p, "reason"), str(p, "diagnostic")));
        case EventKind::TaskCancelled: return clip(str(p, "reason"));
    }
    return {};
}

} // namespace steward::state
