// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/protocol/message.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace steward::state
{

enum class EventKind
{
    TaskCreated,
    BootstrapCompleted,
    ModelResponse,
    PlanProposed,
    PlanApproved,
    PlanModified,
    PlanRejected,
    ApprovalRequested,
    ApprovalGranted,
    ApprovalDenied,
    PolicyDenied,
    ToolDispatched,
    ToolResult,
    ReadBeforeEditWarning,
    DuplicateResultIgnored,
    ClientDisconnected,
    ClientReconnected,
    TaskCompleted,
    TaskFailed,
    TaskCancelled,
};

[[nodiscard]] auto to_string(EventKind kind) -> std::string_view;
[[nodiscard]] auto parse_event_kind(std::string_view text) -> std::optional<EventKind>;
[[nodiscard]] auto is_terminal(EventKind kind) -> bool;

struct TimelineEvent
{
    std::string task_id;
    std::uint64_t seq = 0;
    std::int64_t timestamp_ms = 0;
    EventKind kind = EventKind::TaskCreated;
    nlohmann::json payload = nlohmann::json::object();

    friend auto operator==(const TimelineEvent&, const TimelineEvent&) -> bool = default;
};

/// Timeline events travel (and are stored) as TaskUpdate frames.
[[nodiscard]] auto to_message(const TimelineEvent& event) -> protocol::Message;
[[nodiscard]] auto event_from_message(const protocol::Message& msg) -> TimelineEvent;
[[nodiscard]] auto to_json(const TimelineEvent& event) -> nlohmann::json;

/// Short human-readable description, used by `logs` and the executor's
/// progress output.
[[nodiscard]] auto summarize(const TimelineEvent& event) -> std::string;

class StateError: public std::runtime_error
{
  public:
    enum class Code
    {
        TaskTerminated,
        StorageUnavailable,
        CorruptTimeline,
    };

    StateError(Code code, const std::string& message): std::runtime_error(message), _code(code) {}

    [[nodiscard]] auto code() const noexcept -> Code { return _code; }

  private:
    Code _code;
};

} // namespace steward::state
