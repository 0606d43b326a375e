// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/model/turn.hpp>
#include <steward/protocol/bodies.hpp>
#include <steward/safety/policy.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace steward::maestro
{

enum class TaskStatus
{
    Created,
    Bootstrapping,
    AwaitingModel,
    AwaitingApproval,
    AwaitingToolResult,
    AwaitingPlanDecision,
    Completed,
    Failed,
    Cancelled,
};

[[nodiscard]] auto to_string(TaskStatus status) -> std::string_view;
[[nodiscard]] auto parse_task_status(std::string_view text) -> std::optional<TaskStatus>;
[[nodiscard]] auto is_terminal(TaskStatus status) -> bool;

enum class PlanDecisionKind
{
    Pending,
    Approved,
    Rejected,
    Modified,
};

[[nodiscard]] auto to_string(PlanDecisionKind kind) -> std::string_view;

struct Plan
{
    std::vector<std::string> steps;
    PlanDecisionKind decision = PlanDecisionKind::Pending;
    std::vector<std::string> modified_steps;

    /// The steps execution follows: the modified list when one was given.
    [[nodiscard]] auto effective_steps() const -> const std::vector<std::string>&
    {
        return decision == PlanDecisionKind::Modified ? modified_steps : steps;
    }

    friend auto operator==(const Plan&, const Plan&) -> bool = default;
};

struct PendingInvocation
{
    std::string invocation_id;
    protocol::ToolCall call;
    std::vector<std::string> audit;
    std::optional<std::string> expected_hash;
    bool approved = false;

    friend auto operator==(const PendingInvocation&, const PendingInvocation&) -> bool = default;
};

/// Orchestrator-side state of one task. Only ever mutated by folding timeline
/// events (state::apply_event), so a replayed timeline reproduces it exactly.
struct TaskRecord
{
    std::string task_id;
    TaskStatus status = TaskStatus::Created;
    safety::ExecutionMode mode = safety::ExecutionMode::Approval;
    bool planning = false;
    model::ThinkingEffort effort = model::ThinkingEffort::Medium;
    std::string policy_name;

    std::vector<model::HistoryEntry> history;
    std::map<std::string, std::string> read_set; // normalized path -> content hash
    std::optional<protocol::BootstrapMetadata> bootstrap;

    std::optional<PendingInvocation> pending_invocation;
    /// Tool call recorded by the latest ModelResponse that has not yet been
    /// routed (dispatched, denied, or answered with an error).
    std::optional<PendingInvocation> unrouted_call;
    std::optional<Plan> proposed_plan;
    std::optional<Plan> accepted_plan;

    int iteration_count = 0;
    std::optional<std::string> final_text;
    std::optional<std::string> failure_reason;
    std::uint64_t last_seq = 0;

    friend auto operator==(const TaskRecord&, const TaskRecord&) -> bool = default;
};

[[nodiscard]] auto to_json(const TaskRecord& record) -> nlohmann::json;
[[nodiscard]] auto task_record_from_json(const nlohmann::json& j) -> TaskRecord;

/// Fields compared when checking a replayed record against the live one.
struct ObservableState
{
    TaskStatus status;
    std::size_t history_length;
    std::map<std::string, std::string> read_set;
    std::optional<std::string> final_text;

    friend auto operator==(const ObservableState&, const ObservableState&) -> bool = default;
};

[[nodiscard]] auto observable_state(const TaskRecord& record) -> ObservableState;

} // namespace steward::maestro
