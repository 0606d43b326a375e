// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/maestro/task_record.hpp>
#include <steward/model/payload.hpp>
#include <steward/model/turn.hpp>
#include <steward/protocol/bodies.hpp>
#include <steward/safety/policy.hpp>
#include <steward/state/event_log.hpp>

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace steward::maestro
{

enum class ReadBeforeEditMode
{
    Warn,
    Enforce,
};

[[nodiscard]] auto to_string(ReadBeforeEditMode mode) -> std::string_view;
[[nodiscard]] auto parse_read_before_edit_mode(std::string_view text) -> std::optional<ReadBeforeEditMode>;

struct MaestroConfig
{
    int max_iterations = 50;
    ReadBeforeEditMode read_before_edit = ReadBeforeEditMode::Warn;
    protocol::BootstrapLimits bootstrap;
};

enum class Freshness
{
    Fresh,
    Stale,
    Unread,
};

[[nodiscard]] auto to_string(Freshness freshness) -> std::string_view;

class MaestroError: public std::runtime_error
{
  public:
    enum class Code
    {
        EmptyPrompt,
        UnknownInvocation,
        ActionIllegalInState,
        ModifiedWithoutSteps,
        ExecutorAlreadyAttached,
        TaskTerminal,
        TaskNotFound,
    };

    MaestroError(Code code, const std::string& message);

    [[nodiscard]] auto code() const noexcept -> Code { return _code; }

  private:
    Code _code;
};

[[nodiscard]] auto to_string(MaestroError::Code code) -> std::string_view;

// What the loop must do next.
struct QueryModel
{
};
struct RequestBootstrap
{
    protocol::BootstrapLimits limits;
};
struct Finalize
{
    std::string text;
};
struct Dispatch
{
    PendingInvocation invocation;
    protocol::DispatchOptions options;
};
struct RequestApproval
{
    PendingInvocation invocation;
};
struct RequestPlanDecision
{
    std::vector<std::string> steps;
};
struct FailTask
{
    std::string reason;
    std::string diagnostic;
};
struct Halted
{
    TaskStatus status;
};

using Directive =
    std::variant<QueryModel, RequestBootstrap, Finalize, Dispatch, RequestApproval, RequestPlanDecision, FailTask, Halted>;

struct CreateTaskRequest
{
    std::string prompt;
    safety::ExecutionMode mode = safety::ExecutionMode::Approval;
    bool planning = false;
    model::ThinkingEffort effort = model::ThinkingEffort::Medium;
    std::string policy_name;
};

/// Random id of the form "t-<16 hex digits>".
[[nodiscard]] auto generate_task_id() -> std::string;

/// Emits TaskCreated and returns the record. Throws MaestroError(EmptyPrompt)
/// before anything is written.
auto create_task(state::EventLog& log, const std::string& task_id, const CreateTaskRequest& request) -> TaskRecord;

/// Lexical normalization used for read_set keys.
[[nodiscard]] auto normalize_path(const std::string& path) -> std::string;

/// The per-task state machine. Every transition is one or more timeline
/// events, appended to the log and folded into the record. Not thread-safe;
/// the owner serializes calls.
class TaskEngine
{
  public:
    using Observer = std::function<void(const state::TimelineEvent&)>;

    TaskEngine(state::EventLog& log,
               TaskRecord record,
               safety::PolicyConfig policy,
               MaestroConfig config,
               protocol::ToolManifest manifest = protocol::default_manifest());

    void set_observer(Observer observer) { _observer = std::move(observer); }

    [[nodiscard]] auto record() const noexcept -> const TaskRecord& { return _record; }
    [[nodiscard]] auto config() const noexcept -> const MaestroConfig& { return _config; }
    [[nodiscard]] auto planning_requested() const -> bool;
    [[nodiscard]] auto payload() const -> model::ModelPayload;

    /// In-memory only; no event.
    auto begin_bootstrap() -> Directive;
    auto complete_bootstrap(const protocol::BootstrapMetadata& metadata) -> Directive;

    auto step(const model::ModelTurn& turn) -> Directive;
    auto handle_tool_result(const std::string& invocation_id, const protocol::ToolOutcome& outcome) -> Directive;
    auto handle_approval(const std::string& invocation_id,
                         bool approve,
                         const std::string& reason,
                         const std::string& source) -> Directive;
    auto handle_plan_decision(PlanDecisionKind decision,
                              const std::vector<std::string>& modified_steps,
                              const std::string& reason) -> Directive;

    auto fail(const std::string& reason, const std::string& diagnostic) -> Directive;
    auto cancel(const std::string& reason) -> Directive;

    void note_disconnect(const std::string& session_id, const std::string& reason);
    /// Emits ClientReconnected and returns the directive that re-presents
    /// whatever the task is waiting for.
    auto note_reconnect(const std::string& session_id) -> Directive;

    /// The directive for the current status, without emitting anything.
    [[nodiscard]] auto current_directive() const -> Directive;

    [[nodiscard]] auto read_before_edit_check(const std::string& path, const std::string& current_hash) const
        -> Freshness;

  private:
    void emit(state::EventKind kind, nlohmann::json payload);
    auto synthetic_error(const PendingInvocation& call, const std::string& kind, const std::string& message)
        -> Directive;
    auto route_call(const PendingInvocation& call) -> Directive;
    auto dispatch(const PendingInvocation& call) -> Directive;
    [[nodiscard]] auto dispatch_options(const PendingInvocation& call, bool redispatch) const
        -> protocol::DispatchOptions;
    void require(TaskStatus status, std::string_view action) const;

    state::EventLog& _log;
    TaskRecord _record;
    safety::PolicyConfig _policy;
    MaestroConfig _config;
    protocol::ToolManifest _manifest;
    Observer _observer;
};

} // namespace steward::maestro
