// SPDX-License-Identifier: Apache-2.0
#include <steward/maestro/engine.hpp>
#include <steward/state/replay.hpp>

#include <fmt/format.h>

#include <filesystem>
#include <random>

namespace steward::maestro
{

using nlohmann::json;
using state::EventKind;

namespace
{

auto append_and_fold(state::EventLog& log, TaskRecord& record, const std::string& task_id, EventKind kind, json payload)
    -> state::TimelineEvent
{
    auto next = record;
    state::apply_event(next,
                       state::TimelineEvent {
                           .task_id = task_id,
                           .seq = record.last_seq + 1,
                           .timestamp_ms = 0,
                           .kind = kind,
                           .payload = payload,
                       });
    auto stored = log.append_event(task_id, kind, std::move(payload));
    if (stored.seq != next.last_seq)
        throw state::StateError(state::StateError::Code::CorruptTimeline,
                                fmt::format("task {}: appended seq {} but expected {}", task_id, stored.seq, next.last_seq));
    record = std::move(next);
    return stored;
}

auto is_edit(const protocol::ToolCall& call) -> bool
{
    return call.tool == protocol::tool_names::Edit;
}

auto edit_path(const protocol::ToolCall& call) -> std::string
{
    return normalize_path(call.args.value("file_name", std::string {}));
}

} // namespace

auto to_string(ReadBeforeEditMode mode) -> std::string_view
{
    return mode == ReadBeforeEditMode::Warn ? "warn" : "enforce";
}

auto parse_read_before_edit_mode(std::string_view text) -> std::optional<ReadBeforeEditMode>
{
    if (text == "warn")
        return ReadBeforeEditMode::Warn;
    if (text == "enforce")
        return ReadBeforeEditMode::Enforce;
    return std::nullopt;
}

auto to_string(Freshness freshness) -> std::string_view
{
    switch (freshness)
    {
        case Freshness::Fresh: return "fresh";
        case Freshness::Stale: return "stale";
        case Freshness::Unread: return "unread";
    }
    return "?";
}

MaestroError::MaestroError(Code code, const std::string& message): std::runtime_error(message), _code(code)
{
}

auto to_string(MaestroError::Code code) -> std::string_view
{
    switch (code)
    {
        case MaestroError::Code::EmptyPrompt: return "EmptyPrompt";
        case MaestroError::Code::UnknownInvocation: return "UnknownInvocation";
        case MaestroError::Code::ActionIllegalInState: return "ActionIllegalInState";
        case MaestroError::Code::ModifiedWithoutSteps: return "ModifiedWithoutSteps";
        case MaestroError::Code::ExecutorAlreadyAttached: return "ExecutorAlreadyAttached";
        case MaestroError::Code::TaskTerminal: return "TaskTerminal";
        case MaestroError::Code::TaskNotFound: return "TaskNotFound";
    }
    return "?";
}

auto generate_task_id() -> std::string
{
    static thread_local auto rng = std::mt19937_64(std::random_device {}());
    return fmt::format("t-{:016x}", rng());
}

auto normalize_path(const std::string& path) -> std::string
{
    return std::filesystem::path(path).lexically_normal().generic_string();
}

auto create_task(state::EventLog& log, const std::string& task_id, const CreateTaskRequest& request) -> TaskRecord
{
    if (request.prompt.find_first_not_of(" \t\r\n") == std::string::npos)
        throw MaestroError(MaestroError::Code::EmptyPrompt, "prompt must not be empty");
    if (log.contains(task_id))
        throw MaestroError(MaestroError::Code::ActionIllegalInState, fmt::format("task {} already exists", task_id));

    auto record = TaskRecord {};
    append_and_fold(log,
                    record,
                    task_id,
                    EventKind::TaskCreated,
                    json {
                        { "prompt", request.prompt },
                        { "mode", safety::to_string(request.mode) },
                        { "planning", request.planning },
                        { "effort", model::to_string(request.effort) },
                        { "policy", request.policy_name },
                    });
    return record;
}

TaskEngine::TaskEngine(state::EventLog& log,
                       TaskRecord record,
                       safety::PolicyConfig policy,
                       MaestroConfig config,
                       protocol::ToolManifest manifest):
    _log(log),
    _record(std::move(record)),
    _policy(std::move(policy)),
    _config(config),
    _manifest(std::move(manifest))
{
}

void TaskEngine::emit(EventKind kind, json payload)
{
    auto stored = append_and_fold(_log, _record, _record.task_id, kind, std::move(payload));
    if (_observer)
        _observer(stored);
}

void TaskEngine::require(TaskStatus status, std::string_view action) const
{
    if (_record.status != status)
        throw MaestroError(MaestroError::Code::ActionIllegalInState,
                           fmt::format("{} is not allowed while the task is {}", action, to_string(_record.status)));
}

auto TaskEngine::planning_requested() const -> bool
{
    return _record.planning && !_record.accepted_plan;
}

auto TaskEngine::payload() const -> model::ModelPayload
{
    return model::assemble_payload(_record, _manifest, _record.effort, planning_requested());
}

auto TaskEngine::begin_bootstrap() -> Directive
{
    if (_record.status != TaskStatus::Created && _record.status != TaskStatus::Bootstrapping)
        throw MaestroError(MaestroError::Code::ActionIllegalInState,
                           fmt::format("bootstrap is not allowed while the task is {}", to_string(_record.status)));
    _record.status = TaskStatus::Bootstrapping;
    return RequestBootstrap { _config.bootstrap };
}

auto TaskEngine::complete_bootstrap(const protocol::BootstrapMetadata& metadata) -> Directive
{
    if (_record.status != TaskStatus::Created && _record.status != TaskStatus::Bootstrapping)
        throw MaestroError(MaestroError::Code::ActionIllegalInState,
                           fmt::format("bootstrap result is not expected while the task is {}",
                                       to_string(_record.status)));
    emit(EventKind::BootstrapCompleted, json { { "metadata", protocol::to_json(metadata) } });
    return QueryModel {};
}

auto TaskEngine::step(const model::ModelTurn& turn) -> Directive
{
    require(TaskStatus::AwaitingModel, "a model turn");
    if (_record.unrouted_call)
        throw MaestroError(MaestroError::Code::ActionIllegalInState, "the previous tool call has not been routed");

    if (_record.iteration_count >= _config.max_iterations)
        return fail("IterationLimit",
                    fmt::format("the task used all {} model turns without a final answer", _config.max_iterations));

    auto const iteration = _record.iteration_count + 1;
    auto response = json {
        { "iteration", iteration },
        { "turn", model::to_json(turn) },
        { "text", model::render_turn(turn) },
    };
    if (std::holds_alternative<model::ToolCall>(turn))
        response["invocation_id"] = fmt::format("inv-{}", iteration);
    emit(EventKind::ModelResponse, std::move(response));

    if (auto const* final = std::get_if<model::FinalText>(&turn))
    {
        emit(EventKind::TaskCompleted, json { { "final_text", final->text } });
        return Finalize { final->text };
    }
    if (auto const* plan = std::get_if<model::PlanProposal>(&turn))
    {
        if (!_record.planning)
            return fail("InvalidTurnForState", "plan proposed in a task that is not in planning mode");
        if (_record.accepted_plan)
            return fail("InvalidTurnForState", "plan proposed after a plan was already accepted for this task");
        if (plan->steps.empty())
            return fail("MalformedTurn", "plan proposal has no steps");
        emit(EventKind::PlanProposed, json { { "steps", plan->steps } });
        return RequestPlanDecision { plan->steps };
    }
    return route_call(*_record.unrouted_call);
}

auto TaskEngine::synthetic_error(const PendingInvocation& call, const std::string& kind, const std::string& message)
    -> Directive
{
    emit(EventKind::ToolResult,
         json {
             { "invocation_id", call.invocation_id },
             { "tool", call.call.tool },
             { "outcome", protocol::to_json(protocol::ToolOutcome::failure(kind, message)) },
             { "synthetic", true },
         });
    return QueryModel {};
}

auto TaskEngine::route_call(const PendingInvocation& call) -> Directive
{
    auto const* entry = protocol::find_tool(_manifest, call.call.tool);
    if (!entry)
    {
        auto names = std::vector<std::string> {};
        for (auto const& tool: _manifest)
            names.push_back(tool.name);
        return synthetic_error(
            call,
            "UnknownTool",
            fmt::format("there is no tool named '{}'. Available tools: {}.", call.call.tool, fmt::join(names, ", ")));
    }
    if (auto violations = protocol::validate_tool_args(*entry, call.call.args); !violations.empty())
        return synthetic_error(call, "InvalidArguments", protocol::describe_violations(*entry, violations));
    if (planning_requested())
        return synthetic_error(call,
                               "PlanRequired",
                               "planning mode is active: propose a plan and wait for the user's decision before "
                               "calling tools.");

    auto const decision = safety::evaluate(_policy, call.call, _record.mode, _manifest);
    auto const audit = decision.audit();
    if (decision.verdict == safety::Rule::Deny)
    {
        emit(EventKind::PolicyDenied,
             json {
                 { "invocation_id", call.invocation_id },
                 { "call", protocol::to_json(call.call) },
                 { "audit", audit },
                 { "content", fmt::format("denied by policy: {}", decision.deny_reason()) },
             });
        return QueryModel {};
    }

    if (is_edit(call.call))
    {
        auto const path = edit_path(call.call);
        if (!_record.read_set.contains(path))
        {
            auto const enforced = _config.read_before_edit == ReadBeforeEditMode::Enforce;
            emit(EventKind::ReadBeforeEditWarning,
                 json {
                     { "invocation_id", call.invocation_id },
                     { "path", path },
                     { "freshness", to_string(Freshness::Unread) },
                     { "enforced", enforced },
                 });
            if (enforced)
                return synthetic_error(call,
                                       "ReadBeforeEdit",
                                       fmt::format("edit of {0} refused: the file has not been read in this task. "
                                                   "Call read with path \"{0}\" first, then retry the edit with an "
                                                   "old_string copied from the content it returns.",
                                                   path));
        }
    }

    if (decision.verdict == safety::Rule::RequireApproval)
    {
        emit(EventKind::ApprovalRequested,
             json {
                 { "invocation_id", call.invocation_id },
                 { "call", protocol::to_json(call.call) },
                 { "audit", audit },
                 { "verdict", safety::to_string(decision.verdict) },
             });
        return RequestApproval { *_record.pending_invocation };
    }

    auto pending = call;
    pending.audit = audit;
    return dispatch(pending);
}

auto TaskEngine::dispatch_options(const PendingInvocation& call, bool redispatch) const -> protocol::DispatchOptions
{
    auto options = protocol::DispatchOptions { .redispatch = redispatch,
                                               .expected_hash = std::nullopt,
                                               .enforce_read_before_edit = false };
    if (is_edit(call.call))
    {
        if (auto it = _record.read_set.find(edit_path(call.call)); it != _record.read_set.end())
            options.expected_hash = it->second;
        options.enforce_read_before_edit = _config.read_before_edit == ReadBeforeEditMode::Enforce;
    }
    return options;
}

auto TaskEngine::dispatch(const PendingInvocation& call) -> Directive
{
    auto const options = dispatch_options(call, false);
    auto payload = json {
        { "invocation_id", call.invocation_id },
        { "call", protocol::to_json(call.call) },
        { "audit", call.audit },
    };
    if (options.expected_hash)
        payload["expected_hash"] = *options.expected_hash;
    emit(EventKind::ToolDispatched, std::move(payload));
    return Dispatch { *_record.pending_invocation, options };
}

auto TaskEngine::handle_tool_result(const std::string& invocation_id, const protocol::ToolOutcome& outcome)
    -> Directive
{
    if (is_terminal(_record.status))
        throw MaestroError(MaestroError::Code::UnknownInvocation,
                           fmt::format("result for {} arrived after the task ended", invocation_id));
    if (_record.status != TaskStatus::AwaitingToolResult || !_record.pending_invocation
        || _record.pending_invocation->invocation_id != invocation_id)
    {
        emit(EventKind::DuplicateResultIgnored, json { { "invocation_id", invocation_id } });
        throw MaestroError(MaestroError::Code::UnknownInvocation,
                           fmt::format("no tool invocation {} is pending", invocation_id));
    }

    auto const pending = *_record.pending_invocation;
    if (is_edit(pending.call))
    {
        auto const pre_hash = outcome.payload.value("pre_hash", std::string {});
        auto const refused = outcome.error_kind == "StaleRead";
        auto const changed = pending.expected_hash && !pre_hash.empty() && pre_hash != *pending.expected_hash;
        if (refused || changed)
            emit(EventKind::ReadBeforeEditWarning,
                 json {
                     { "invocation_id", invocation_id },
                     { "path", edit_path(pending.call) },
                     { "freshness", to_string(Freshness::Stale) },
                     { "enforced", refused },
                 });
    }

    auto payload = json {
        { "invocation_id", invocation_id },
        { "tool", pending.call.tool },
        { "outcome", protocol::to_json(outcome) },
        { "synthetic", false },
    };
    if (pending.call.tool == protocol::tool_names::Read && outcome.ok())
    {
        payload["read_path"] = normalize_path(pending.call.args.value("path", std::string {}));
        payload["read_hash"] = outcome.payload.value("hash", std::string {});
    }
    emit(EventKind::ToolResult, std::move(payload));
    return QueryModel {};
}

auto TaskEngine::handle_approval(const std::string& invocation_id,
                                 bool approve,
                                 const std::string& reason,
                                 const std::string& source) -> Directive
{
    if (_record.status != TaskStatus::AwaitingApproval || !_record.pending_invocation
        || _record.pending_invocation->invocation_id != invocation_id || _record.pending_invocation->approved)
        throw MaestroError(MaestroError::Code::UnknownInvocation,
                           fmt::format("no approval is pending for invocation {}", invocation_id));

    if (approve)
    {
        emit(EventKind::ApprovalGranted, json { { "invocation_id", invocation_id }, { "source", source } });
        return dispatch(*_record.pending_invocation);
    }
    emit(EventKind::ApprovalDenied,
         json {
             { "invocation_id", invocation_id },
             { "reason", reason.empty() ? std::string("no reason given") : reason },
             { "source", source },
         });
    return QueryModel {};
}

auto TaskEngine::handle_plan_decision(PlanDecisionKind decision,
                                      const std::vector<std::string>& modified_steps,
                                      const std::string& reason) -> Directive
{
    require(TaskStatus::AwaitingPlanDecision, "a plan decision");
    auto const& proposed = _record.proposed_plan->steps;
    switch (decision)
    {
        case PlanDecisionKind::Approved:
            emit(EventKind::PlanApproved, json { { "steps", proposed } });
            break;
        case PlanDecisionKind::Modified:
        {
            auto const blank = std::find_if(modified_steps.begin(), modified_steps.end(), [](const std::string& s) {
                return s.find_first_not_of(" \t\r\n") == std::string::npos;
            });
            if (modified_steps.empty() || blank != modified_steps.end())
                throw MaestroError(MaestroError::Code::ModifiedWithoutSteps,
                                   "a modified plan needs at least one step and no empty steps");
            emit(EventKind::PlanModified, json { { "steps", modified_steps }, { "original_steps", proposed } });
            break;
        }
        case PlanDecisionKind::Rejected: emit(EventKind::PlanRejected, json { { "reason", reason } }); break;
        case PlanDecisionKind::Pending:
            throw MaestroError(MaestroError::Code::ActionIllegalInState, "pending is not a plan decision");
    }
    return QueryModel {};
}

auto TaskEngine::fail(const std::string& reason, const std::string& diagnostic) -> Directive
{
    if (is_terminal(_record.status))
        throw MaestroError(MaestroError::Code::TaskTerminal,
                           fmt::format("task already ended as {}", to_string(_record.status)));
    emit(EventKind::TaskFailed, json { { "reason", reason }, { "diagnostic", diagnostic } });
    return FailTask { reason, diagnostic };
}

auto TaskEngine::cancel(const std::string& reason) -> Directive
{
    if (is_terminal(_record.status))
        throw MaestroError(MaestroError::Code::ActionIllegalInState,
                           fmt::format("task already ended as {}", to_string(_record.status)));
    emit(EventKind::TaskCancelled, json { { "reason", reason } });
    return Halted { TaskStatus::Cancelled };
}

void TaskEngine::note_disconnect(const std::string& session_id, const std::string& reason)
{
    if (is_terminal(_record.status))
        return;
    emit(EventKind::ClientDisconnected, json { { "session_id", session_id }, { "reason", reason } });
}

auto TaskEngine::note_reconnect(const std::string& session_id) -> Directive
{
    if (is_terminal(_record.status))
        throw MaestroError(MaestroError::Code::TaskTerminal,
                           fmt::format("task already ended as {}", to_string(_record.status)));
    auto payload = json {
        { "session_id", session_id },
        { "redispatch", _record.status == TaskStatus::AwaitingToolResult },
    };
    if (_record.pending_invocation)
        payload["invocation_id"] = _record.pending_invocation->invocation_id;
    emit(EventKind::ClientReconnected, std::move(payload));

    // Approved but not yet dispatched: finish the dispatch now.
    if (_record.status == TaskStatus::AwaitingApproval && _record.pending_invocation->approved)
        return dispatch(*_record.pending_invocation);
    return current_directive();
}

auto TaskEngine::current_directive() const -> Directive
{
    switch (_record.status)
    {
        case TaskStatus::Created:
        case TaskStatus::Bootstrapping: return RequestBootstrap { _config.bootstrap };
        case TaskStatus::AwaitingModel: return QueryModel {};
        case TaskStatus::AwaitingApproval: return RequestApproval { *_record.pending_invocation };
        case TaskStatus::AwaitingToolResult:
            return Dispatch { *_record.pending_invocation, dispatch_options(*_record.pending_invocation, true) };
        case TaskStatus::AwaitingPlanDecision: return RequestPlanDecision { _record.proposed_plan->steps };
        case TaskStatus::Completed: return Finalize { _record.final_text.value_or("") };
        case TaskStatus::Failed: return FailTask { _record.failure_reason.value_or(""), {} };
        case TaskStatus::Cancelled: return Halted { TaskStatus::Cancelled };
    }
    return Halted { _record.status };
}

auto TaskEngine::read_before_edit_check(const std::string& path, const std::string& current_hash) const -> Freshness
{
    auto it = _record.read_set.find(normalize_path(path));
    if (it == _record.read_set.end())
        return Freshness::Unread;
    return it->second == current_hash ? Freshness::Fresh : Freshness::Stale;
}

} // namespace steward::maestro
