// SPDX-License-Identifier: Apache-2.0
#include <steward/state/replay.hpp>

#include <fmt/format.h>

#include <initializer_list>

namespace steward::state
{

using maestro::TaskRecord;
using maestro::TaskStatus;
using nlohmann::json;

namespace
{

[[noreturn]] void corrupt(const std::string& message)
{
    throw StateError(StateError::Code::CorruptTimeline, message);
}

void require_status(const TaskRecord& r, const TimelineEvent& e, std::initializer_list<TaskStatus> allowed)
{
    for (auto s: allowed)
        if (r.status == s)
            return;
    corrupt(fmt::format("seq {}: {} is illegal while {}", e.seq, to_string(e.kind), maestro::to_string(r.status)));
}

auto invocation_of(const TimelineEvent& e) -> std::string
{
    return e.payload.at("invocation_id").get<std::string>();
}

auto take_unrouted(TaskRecord& r, const TimelineEvent& e) -> maestro::PendingInvocation
{
    auto const id = invocation_of(e);
    if (!r.unrouted_call || r.unrouted_call->invocation_id != id)
        corrupt(fmt::format("seq {}: {} for {} does not follow its model turn", e.seq, to_string(e.kind), id));
    auto call = std::move(*r.unrouted_call);
    r.unrouted_call.reset();
    return call;
}

void require_pending(const TaskRecord& r, const TimelineEvent& e)
{
    auto const id = invocation_of(e);
    if (!r.pending_invocation || r.pending_invocation->invocation_id != id)
        corrupt(fmt::format("seq {}: {} for {} has no matching pending invocation", e.seq, to_string(e.kind), id));
}

void add_tool_turn(TaskRecord& r, const std::string& id, std::string content, bool is_error)
{
    r.history.push_back(model::HistoryEntry {
        .role = model::Role::Tool,
        .content = std::move(content),
        .invocation_id = id,
        .is_error = is_error,
    });
}

void accept_plan(TaskRecord& r, const TimelineEvent& e, maestro::PlanDecisionKind decision)
{
    require_status(r, e, { TaskStatus::AwaitingPlanDecision });
    if (!r.proposed_plan)
        corrupt(fmt::format("seq {}: plan decision without a proposed plan", e.seq));
    auto plan = std::move(*r.proposed_plan);
    r.proposed_plan.reset();
    plan.decision = decision;
    auto const steps = e.payload.at("steps").get<std::vector<std::string>>();
    if (steps.empty())
        corrupt(fmt::format("seq {}: accepted plan has no steps", e.seq));
    if (decision == maestro::PlanDecisionKind::Modified)
        plan.modified_steps = steps;
    r.history.push_back(model::HistoryEntry {
        .role = model::Role::User,
        .content = model::render_plan_acceptance(plan.effective_steps(),
                                                 decision == maestro::PlanDecisionKind::Modified),
        .invocation_id = std::nullopt,
        .is_error = false,
    });
    r.accepted_plan = std::move(plan);
    r.status = TaskStatus::AwaitingModel;
}

void terminate(TaskRecord& r, TaskStatus status)
{
    r.status = status;
    r.pending_invocation.reset();
    r.unrouted_call.reset();
    r.proposed_plan.reset();
}

void fold(TaskRecord& r, const TimelineEvent& e)
{
    auto const& p = e.payload;
    switch (e.kind)
    {
        case EventKind::TaskCreated:
        {
            if (r.last_seq != 0)
                corrupt(fmt::format("seq {}: TaskCreated must be the first event", e.seq));
            auto const prompt = p.at("prompt").get<std::string>();
            r = TaskRecord {};
            r.task_id = e.task_id;
            r.status = TaskStatus::Created;
            r.mode = safety::parse_execution_mode(p.at("mode").get<std::string>()).value();
            r.planning = p.at("planning").get<bool>();
            r.effort = model::parse_thinking_effort(p.at("effort").get<std::string>()).value();
            r.policy_name = p.value("policy", std::string {});
            r.history.push_back(model::HistoryEntry { .role = model::Role::User,
                                                      .content = prompt,
                                                      .invocation_id = std::nullopt,
                                                      .is_error = false });
            return;
        }
        case EventKind::BootstrapCompleted:
            require_status(r, e, { TaskStatus::Created, TaskStatus::Bootstrapping });
            r.bootstrap = protocol::bootstrap_metadata_from_json(p.at("metadata"));
            r.status = TaskStatus::AwaitingModel;
            return;

        case EventKind::ModelResponse:
        {
            require_status(r, e, { TaskStatus::AwaitingModel });
            if (r.unrouted_call)
                corrupt(fmt::format("seq {}: model turn while {} is unrouted", e.seq, r.unrouted_call->invocation_id));
            auto const turn = model::model_turn_from_json(p.at("turn"));
            r.iteration_count = p.at("iteration").get<int>();
            auto entry = model::HistoryEntry { .role = model::Role::Model,
                                               .content = model::render_turn(turn),
                                               .invocation_id = std::nullopt,
                                               .is_error = false };
            if (auto const* call = std::get_if<model::ToolCall>(&turn))
            {
                auto const id = invocation_of(e);
                entry.invocation_id = id;
                r.unrouted_call = maestro::PendingInvocation { .invocation_id = id,
                                                               .call = *call,
                                                               .audit = {},
                                                               .expected_hash = std::nullopt,
                                                               .approved = false };
            }
            r.history.push_back(std::move(entry));
            return;
        }
        case EventKind::PlanProposed:
        {
            require_status(r, e, { TaskStatus::AwaitingModel });
            if (!r.planning || r.accepted_plan)
                corrupt(fmt::format("seq {}: plan proposed outside the planning phase", e.seq));
            auto steps = p.at("steps").get<std::vector<std::string>>();
            if (steps.empty())
                corrupt(fmt::format("seq {}: proposed plan has no steps", e.seq));
            r.proposed_plan = maestro::Plan { .steps = std::move(steps), .decision = {}, .modified_steps = {} };
            r.status = TaskStatus::AwaitingPlanDecision;
            return;
        }
        case EventKind::PlanApproved: accept_plan(r, e, maestro::PlanDecisionKind::Approved); return;
        case EventKind::PlanModified: accept_plan(r, e, maestro::PlanDecisionKind::Modified); return;
        case EventKind::PlanRejected:
            require_status(r, e, { TaskStatus::AwaitingPlanDecision });
            r.proposed_plan.reset();
            r.history.push_back(model::HistoryEntry { .role = model::Role::User,
                                                      .content = model::render_plan_rejection(p.value("reason", "")),
                                                      .invocation_id = std::nullopt,
                                                      .is_error = false });
            r.status = TaskStatus::AwaitingModel;
            return;

        case EventKind::ApprovalRequested:
        {
            require_status(r, e, { TaskStatus::AwaitingModel });
            auto pending = take_unrouted(r, e);
            pending.audit = p.at("audit").get<std::vector<std::string>>();
            r.pending_invocation = std::move(pending);
            r.status = TaskStatus::AwaitingApproval;
            return;
        }
        case EventKind::ApprovalGranted:
            require_status(r, e, { TaskStatus::AwaitingApproval });
            require_pending(r, e);
            if (r.pending_invocation->approved)
                corrupt(fmt::format("seq {}: invocation already approved", e.seq));
            r.pending_invocation->approved = true;
            return;
        case EventKind::ApprovalDenied:
        {
            require_status(r, e, { TaskStatus::AwaitingApproval });
            require_pending(r, e);
            if (r.pending_invocation->approved)
                corrupt(fmt::format("seq {}: denial after approval", e.seq));
            auto const id = r.pending_invocation->invocation_id;
            r.pending_invocation.reset();
            add_tool_turn(r, id, fmt::format("denied by user: {}", p.value("reason", "")), true);
            r.status = TaskStatus::AwaitingModel;
            return;
        }
        case EventKind::PolicyDenied:
        {
            require_status(r, e, { TaskStatus::AwaitingModel });
            auto const denied = take_unrouted(r, e);
            add_tool_turn(r, denied.invocation_id, p.at("content").get<std::string>(), true);
            return;
        }
        case EventKind::ToolDispatched:
        {
            require_status(r, e, { TaskStatus::AwaitingModel, TaskStatus::AwaitingApproval });
            if (r.status == TaskStatus::AwaitingModel)
            {
                auto pending = take_unrouted(r, e);
                pending.audit = p.value("audit", std::vector<std::string> {});
                r.pending_invocation = std::move(pending);
            }
            else
            {
                require_pending(r, e);
                if (!r.pending_invocation->approved)
                    corrupt(fmt::format("seq {}: dispatch of an unapproved invocation", e.seq));
            }
            if (auto it = p.find("expected_hash"); it != p.end() && !it->is_null())
                r.pending_invocation->expected_hash = it->get<std::string>();
            r.status = TaskStatus::AwaitingToolResult;
            return;
        }
        case EventKind::ToolResult:
        {
            auto const outcome = protocol::tool_outcome_from_json(p.at("outcome"));
            auto const tool = p.at("tool").get<std::string>();
            auto const content = model::render_tool_result(tool, outcome);
            if (p.value("synthetic", false))
            {
                require_status(r, e, { TaskStatus::AwaitingModel });
                auto const call = take_unrouted(r, e);
                add_tool_turn(r, call.invocation_id, content, !outcome.ok());
                return;
            }
            require_status(r, e, { TaskStatus::AwaitingToolResult });
            require_pending(r, e);
            auto const id = r.pending_invocation->invocation_id;
            r.pending_invocation.reset();
            add_tool_turn(r, id, content, !outcome.ok());
            if (auto it = p.find("read_path"); it != p.end() && !it->is_null())
                r.read_set[it->get<std::string>()] = p.at("read_hash").get<std::string>();
            r.status = TaskStatus::AwaitingModel;
            return;
        }
        case EventKind::ReadBeforeEditWarning:
        case EventKind::DuplicateResultIgnored:
        case EventKind::ClientDisconnected:
        case EventKind::ClientReconnected:
            if (r.status == TaskStatus::Created && r.last_seq == 0)
                corrupt(fmt::format("seq {}: {} before TaskCreated", e.seq, to_string(e.kind)));
            return;

        case EventKind::TaskCompleted:
            require_status(r, e, { TaskStatus::AwaitingModel });
            if (r.history.empty() || r.history.back().role != model::Role::Model)
                corrupt(fmt::format("seq {}: completion without a final model turn", e.seq));
            r.final_text = p.at("final_text").get<std::string>();
            terminate(r, TaskStatus::Completed);
            return;
        case EventKind::TaskFailed:
            r.failure_reason = p.at("reason").get<std::string>();
            terminate(r, TaskStatus::Failed);
            return;
        case EventKind::TaskCancelled:
            terminate(r, TaskStatus::Cancelled);
            return;
    }
    corrupt(fmt::format("seq {}: unhandled event kind", e.seq));
}

} // namespace

void apply_event(TaskRecord& record, const TimelineEvent& event)
{
    if (event.seq != record.last_seq + 1)
    {
        if (event.seq <= record.last_seq)
            corrupt(fmt::format("duplicate seq {}", event.seq));
        corrupt(fmt::format("gap at {}", record.last_seq + 1));
    }
    if (record.last_seq == 0 && event.kind != EventKind::TaskCreated)
        corrupt(fmt::format("seq 1 is {}, expected TaskCreated", to_string(event.kind)));
    if (record.last_seq > 0 && maestro::is_terminal(record.status))
        corrupt(fmt::format("seq {}: {} after the terminal event", event.seq, to_string(event.kind)));
    if (record.last_seq > 0 && event.task_id != record.task_id)
        corrupt(fmt::format("seq {}: event belongs to task {}", event.seq, event.task_id));

    auto next = record;
    try
    {
        fold(next, event);
    }
    catch (const StateError&)
    {
        throw;
    }
    catch (const std::exception& ex)
    {
        corrupt(fmt::format("seq {}: malformed {} payload: {}", event.seq, to_string(event.kind), ex.what()));
    }
    next.last_seq = event.seq;
    record = std::move(next);
}

auto replay(const std::vector<TimelineEvent>& events) -> TaskRecord
{
    return replay_from(TaskRecord {}, events);
}

auto replay_from(TaskRecord base, const std::vector<TimelineEvent>& events) -> TaskRecord
{
    for (auto const& event: events)
        if (event.seq > base.last_seq)
            apply_event(base, event);
    return base;
}

} // namespace steward::state
