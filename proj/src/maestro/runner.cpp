// SPDX-License-Identifier: Apache-2.0
#include <steward/maestro/runner.hpp>
#include <steward/state/replay.hpp>

#include <fmt/format.h>

#include <iostream>

namespace steward::maestro
{

using nlohmann::json;
using protocol::MessageKind;

namespace
{

auto plan_decision_from(const std::string& text) -> PlanDecisionKind
{
    if (text == "approved")
        return PlanDecisionKind::Approved;
    if (text == "modified")
        return PlanDecisionKind::Modified;
    if (text == "rejected")
        return PlanDecisionKind::Rejected;
    return PlanDecisionKind::Pending;
}

} // namespace

TaskRunner::TaskRunner(RunnerDeps deps, TaskRecord record):
    _deps(std::move(deps)),
    _taskId(record.task_id),
    _engine(*_deps.log, std::move(record), _deps.policy, _deps.config)
{
    _engine.set_observer([this](const state::TimelineEvent& event) { forward(event); });
    _thread = std::thread([this] { loop(); });
}

auto TaskRunner::create(RunnerDeps deps, const std::string& task_id, const CreateTaskRequest& request)
    -> std::unique_ptr<TaskRunner>
{
    auto record = create_task(*deps.log, task_id, request);
    auto runner = std::unique_ptr<TaskRunner>(new TaskRunner(std::move(deps), std::move(record)));
    auto lock = std::lock_guard(runner->_mutex);
    runner->write_snapshot();
    return runner;
}

auto TaskRunner::load(RunnerDeps deps, const std::string& task_id) -> std::unique_ptr<TaskRunner>
{
    auto const events = deps.log->read(task_id);
    if (events.empty())
        throw MaestroError(MaestroError::Code::TaskNotFound, fmt::format("no task {}", task_id));

    auto snapshot = deps.sessions->get(task_id);
    if (!snapshot)
    {
        auto runner = std::unique_ptr<TaskRunner>(new TaskRunner(std::move(deps), state::replay(events)));
        auto lock = std::lock_guard(runner->_mutex);
        if (!is_terminal(runner->_engine.record().status))
            runner->finish(runner->_engine.fail("Unrecoverable", "no session snapshot was found for this task"));
        return runner;
    }

    auto base = task_record_from_json(json::parse(snapshot->record));
    auto record = state::replay_from(std::move(base), events);
    return std::unique_ptr<TaskRunner>(new TaskRunner(std::move(deps), std::move(record)));
}

TaskRunner::~TaskRunner()
{
    {
        auto lock = std::lock_guard(_mutex);
        _stopping = true;
    }
    _wake.notify_all();
    if (_thread.joinable())
        _thread.join();
    auto lock = std::lock_guard(_mutex);
    if (_link)
        _link->close();
}

auto TaskRunner::ready_for_model() const -> bool
{
    return _link && !_linkBroken && !_modelInFlight && _engine.record().status == TaskStatus::AwaitingModel;
}

void TaskRunner::loop()
{
    auto lock = std::unique_lock(_mutex);
    while (true)
    {
        _wake.wait(lock, [&] { return _stopping || ready_for_model(); });
        if (_stopping)
            return;

        auto payload = _engine.payload();
        _modelInFlight = true;
        lock.unlock();

        auto turn = std::optional<model::ModelTurn> {};
        auto failure = std::optional<std::pair<std::string, std::string>> {};
        try
        {
            turn = _deps.driver->next(payload);
        }
        catch (const model::DriverError& e)
        {
            failure.emplace(std::string(model::to_string(e.code())), e.what());
        }
        catch (const std::exception& e)
        {
            failure.emplace("DriverUnavailable", e.what());
        }

        lock.lock();
        _modelInFlight = false;
        if (_stopping)
            return;
        // The task may have been cancelled while the model was thinking.
        if (_engine.record().status != TaskStatus::AwaitingModel)
            continue;
        try
        {
            finish(turn ? _engine.step(*turn) : _engine.fail(failure->first, failure->second));
        }
        catch (const std::exception& e)
        {
            std::cerr << fmt::format("task {}: {}\n", _taskId, e.what());
            try
            {
                finish(_engine.fail("InternalError", e.what()));
            }
            catch (const std::exception&)
            {
                _changed.notify_all();
                return;
            }
        }
    }
}

void TaskRunner::forward(const state::TimelineEvent& event)
{
    send(state::to_message(event));
}

void TaskRunner::send(const protocol::Message& msg)
{
    if (!_link || _linkBroken)
        return;
    if (!_link->send(msg))
        _linkBroken = true;
}

void TaskRunner::route(const Directive& directive)
{
    auto const& task = _taskId;
    std::visit(
        [&](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, QueryModel>)
                _wake.notify_all();
            else if constexpr (std::is_same_v<T, RequestBootstrap>)
                send(protocol::make_message(MessageKind::BootstrapRequest, task, protocol::to_json(d.limits)));
            else if constexpr (std::is_same_v<T, Dispatch>)
                send(protocol::make_tool_dispatch(task, d.invocation.invocation_id, d.invocation.call, d.options));
            else if constexpr (std::is_same_v<T, RequestApproval>)
            {
                auto body = json {
                    { "tool", d.invocation.call.tool },
                    { "args", d.invocation.call.args },
                    { "audit", d.invocation.audit },
                };
                if (d.invocation.call.rationale)
                    body["rationale"] = *d.invocation.call.rationale;
                send(protocol::make_message(MessageKind::ApprovalRequest, task, std::move(body), d.invocation.invocation_id));
            }
            else if constexpr (std::is_same_v<T, RequestPlanDecision>)
                send(protocol::make_message(MessageKind::PlanProposed, task, json { { "steps", d.steps } }));
            else
            {
                // Terminal: the executor has seen the final event; hang up.
                if (_link)
                {
                    _link->close();
                    _link.reset();
                }
            }
        },
        directive);
}

void TaskRunner::drop_link(const std::string& reason)
{
    auto link = std::move(_link);
    _link.reset();
    _linkBroken = false;
    _engine.note_disconnect(link->session_id(), reason);
    write_snapshot();
    link->close();
}

void TaskRunner::write_snapshot()
{
    auto const& record = _engine.record();
    _deps.sessions->put(state::SessionSnapshot {
        .task_id = _taskId,
        .record = to_json(record).dump(),
        .last_seq = record.last_seq,
    });
}

void TaskRunner::finish(const Directive& directive)
{
    route(directive);
    if (_linkBroken && _link)
        drop_link("send failed");
    write_snapshot();
    _changed.notify_all();
}

void TaskRunner::attach(std::shared_ptr<ExecutorLink> link, std::uint64_t last_seen_seq)
{
    auto lock = std::lock_guard(_mutex);
    if (_link)
        throw MaestroError(MaestroError::Code::ExecutorAlreadyAttached,
                           fmt::format("task {} already has executor session {}", _taskId, _link->session_id()));
    auto const status = _engine.record().status;
    if (is_terminal(status))
        throw MaestroError(MaestroError::Code::TaskTerminal, std::string(to_string(status)));

    _link = std::move(link);
    _linkBroken = false;
    for (auto const& event: _deps.log->read(_taskId, last_seen_seq + 1))
        send(state::to_message(event));

    auto reconnect = status != TaskStatus::Created && status != TaskStatus::Bootstrapping;
    if (!reconnect)
        for (auto const& event: _deps.log->read(_taskId))
            reconnect = reconnect || event.kind == state::EventKind::ClientDisconnected;

    auto directive = reconnect ? _engine.note_reconnect(_link->session_id()) : _engine.current_directive();
    if (std::holds_alternative<RequestBootstrap>(directive))
        directive = _engine.begin_bootstrap();
    finish(directive);
}

void TaskRunner::detach(const std::string& session_id, const std::string& reason)
{
    auto lock = std::lock_guard(_mutex);
    if (!_link || _link->session_id() != session_id)
        return;
    drop_link(reason);
    write_snapshot();
    _changed.notify_all();
}

void TaskRunner::deliver(const std::string& session_id, const protocol::Message& msg)
{
    auto lock = std::lock_guard(_mutex);
    if (!_link || _link->session_id() != session_id)
        return;

    auto const reply_error = [&](const std::string& code, const std::string& message) {
        send(protocol::make_message(MessageKind::Error, _taskId, json { { "code", code }, { "message", message } }));
    };
    auto const status = _engine.record().status;

    try
    {
        switch (msg.kind)
        {
            case MessageKind::BootstrapResult:
                if (status == TaskStatus::Created || status == TaskStatus::Bootstrapping)
                    finish(_engine.complete_bootstrap(protocol::bootstrap_metadata_from_json(msg.body)));
                return;
            case MessageKind::ToolResult:
                finish(_engine.handle_tool_result(*msg.invocation_id, protocol::tool_outcome_from_json(msg.body)));
                return;
            case MessageKind::ApprovalDecision:
                finish(_engine.handle_approval(*msg.invocation_id,
                                               msg.body.at("decision").get<std::string>() == "approve",
                                               msg.body.value("reason", std::string {}),
                                               "executor"));
                return;
            case MessageKind::PlanDecision:
                finish(_engine.handle_plan_decision(plan_decision_from(msg.body.at("decision").get<std::string>()),
                                                    msg.body.value("steps", std::vector<std::string> {}),
                                                    msg.body.value("reason", std::string {})));
                return;
            case MessageKind::Ping: send(protocol::make_message(MessageKind::Pong, _taskId)); return;
            case MessageKind::Pong:
            case MessageKind::Hello: return;
            default:
                reply_error("UnexpectedMessage",
                            fmt::format("{} is not accepted from an executor", protocol::to_string(msg.kind)));
                return;
        }
    }
    catch (const MaestroError& e)
    {
        if (msg.kind == MessageKind::ToolResult && e.code() == MaestroError::Code::UnknownInvocation)
        {
            // Duplicate or stale result; the engine has recorded it.
            if (!is_terminal(_engine.record().status))
                write_snapshot();
            _changed.notify_all();
            return;
        }
        reply_error(std::string(to_string(e.code())), e.what());
    }
}

void TaskRunner::approve(const std::optional<std::string>& invocation_id, const std::string& source)
{
    auto lock = std::lock_guard(_mutex);
    auto const& record = _engine.record();
    if (record.status != TaskStatus::AwaitingApproval)
        throw MaestroError(MaestroError::Code::ActionIllegalInState,
                           fmt::format("nothing awaits approval; task is {}", to_string(record.status)));
    finish(_engine.handle_approval(invocation_id.value_or(record.pending_invocation->invocation_id), true, {}, source));
}

void TaskRunner::deny(const std::optional<std::string>& invocation_id,
                      const std::string& reason,
                      const std::string& source)
{
    auto lock = std::lock_guard(_mutex);
    auto const& record = _engine.record();
    if (record.status != TaskStatus::AwaitingApproval)
        throw MaestroError(MaestroError::Code::ActionIllegalInState,
                           fmt::format("nothing awaits approval; task is {}", to_string(record.status)));
    finish(
        _engine.handle_approval(invocation_id.value_or(record.pending_invocation->invocation_id), false, reason, source));
}

void TaskRunner::decide_plan(PlanDecisionKind decision, const std::vector<std::string>& steps, const std::string& reason)
{
    auto lock = std::lock_guard(_mutex);
    finish(_engine.handle_plan_decision(decision, steps, reason));
}

void TaskRunner::cancel(const std::string& reason)
{
    auto lock = std::lock_guard(_mutex);
    finish(_engine.cancel(reason));
}

auto TaskRunner::record() const -> TaskRecord
{
    auto lock = std::lock_guard(_mutex);
    return _engine.record();
}

auto TaskRunner::status() const -> TaskStatus
{
    auto lock = std::lock_guard(_mutex);
    return _engine.record().status;
}

auto TaskRunner::attached_session() const -> std::optional<std::string>
{
    auto lock = std::lock_guard(_mutex);
    if (!_link)
        return std::nullopt;
    return _link->session_id();
}

auto TaskRunner::wait_until(const std::function<bool(const TaskRecord&)>& pred, std::chrono::milliseconds timeout) const
    -> bool
{
    auto lock = std::unique_lock(_mutex);
    return _changed.wait_for(lock, timeout, [&] { return pred(_engine.record()); });
}

auto TaskRunner::wait_terminal(std::chrono::milliseconds timeout) const -> std::optional<TaskStatus>
{
    if (!wait_until([](const TaskRecord& r) { return is_terminal(r.status); }, timeout))
        return std::nullopt;
    return status();
}

} // namespace steward::maestro
