// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/maestro/engine.hpp>
#include <steward/model/driver.hpp>
#include <steward/protocol/message.hpp>
#include <steward/state/event_log.hpp>
#include <steward/state/session_store.hpp>

#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace steward::maestro
{

/// The orchestrator's end of one executor connection.
class ExecutorLink
{
  public:
    virtual ~ExecutorLink() = default;

    [[nodiscard]] virtual auto session_id() const -> std::string = 0;
    /// False once the connection is gone.
    virtual auto send(const protocol::Message& msg) -> bool = 0;
    /// Idempotent.
    virtual void close() = 0;
};

struct RunnerDeps
{
    state::EventLog* log = nullptr;
    state::TwoTierStore* sessions = nullptr;
    safety::PolicyConfig policy;
    MaestroConfig config;
    std::shared_ptr<model::ModelDriver> driver;
};

/// Drives one task: owns its engine, the attached executor link (if any) and
/// a loop thread that queries the model whenever the task awaits it and an
/// executor is attached. Without an executor the task is parked.
class TaskRunner
{
  public:
    /// New task; emits TaskCreated.
    static auto create(RunnerDeps deps, const std::string& task_id, const CreateTaskRequest& request)
        -> std::unique_ptr<TaskRunner>;
    /// Existing task, rebuilt from its snapshot plus later events. Without a
    /// snapshot a non-terminal task is failed as Unrecoverable.
    static auto load(RunnerDeps deps, const std::string& task_id) -> std::unique_ptr<TaskRunner>;

    ~TaskRunner();
    TaskRunner(const TaskRunner&) = delete;
    auto operator=(const TaskRunner&) -> TaskRunner& = delete;

    /// Sends the backlog after `last_seen_seq`, then bootstraps, resumes or
    /// re-presents the pending question. Throws MaestroError
    /// (ExecutorAlreadyAttached, TaskTerminal).
    void attach(std::shared_ptr<ExecutorLink> link, std::uint64_t last_seen_seq = 0);
    /// Parks the task if `session_id` is the attached session; otherwise no-op.
    void detach(const std::string& session_id, const std::string& reason);
    /// Inbound frame from the executor. Frames from stale sessions are ignored.
    void deliver(const std::string& session_id, const protocol::Message& msg);

    // User actions; throw MaestroError(ActionIllegalInState) when the task is
    // not waiting for them.
    void approve(const std::optional<std::string>& invocation_id, const std::string& source);
    void deny(const std::optional<std::string>& invocation_id, const std::string& reason, const std::string& source);
    void decide_plan(PlanDecisionKind decision, const std::vector<std::string>& steps, const std::string& reason);
    void cancel(const std::string& reason);

    [[nodiscard]] auto task_id() const -> const std::string& { return _taskId; }
    [[nodiscard]] auto record() const -> TaskRecord;
    [[nodiscard]] auto status() const -> TaskStatus;
    [[nodiscard]] auto attached_session() const -> std::optional<std::string>;

    /// Blocks until `pred(record)` holds or the timeout passes.
    auto wait_until(const std::function<bool(const TaskRecord&)>& pred, std::chrono::milliseconds timeout) const
        -> bool;
    auto wait_terminal(std::chrono::milliseconds timeout) const -> std::optional<TaskStatus>;

  private:
    TaskRunner(RunnerDeps deps, TaskRecord record);

    void loop();
    [[nodiscard]] auto ready_for_model() const -> bool;
    void finish(const Directive& directive);
    void route(const Directive& directive);
    void send(const protocol::Message& msg);
    void drop_link(const std::string& reason);
    void write_snapshot();
    void forward(const state::TimelineEvent& event);

    RunnerDeps _deps;
    std::string _taskId;
    mutable std::mutex _mutex;
    mutable std::condition_variable _changed;
    std::condition_variable _wake;
    TaskEngine _engine;
    std::shared_ptr<ExecutorLink> _link;
    bool _linkBroken = false;
    bool _modelInFlight = false;
    bool _stopping = false;
    std::thread _thread;
};

} // namespace steward::maestro
