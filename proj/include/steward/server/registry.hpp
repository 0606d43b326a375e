// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/maestro/runner.hpp>
#include <steward/model/driver.hpp>
#include <steward/safety/policy.hpp>
#include <steward/state/event_log.hpp>
#include <steward/state/session_store.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

namespace steward::server
{

/// Builds the model driver for a task. Called once per task runner, including
/// after a restart, with the record as rebuilt from storage.
using DriverFactory = std::function<std::shared_ptr<model::ModelDriver>(const maestro::TaskRecord&)>;

/// Fresh ScriptedDriver per task, advanced past the turns the task has
/// already consumed.
[[nodiscard]] auto scripted_driver_factory(model::Script script) -> DriverFactory;

struct StorageConfig
{
    /// Empty: in-memory tiers only.
    std::filesystem::path data_dir;
    std::chrono::milliseconds session_ttl = state::TwoTierStore::DefaultTtl;
    bool sync = true;
};

class UnknownPolicy: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Owns the timeline, the session store and the task runners.
class TaskRegistry
{
  public:
    TaskRegistry(StorageConfig storage,
                 maestro::MaestroConfig maestro,
                 DriverFactory drivers,
                 safety::PolicyConfig default_policy = {},
                 std::filesystem::path policy_dir = {});
    ~TaskRegistry();

    /// Throws MaestroError(EmptyPrompt) or UnknownPolicy.
    auto create(const maestro::CreateTaskRequest& request) -> std::string;
    /// Loads tasks known only from storage on first use; nullptr if unknown.
    auto find(const std::string& task_id) -> maestro::TaskRunner*;
    [[nodiscard]] auto task_ids() const -> std::vector<std::string>;

    [[nodiscard]] auto log() -> state::EventLog& { return *_log; }
    [[nodiscard]] auto sessions() -> state::TwoTierStore& { return *_sessions; }

    /// "" names the default policy; others resolve to <policy_dir>/<name>.policy.
    [[nodiscard]] auto resolve_policy(const std::string& name) const -> safety::PolicyConfig;

    /// Stops every runner's loop.
    void shutdown();

  private:
    auto deps_for(const maestro::TaskRecord& record) -> maestro::RunnerDeps;

    StorageConfig _storage;
    maestro::MaestroConfig _maestro;
    DriverFactory _drivers;
    safety::PolicyConfig _defaultPolicy;
    std::filesystem::path _policyDir;
    std::unique_ptr<state::EventLog> _log;
    std::unique_ptr<state::TwoTierStore> _sessions;
    mutable std::mutex _mutex;
    std::map<std::string, std::unique_ptr<maestro::TaskRunner>> _runners;
};

} // namespace steward::server
