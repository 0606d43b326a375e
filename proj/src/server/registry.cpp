// SPDX-License-Identifier: Apache-2.0
#include <steward/server/registry.hpp>
#include <steward/state/replay.hpp>

#include <fmt/format.h>

namespace steward::server
{

auto scripted_driver_factory(model::Script script) -> DriverFactory
{
    return [script = std::move(script)](const maestro::TaskRecord& record) {
        auto driver = std::make_shared<model::ScriptedDriver>(script);
        driver->skip(static_cast<std::size_t>(record.iteration_count));
        return driver;
    };
}

TaskRegistry::TaskRegistry(StorageConfig storage,
                           maestro::MaestroConfig maestro,
                           DriverFactory drivers,
                           safety::PolicyConfig default_policy,
                           std::filesystem::path policy_dir):
    _storage(std::move(storage)),
    _maestro(maestro),
    _drivers(std::move(drivers)),
    _defaultPolicy(std::move(default_policy)),
    _policyDir(std::move(policy_dir))
{
    std::unique_ptr<state::EventStore> events;
    std::unique_ptr<state::DurableTier> durable;
    if (_storage.data_dir.empty())
    {
        events = std::make_unique<state::MemoryEventStore>();
        durable = std::make_unique<state::MemoryDurableTier>();
    }
    else
    {
        events = std::make_unique<state::FileEventStore>(_storage.data_dir / "timelines", _storage.sync);
        durable = std::make_unique<state::FileDurableTier>(_storage.data_dir / "sessions", _storage.sync);
    }
    _log = std::make_unique<state::EventLog>(std::move(events));
    _sessions = std::make_unique<state::TwoTierStore>(std::move(durable), _storage.session_ttl);
}

TaskRegistry::~TaskRegistry()
{
    shutdown();
}

auto TaskRegistry::resolve_policy(const std::string& name) const -> safety::PolicyConfig
{
    if (name.empty())
        return _defaultPolicy;
    auto const valid = name.find_first_of("/\\") == std::string::npos && name != "." && name != "..";
    auto const path = _policyDir / (name + ".policy");
    if (!valid || _policyDir.empty() || !std::filesystem::is_regular_file(path))
        throw UnknownPolicy(fmt::format("unknown policy '{}'", name));
    return safety::load_policy(path);
}

auto TaskRegistry::deps_for(const maestro::TaskRecord& record) -> maestro::RunnerDeps
{
    return maestro::RunnerDeps {
        .log = _log.get(),
        .sessions = _sessions.get(),
        .policy = resolve_policy(record.policy_name),
        .config = _maestro,
        .driver = _drivers(record),
    };
}

auto TaskRegistry::create(const maestro::CreateTaskRequest& request) -> std::string
{
    auto lock = std::lock_guard(_mutex);
    auto record = maestro::TaskRecord {};
    record.task_id = maestro::generate_task_id();
    while (_runners.contains(record.task_id) || _log->contains(record.task_id))
        record.task_id = maestro::generate_task_id();
    record.policy_name = request.policy_name;

    auto deps = deps_for(record);
    _runners.emplace(record.task_id, maestro::TaskRunner::create(std::move(deps), record.task_id, request));
    return record.task_id;
}

auto TaskRegistry::find(const std::string& task_id) -> maestro::TaskRunner*
{
    auto lock = std::lock_guard(_mutex);
    if (auto it = _runners.find(task_id); it != _runners.end())
        return it->second.get();

    auto const events = _log->read(task_id);
    if (events.empty())
        return nullptr;
    auto runner = maestro::TaskRunner::load(deps_for(state::replay(events)), task_id);
    return _runners.emplace(task_id, std::move(runner)).first->second.get();
}

auto TaskRegistry::task_ids() const -> std::vector<std::string>
{
    return _log->task_ids();
}

void TaskRegistry::shutdown()
{
    auto runners = std::map<std::string, std::unique_ptr<maestro::TaskRunner>> {};
    {
        auto lock = std::lock_guard(_mutex);
        runners.swap(_runners);
    }
    runners.clear();
}

} // namespace steward::server
