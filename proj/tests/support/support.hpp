// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/cli/commands.hpp>
#include <steward/maestro/engine.hpp>
#include <steward/maestro/runner.hpp>
#include <steward/server/server.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

namespace steward::testing
{

namespace fs = std::filesystem;

class TempDir
{
  public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    auto operator=(const TempDir&) -> TempDir& = delete;

    [[nodiscard]] auto path() const -> const fs::path& { return _path; }
    [[nodiscard]] auto operator/(const fs::path& rel) const -> fs::path { return _path / rel; }

  private:
    fs::path _path;
};

void write_file(const fs::path& path, std::string_view bytes);
[[nodiscard]] auto read_file(const fs::path& path) -> std::string;

/// Seeded generator; the seed is reported by failing properties.
class Rng
{
  public:
    explicit Rng(std::uint64_t seed): _seed(seed), _engine(seed) {}

    [[nodiscard]] auto seed() const -> std::uint64_t { return _seed; }
    auto uniform(int lo, int hi) -> int; // inclusive
    auto index(std::size_t n) -> std::size_t;
    auto chance(double p) -> bool;
    auto text(std::string_view alphabet, std::size_t min_len, std::size_t max_len) -> std::string;
    auto bytes(std::size_t min_len, std::size_t max_len) -> std::string;

    template<typename T>
    auto pick(const std::vector<T>& items) -> const T&
    {
        return items[index(items.size())];
    }

    auto engine() -> std::mt19937_64& { return _engine; }

  private:
    std::uint64_t _seed;
    std::mt19937_64 _engine;
};

/// STEWARD_TEST_SEED when set, else `fallback`.
[[nodiscard]] auto test_seed(std::uint64_t fallback) -> std::uint64_t;

/// Runs `before(payload, call_index)` ahead of every call to the wrapped driver.
class HookedDriver final: public model::ModelDriver
{
  public:
    using Hook = std::function<void(const model::ModelPayload&, std::size_t)>;
    HookedDriver(std::shared_ptr<model::ModelDriver> inner, Hook before);

    auto next(const model::ModelPayload& payload) -> model::ModelTurn override;

  private:
    std::shared_ptr<model::ModelDriver> _inner;
    Hook _before;
    std::mutex _mutex;
    std::size_t _calls = 0;
};

/// ExecutorLink that keeps everything it is sent.
class RecordingLink final: public maestro::ExecutorLink
{
  public:
    explicit RecordingLink(std::string id = "s-test"): _id(std::move(id)) {}

    [[nodiscard]] auto session_id() const -> std::string override { return _id; }
    auto send(const protocol::Message& msg) -> bool override;
    void close() override;

    [[nodiscard]] auto sent() const -> std::vector<protocol::Message>;
    [[nodiscard]] auto sent_of(protocol::MessageKind kind) const -> std::vector<protocol::Message>;
    [[nodiscard]] auto closed() const -> bool;
    void fail_sends(bool fail);

  private:
    std::string _id;
    mutable std::mutex _mutex;
    std::vector<protocol::Message> _sent;
    bool _closed = false;
    bool _fail = false;
};

struct FixtureOptions
{
    model::Script script;
    maestro::MaestroConfig maestro;
    safety::PolicyConfig policy;
    fs::path policy_dir;
    /// Empty: in-memory storage.
    fs::path data_dir;
    std::chrono::milliseconds session_ttl = state::TwoTierStore::DefaultTtl;
    server::ServerConfig server;
    /// Optional wrapper around each task's (recording) driver.
    std::function<std::shared_ptr<model::ModelDriver>(const std::string& task_id, std::shared_ptr<model::ModelDriver>)>
        wrap_driver;
};

/// A registry plus a listening server on an ephemeral loopback port.
class ServerFixture
{
  public:
    explicit ServerFixture(FixtureOptions options);
    ~ServerFixture();

    [[nodiscard]] auto url() const -> std::string;
    [[nodiscard]] auto registry() -> server::TaskRegistry& { return *_registry; }
    [[nodiscard]] auto server() -> server::Server& { return *_server; }
    [[nodiscard]] auto runner(const std::string& task_id) -> maestro::TaskRunner&;
    [[nodiscard]] auto events(const std::string& task_id) -> std::vector<state::TimelineEvent>;
    /// Payloads the task's driver has been asked for so far.
    [[nodiscard]] auto payloads(const std::string& task_id) -> std::vector<model::ModelPayload>;

    /// Stops the server and drops every runner, keeping storage.
    void stop();

  private:
    FixtureOptions _options;
    std::mutex _mutex;
    std::map<std::string, std::shared_ptr<model::RecordingDriver>> _recorders;
    std::unique_ptr<server::TaskRegistry> _registry;
    std::unique_ptr<server::Server> _server;
};

struct CliRun
{
    int exit_code = -1;
    std::string out;
    std::string err;
    std::string task_id;
};

/// cmd_run against the fixture with a per-test invocation cache.
auto run_cli(ServerFixture& fixture, cli::RunOptions options, cli::Steering& steering) -> CliRun;

[[nodiscard]] auto kind_names(const std::vector<state::TimelineEvent>& events) -> std::vector<std::string>;
/// Drops ClientDisconnected and ClientReconnected.
[[nodiscard]] auto without_connection_events(const std::vector<state::TimelineEvent>& events)
    -> std::vector<state::TimelineEvent>;
/// Kind plus payload with run-specific fields (working directory, durations)
/// removed, for comparing two runs of the same script.
[[nodiscard]] auto comparable(const state::TimelineEvent& event) -> nlohmann::json;

[[nodiscard]] auto count_kind(const std::vector<state::TimelineEvent>& events, state::EventKind kind) -> std::size_t;
[[nodiscard]] auto index_of(const std::vector<state::TimelineEvent>& events, state::EventKind kind,
                            const std::string& invocation_id = {}) -> std::optional<std::size_t>;

/// Seeded model stand-in producing a mix of tool calls (including unknown
/// tools and malformed arguments), plan proposals and final answers.
class RandomDriver final: public model::ModelDriver
{
  public:
    struct Options
    {
        double final_chance = 0.12;
        /// Chance of a plan proposal while the payload asks for one; a small
        /// fixed chance applies otherwise.
        double plan_chance_when_requested = 0.7;
        std::vector<std::string> files = { "a.txt", "b.txt" };
    };

    RandomDriver(std::uint64_t seed, Options options);
    explicit RandomDriver(std::uint64_t seed): RandomDriver(seed, Options {}) {}

    auto next(const model::ModelPayload& payload) -> model::ModelTurn override;

  private:
    auto random_call() -> model::ToolCall;

    Rng _rng;
    Options _options;
};

/// Verdicts the simulator gives when asked.
struct SimulatedUser
{
    std::function<bool(const maestro::PendingInvocation&)> approve = [](const maestro::PendingInvocation&) {
        return true;
    };
    std::function<std::pair<maestro::PlanDecisionKind, std::vector<std::string>>(const std::vector<std::string>&)>
        plan = [](const std::vector<std::string>&) {
            return std::pair { maestro::PlanDecisionKind::Approved, std::vector<std::string> {} };
        };
    /// Called before every directive; returning true simulates a drop and
    /// reconnect of the executor at that point.
    std::function<bool(const maestro::TaskRecord&)> bounce = [](const maestro::TaskRecord&) { return false; };
};

/// Drives a TaskEngine to a terminal status in-process, running tools for
/// real in `working_dir`. Returns the number of loop steps taken.
auto simulate(maestro::TaskEngine& engine,
              model::ModelDriver& driver,
              const fs::path& working_dir,
              SimulatedUser user = {},
              int max_steps = 500) -> int;

/// Default metadata for in-process tasks.
[[nodiscard]] auto fake_bootstrap(const fs::path& working_dir) -> protocol::BootstrapMetadata;

} // namespace steward::testing
