// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <steward/state/replay.hpp>
#include <steward/tools/tools.hpp>

#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace steward::testing
{

TempDir::TempDir()
{
    auto pattern = (fs::temp_directory_path() / "steward-test-XXXXXX").string();
    if (::mkdtemp(pattern.data()) == nullptr)
        throw std::runtime_error("mkdtemp failed");
    _path = pattern;
}

TempDir::~TempDir()
{
    auto ec = std::error_code {};
    fs::remove_all(_path, ec);
}

void write_file(const fs::path& path, std::string_view bytes)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    auto out = std::ofstream(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error(fmt::format("cannot write {}", path.string()));
}

auto read_file(const fs::path& path) -> std::string
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw std::runtime_error(fmt::format("cannot read {}", path.string()));
    return { std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>() };
}

auto Rng::uniform(int lo, int hi) -> int
{
    return std::uniform_int_distribution<int>(lo, hi)(_engine);
}

auto Rng::index(std::size_t n) -> std::size_t
{
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(_engine);
}

auto Rng::chance(double p) -> bool
{
    return std::bernoulli_distribution(p)(_engine);
}

auto Rng::text(std::string_view alphabet, std::size_t min_len, std::size_t max_len) -> std::string
{
    auto const len = std::uniform_int_distribution<std::size_t>(min_len, max_len)(_engine);
    auto out = std::string {};
    for (auto i = std::size_t { 0 }; i < len; ++i)
        out.push_back(alphabet[index(alphabet.size())]);
    return out;
}

auto Rng::bytes(std::size_t min_len, std::size_t max_len) -> std::string
{
    auto const len = std::uniform_int_distribution<std::size_t>(min_len, max_len)(_engine);
    auto out = std::string {};
    for (auto i = std::size_t { 0 }; i < len; ++i)
        out.push_back(static_cast<char>(uniform(0, 255)));
    return out;
}

auto test_seed(std::uint64_t fallback) -> std::uint64_t
{
    if (auto const* text = std::getenv("STEWARD_TEST_SEED"); text && *text)
        return std::strtoull(text, nullptr, 10);
    return fallback;
}

HookedDriver::HookedDriver(std::shared_ptr<model::ModelDriver> inner, Hook before):
    _inner(std::move(inner)), _before(std::move(before))
{
}

auto HookedDriver::next(const model::ModelPayload& payload) -> model::ModelTurn
{
    auto call = std::size_t {};
    {
        auto lock = std::lock_guard(_mutex);
        call = _calls++;
    }
    _before(payload, call);
    return _inner->next(payload);
}

auto RecordingLink::send(const protocol::Message& msg) -> bool
{
    auto lock = std::lock_guard(_mutex);
    if (_closed || _fail)
        return false;
    _sent.push_back(msg);
    return true;
}

void RecordingLink::close()
{
    auto lock = std::lock_guard(_mutex);
    _closed = true;
}

auto RecordingLink::sent() const -> std::vector<protocol::Message>
{
    auto lock = std::lock_guard(_mutex);
    return _sent;
}

auto RecordingLink::sent_of(protocol::MessageKind kind) const -> std::vector<protocol::Message>
{
    auto lock = std::lock_guard(_mutex);
    auto out = std::vector<protocol::Message> {};
    for (auto const& msg: _sent)
        if (msg.kind == kind)
            out.push_back(msg);
    return out;
}

auto RecordingLink::closed() const -> bool
{
    auto lock = std::lock_guard(_mutex);
    return _closed;
}

void RecordingLink::fail_sends(bool fail)
{
    auto lock = std::lock_guard(_mutex);
    _fail = fail;
}

ServerFixture::ServerFixture(FixtureOptions options): _options(std::move(options))
{
    auto base = server::scripted_driver_factory(_options.script);
    auto factory = [this, base](const maestro::TaskRecord& record) -> std::shared_ptr<model::ModelDriver> {
        auto recorder = std::make_shared<model::RecordingDriver>(base(record));
        {
            auto lock = std::lock_guard(_mutex);
            _recorders[record.task_id] = recorder;
        }
        if (_options.wrap_driver)
            return _options.wrap_driver(record.task_id, recorder);
        return recorder;
    };
    _registry = std::make_unique<server::TaskRegistry>(
        server::StorageConfig { .data_dir = _options.data_dir, .session_ttl = _options.session_ttl, .sync = false },
        _options.maestro,
        factory,
        _options.policy,
        _options.policy_dir);
    auto config = _options.server;
    config.bind_address = "127.0.0.1";
    config.port = 0;
    _server = std::make_unique<server::Server>(config, *_registry);
    _server->start();
}

ServerFixture::~ServerFixture()
{
    stop();
}

void ServerFixture::stop()
{
    if (_server)
        _server->stop();
    if (_registry)
        _registry->shutdown();
}

auto ServerFixture::url() const -> std::string
{
    return fmt::format("http://127.0.0.1:{}", _server->port());
}

auto ServerFixture::runner(const std::string& task_id) -> maestro::TaskRunner&
{
    auto* runner = _registry->find(task_id);
    if (!runner)
        throw std::runtime_error(fmt::format("no task {}", task_id));
    return *runner;
}

auto ServerFixture::events(const std::string& task_id) -> std::vector<state::TimelineEvent>
{
    return _registry->log().read(task_id);
}

auto ServerFixture::payloads(const std::string& task_id) -> std::vector<model::ModelPayload>
{
    auto lock = std::lock_guard(_mutex);
    auto it = _recorders.find(task_id);
    return it == _recorders.end() ? std::vector<model::ModelPayload> {} : it->second->payloads();
}

namespace
{

auto cache_root() -> const fs::path&
{
    static auto const dir = [] {
        static auto temp = TempDir {};
        ::setenv("STEWARD_CACHE_DIR", temp.path().c_str(), 1);
        return temp.path();
    }();
    return dir;
}

} // namespace

auto run_cli(ServerFixture& fixture, cli::RunOptions options, cli::Steering& steering) -> CliRun
{
    (void) cache_root();
    options.server = fixture.url();
    auto result = CliRun {};
    auto const on_task = options.on_task;
    options.on_task = [&](const std::string& id) {
        result.task_id = id;
        if (on_task)
            on_task(id);
    };
    auto out = std::ostringstream {};
    auto err = std::ostringstream {};
    result.exit_code = cli::cmd_run(options, steering, out, err);
    result.out = out.str();
    result.err = err.str();
    return result;
}

auto kind_names(const std::vector<state::TimelineEvent>& events) -> std::vector<std::string>
{
    auto out = std::vector<std::string> {};
    for (auto const& event: events)
        out.emplace_back(state::to_string(event.kind));
    return out;
}

auto without_connection_events(const std::vector<state::TimelineEvent>& events) -> std::vector<state::TimelineEvent>
{
    auto out = std::vector<state::TimelineEvent> {};
    for (auto const& event: events)
        if (event.kind != state::EventKind::ClientDisconnected && event.kind != state::EventKind::ClientReconnected)
            out.push_back(event);
    return out;
}

auto comparable(const state::TimelineEvent& event) -> nlohmann::json
{
    auto payload = event.payload;
    if (event.kind == state::EventKind::BootstrapCompleted && payload.contains("metadata"))
        payload["metadata"].erase("working_directory");
    if (event.kind == state::EventKind::ToolResult && payload.contains("outcome")
        && payload["outcome"].contains("payload"))
        payload["outcome"]["payload"].erase("duration_ms");
    return nlohmann::json { { "kind", state::to_string(event.kind) }, { "payload", payload } };
}

auto count_kind(const std::vector<state::TimelineEvent>& events, state::EventKind kind) -> std::size_t
{
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [&](const state::TimelineEvent& e) { return e.kind == kind; }));
}

auto index_of(const std::vector<state::TimelineEvent>& events, state::EventKind kind, const std::string& invocation_id)
    -> std::optional<std::size_t>
{
    for (auto i = std::size_t { 0 }; i < events.size(); ++i)
        if (events[i].kind == kind
            && (invocation_id.empty() || events[i].payload.value("invocation_id", std::string {}) == invocation_id))
            return i;
    return std::nullopt;
}

RandomDriver::RandomDriver(std::uint64_t seed, Options options): _rng(seed), _options(std::move(options))
{
}

auto RandomDriver::random_call() -> model::ToolCall
{
    static const auto words = std::vector<std::string> { "alpha", "beta", "gamma", "delta", "x", "" };
    static const auto commands = std::vector<std::string> {
        "echo hi", "ls", "cat a.txt", "false", "echo more >> b.txt", "rm -f scratch.txt", "touch scratch.txt",
        "printf 'alpha beta' > c.txt",
    };
    auto const file = _rng.chance(0.85) ? _rng.pick(_options.files) : std::string("missing.txt");
    switch (_rng.uniform(0, 9))
    {
        case 0:
        case 1:
        case 2: return { "read", { { "path", file } }, std::nullopt };
        case 3:
        case 4:
        case 5:
            return { "edit",
                     { { "file_name", file }, { "old_string", _rng.pick(words) }, { "new_string", _rng.pick(words) } },
                     std::nullopt };
        case 6:
        case 7: return { "shell", { { "command", _rng.pick(commands) } }, "look around" };
        case 8: return { "browse", { { "url", "https://example.com" } }, std::nullopt };
        default: return { "read", { { "path", 7 }, { "mode", "fast" } }, std::nullopt };
    }
}

auto RandomDriver::next(const model::ModelPayload& payload) -> model::ModelTurn
{
    if (_rng.chance(_options.final_chance))
        return model::FinalText { fmt::format("finished after {} entries", payload.history.size()) };
    auto const planChance = payload.planning_requested ? _options.plan_chance_when_requested : 0.03;
    if (_rng.chance(planChance))
    {
        auto plan = model::PlanProposal {};
        for (auto n = _rng.uniform(1, 4); n > 0; --n)
            plan.steps.push_back(fmt::format("step {}", _rng.uniform(1, 99)));
        return plan;
    }
    return random_call();
}

auto fake_bootstrap(const fs::path& working_dir) -> protocol::BootstrapMetadata
{
    return protocol::BootstrapMetadata {
        .os_name = "TestOS 1.0",
        .working_directory = working_dir.string(),
        .recent_git_history = {},
        .project_structure = {},
    };
}

auto simulate(maestro::TaskEngine& engine,
              model::ModelDriver& driver,
              const fs::path& working_dir,
              SimulatedUser user,
              int max_steps) -> int
{
    using namespace maestro;
    auto directive = engine.current_directive();
    auto sessions = 0;
    for (auto step = 0; step < max_steps; ++step)
    {
        auto const status = engine.record().status;
        if (is_terminal(status))
            return step;
        if (status != TaskStatus::Created && status != TaskStatus::Bootstrapping && user.bounce(engine.record()))
        {
            engine.note_disconnect(fmt::format("s-{}", sessions), "simulated drop");
            directive = engine.note_reconnect(fmt::format("s-{}", ++sessions));
        }

        auto done = false;
        std::visit(
            [&](const auto& d) {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, RequestBootstrap>)
                    directive = engine.complete_bootstrap(fake_bootstrap(working_dir));
                else if constexpr (std::is_same_v<T, QueryModel>)
                {
                    auto turn = std::optional<model::ModelTurn> {};
                    try
                    {
                        turn = driver.next(engine.payload());
                    }
                    catch (const model::DriverError& e)
                    {
                        directive = engine.fail(std::string(model::to_string(e.code())), e.what());
                        return;
                    }
                    directive = engine.step(*turn);
                }
                else if constexpr (std::is_same_v<T, Dispatch>)
                {
                    auto const outcome = tools::run_tool(working_dir, d.invocation.call, d.options);
                    directive = engine.handle_tool_result(d.invocation.invocation_id, outcome);
                }
                else if constexpr (std::is_same_v<T, RequestApproval>)
                {
                    auto const ok = user.approve(d.invocation);
                    directive = engine.handle_approval(d.invocation.invocation_id,
                                                       ok,
                                                       ok ? std::string {} : "denied in simulation",
                                                       "simulation");
                }
                else if constexpr (std::is_same_v<T, RequestPlanDecision>)
                {
                    auto [kind, steps] = user.plan(d.steps);
                    directive = engine.handle_plan_decision(
                        kind, steps, kind == PlanDecisionKind::Rejected ? "not this plan" : "");
                }
                else
                    done = true;
            },
            directive);
        if (done)
            return step;
    }
    throw std::runtime_error("simulation did not terminate");
}

} // namespace steward::testing
