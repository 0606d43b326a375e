// SPDX-License-Identifier: Apache-2.0
#include <steward/cli/executor.hpp>
#include <steward/state/timeline_event.hpp>

#include <fmt/format.h>

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <fcntl.h>
#include <fstream>
#include <thread>
#include <unistd.h>

namespace steward::cli
{

namespace fs = std::filesystem;
using nlohmann::json;
using protocol::MessageKind;

auto exit_code_for(maestro::TaskStatus status) -> std::optional<int>
{
    switch (status)
    {
        case maestro::TaskStatus::Completed: return ExitCompleted;
        case maestro::TaskStatus::Failed: return ExitFailed;
        case maestro::TaskStatus::Cancelled: return ExitCancelled;
        default: return std::nullopt;
    }
}

InvocationCache::InvocationCache(fs::path file): _file(std::move(file))
{
    auto in = std::ifstream(_file);
    auto line = std::string {};
    while (std::getline(in, line))
    {
        try
        {
            auto msg = protocol::decode_message(line);
            if (msg.kind == MessageKind::ToolResult && msg.invocation_id)
                _results.emplace(*msg.invocation_id, std::move(msg));
        }
        catch (const protocol::ProtocolError&)
        {
            // A torn final line from a crash mid-write; the tool's effect is
            // unknown, which is what the orchestrator assumes anyway.
        }
    }
}

auto InvocationCache::find(const std::string& invocation_id) const -> std::optional<protocol::Message>
{
    auto lock = std::lock_guard(_mutex);
    if (auto it = _results.find(invocation_id); it != _results.end())
        return it->second;
    return std::nullopt;
}

void InvocationCache::store(const protocol::Message& result)
{
    auto lock = std::lock_guard(_mutex);
    _results.insert_or_assign(*result.invocation_id, result);
    if (_file.empty())
        return;

    fs::create_directories(_file.parent_path());
    auto const data = protocol::encode_message(result);
    auto const fd = ::open(_file.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0600);
    if (fd < 0)
        throw std::runtime_error(fmt::format("cannot open invocation cache {}", _file.string()));
    auto offset = std::size_t { 0 };
    while (offset < data.size())
    {
        auto const n = ::write(fd, data.data() + offset, data.size() - offset);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
        {
            ::close(fd);
            throw std::runtime_error(fmt::format("cannot write invocation cache {}", _file.string()));
        }
        offset += static_cast<std::size_t>(n);
    }
    ::fdatasync(fd);
    ::close(fd);
}

auto InvocationCache::size() const -> std::size_t
{
    auto lock = std::lock_guard(_mutex);
    return _results.size();
}

auto default_cache_file(const std::string& task_id) -> fs::path
{
    auto base = fs::path {};
    if (auto const* dir = std::getenv("STEWARD_CACHE_DIR"); dir && *dir)
        base = dir;
    else if (auto const* state = std::getenv("XDG_STATE_HOME"); state && *state)
        base = fs::path(state) / "steward";
    else if (auto const* home = std::getenv("HOME"); home && *home)
        base = fs::path(home) / ".local" / "state" / "steward";
    else
        base = fs::temp_directory_path() / "steward";
    return base / (task_id + ".invocations");
}

ExecutorCore::ExecutorCore(std::string task_id, ExecutorOptions options, Steering& steering, InvocationCache& cache):
    _taskId(std::move(task_id)), _options(std::move(options)), _steering(steering), _cache(cache)
{
}

void ExecutorCore::print(const std::string& line)
{
    if (_options.progress)
        *_options.progress << line << '\n' << std::flush;
}

auto ExecutorCore::handle(const protocol::Message& msg) -> Reaction
{
    auto reaction = Reaction {};
    if (_options.fault && _options.fault(FaultPoint::Received, msg))
    {
        reaction.crash = true;
        return reaction;
    }

    switch (msg.kind)
    {
        case MessageKind::BootstrapRequest:
        {
            auto const limits = protocol::bootstrap_limits_from_json(msg.body);
            auto const meta = tools::bootstrap_probe(_options.working_dir, limits);
            reaction.replies.push_back(protocol::make_message(MessageKind::BootstrapResult, _taskId, protocol::to_json(meta)));
            break;
        }
        case MessageKind::ToolDispatch:
        {
            auto const& id = *msg.invocation_id;
            if (auto cached = _cache.find(id))
            {
                ++_replayed;
                reaction.replies.push_back(*cached);
                break;
            }
            auto call = protocol::ToolCall { .tool = msg.body.at("tool").get<std::string>(),
                                             .args = msg.body.at("args"),
                                             .rationale = std::nullopt };
            auto options = protocol::DispatchOptions {
                .redispatch = msg.body.value("redispatch", false),
                .expected_hash = msg.body.contains("expected_hash")
                                     ? std::optional<std::string>(msg.body["expected_hash"].get<std::string>())
                                     : std::nullopt,
                .enforce_read_before_edit = msg.body.value("enforce_read_before_edit", false),
            };
            auto const outcome = tools::run_tool(_options.working_dir, call, options, _options.limits);
            ++_executed;
            auto result = protocol::make_tool_result(_taskId, id, call.tool, outcome);
            _cache.store(result);
            if (_options.fault && _options.fault(FaultPoint::Executed, msg))
            {
                reaction.crash = true;
                return reaction;
            }
            reaction.replies.push_back(std::move(result));
            break;
        }
        case MessageKind::ApprovalRequest:
        {
            auto const answer = _steering.approve(msg);
            auto body = json { { "decision", answer.approve ? "approve" : "deny" } };
            if (!answer.reason.empty())
                body["reason"] = answer.reason;
            reaction.replies.push_back(
                protocol::make_message(MessageKind::ApprovalDecision, _taskId, std::move(body), msg.invocation_id));
            break;
        }
        case MessageKind::PlanProposed:
        {
            auto const answer = _steering.plan(msg.body.at("steps").get<std::vector<std::string>>());
            auto body = json { { "decision", answer.decision } };
            if (answer.decision == "modified")
                body["steps"] = answer.steps;
            if (!answer.reason.empty())
                body["reason"] = answer.reason;
            reaction.replies.push_back(protocol::make_message(MessageKind::PlanDecision, _taskId, std::move(body)));
            break;
        }
        case MessageKind::TaskUpdate:
        {
            auto const event = state::event_from_message(msg);
            if (event.seq <= _lastSeq)
                break;
            _lastSeq = event.seq;
            print(fmt::format("[{}] {} {}", event.seq, state::to_string(event.kind), state::summarize(event)));
            switch (event.kind)
            {
                case state::EventKind::TaskCompleted:
                    _finalText = event.payload.value("final_text", std::string {});
                    _terminal = maestro::TaskStatus::Completed;
                    break;
                case state::EventKind::TaskFailed: _terminal = maestro::TaskStatus::Failed; break;
                case state::EventKind::TaskCancelled: _terminal = maestro::TaskStatus::Cancelled; break;
                default: break;
            }
            break;
        }
        case MessageKind::Error:
            print(fmt::format("server error {}: {}",
                              msg.body.value("code", std::string {}),
                              msg.body.value("message", std::string {})));
            break;
        case MessageKind::Ping: reaction.replies.push_back(protocol::make_message(MessageKind::Pong, _taskId)); break;
        default: break;
    }
    return reaction;
}

auto run_session(Connection& conn, ExecutorCore& core) -> SessionEnd
{
    auto mutex = std::mutex {};
    auto ready = std::condition_variable {};
    auto queue = std::deque<protocol::Message> {};
    auto ended = false;

    auto reader = std::thread([&] {
        while (true)
        {
            auto msg = std::optional<protocol::Message> {};
            try
            {
                msg = conn.receive();
            }
            catch (const protocol::ProtocolError&)
            {
                continue;
            }
            if (!msg)
                break;
            if (msg->kind == MessageKind::Ping)
            {
                conn.send(protocol::make_message(MessageKind::Pong, core.task_id()));
                continue;
            }
            auto lock = std::lock_guard(mutex);
            queue.push_back(std::move(*msg));
            ready.notify_one();
        }
        auto lock = std::lock_guard(mutex);
        ended = true;
        ready.notify_one();
    });

    auto const finish = [&](SessionEnd end) {
        conn.close();
        reader.join();
        return end;
    };

    while (true)
    {
        auto msg = protocol::Message {};
        {
            auto lock = std::unique_lock(mutex);
            ready.wait(lock, [&] { return !queue.empty() || ended; });
            if (queue.empty())
                break;
            msg = std::move(queue.front());
            queue.pop_front();
        }
        auto reaction = ExecutorCore::Reaction {};
        try
        {
            reaction = core.handle(msg);
        }
        catch (const std::exception& e)
        {
            reaction.replies.push_back(protocol::make_message(
                MessageKind::Error, core.task_id(), json { { "code", "ExecutorError" }, { "message", e.what() } }));
        }
        if (reaction.crash)
            return finish(SessionEnd::Crashed);
        for (auto const& reply: reaction.replies)
            conn.send(reply);
        if (core.terminal())
            return finish(SessionEnd::Terminal);
    }
    return finish(core.terminal() ? SessionEnd::Terminal : SessionEnd::Disconnected);
}

} // namespace steward::cli
