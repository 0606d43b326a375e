// SPDX-License-Identifier: Apache-2.0
#include <steward/server/server.hpp>

#include "http_util.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/write.hpp>
#include <boost/beast/core/flat_buffer.hpp>
#include <boost/beast/http.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <array>
#include <cerrno>
#include <iostream>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>

namespace steward::server
{

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
using tcp = asio::ip::tcp;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace
{

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

/// Executor channel over an upgraded connection. The connection thread owns
/// the descriptor and calls invalidate() before closing it.
class SocketLink final: public maestro::ExecutorLink
{
  public:
    SocketLink(std::string id, int fd): _id(std::move(id)), _fd(fd) {}

    [[nodiscard]] auto session_id() const -> std::string override { return _id; }

    auto send(const protocol::Message& msg) -> bool override
    {
        auto const data = protocol::encode_message(msg);
        auto lock = std::lock_guard(_mutex);
        if (_closed)
            return false;
        auto offset = std::size_t { 0 };
        while (offset < data.size())
        {
            auto const n = ::send(_fd, data.data() + offset, data.size() - offset, MSG_NOSIGNAL);
            if (n < 0 && errno == EINTR)
                continue;
            if (n <= 0)
                return false;
            offset += static_cast<std::size_t>(n);
        }
        return true;
    }

    void close() override
    {
        auto lock = std::lock_guard(_mutex);
        if (_closed)
            return;
        _closed = true;
        ::shutdown(_fd, SHUT_RDWR);
    }

    void invalidate()
    {
        auto lock = std::lock_guard(_mutex);
        _closed = true;
    }

  private:
    std::string _id;
    int _fd;
    std::mutex _mutex;
    bool _closed = false;
};

auto json_response(http::status status, const json& body, unsigned version) -> Response
{
    auto res = Response { status, version };
    res.set(http::field::content_type, "application/json");
    res.body() = body.dump() + "\n";
    return res;
}

auto error_body(std::string_view code, const std::string& message) -> json
{
    return json { { "error", code }, { "message", message } };
}

auto status_for(maestro::MaestroError::Code code) -> http::status
{
    using C = maestro::MaestroError::Code;
    switch (code)
    {
        case C::TaskNotFound: return http::status::not_found;
        case C::EmptyPrompt:
        case C::ModifiedWithoutSteps: return http::status::bad_request;
        case C::UnknownInvocation:
        case C::ActionIllegalInState:
        case C::ExecutorAlreadyAttached:
        case C::TaskTerminal: return http::status::conflict;
    }
    return http::status::internal_server_error;
}

auto legal_values(std::initializer_list<std::string_view> values) -> std::string
{
    return fmt::format("{}", fmt::join(values, ", "));
}

auto parse_create_request(const std::string& text) -> maestro::CreateTaskRequest
{
    auto const body = json::parse(text);
    if (!body.is_object())
        throw std::invalid_argument("body must be a JSON object");
    for (auto const& [key, _]: body.items())
        if (key != "prompt" && key != "mode" && key != "planning" && key != "effort" && key != "policy")
            throw std::invalid_argument(fmt::format("unknown field '{}'", key));

    auto request = maestro::CreateTaskRequest {};
    if (!body.contains("prompt") || !body["prompt"].is_string())
        throw std::invalid_argument("'prompt' must be a string");
    request.prompt = body["prompt"].get<std::string>();

    if (body.contains("mode"))
    {
        auto const mode = body["mode"].is_string() ? safety::parse_execution_mode(body["mode"].get<std::string>())
                                                   : std::nullopt;
        if (!mode)
            throw std::invalid_argument(
                fmt::format("'mode' must be one of: {}", legal_values({ "approval", "autonomous" })));
        request.mode = *mode;
    }
    if (body.contains("planning"))
    {
        if (!body["planning"].is_boolean())
            throw std::invalid_argument("'planning' must be a boolean");
        request.planning = body["planning"].get<bool>();
    }
    if (body.contains("effort"))
    {
        auto const effort = body["effort"].is_string()
                                ? model::parse_thinking_effort(body["effort"].get<std::string>())
                                : std::nullopt;
        if (!effort)
            throw std::invalid_argument(
                fmt::format("'effort' must be one of: {}", legal_values({ "low", "medium", "high" })));
        request.effort = *effort;
    }
    if (body.contains("policy"))
    {
        if (!body["policy"].is_string())
            throw std::invalid_argument("'policy' must be a string");
        request.policy_name = body["policy"].get<std::string>();
    }
    return request;
}

auto optional_string(const json& body, const char* key) -> std::optional<std::string>
{
    if (!body.contains(key))
        return std::nullopt;
    if (!body[key].is_string())
        throw std::invalid_argument(fmt::format("'{}' must be a string", key));
    return body[key].get<std::string>();
}

} // namespace

struct Server::Impl
{
    asio::io_context ioc;
    tcp::acceptor acceptor { ioc };
    std::uint16_t port = 0;

    auto handle(Server& server, const Request& req, const detail::Target& target) -> Response;
    auto create_task(Server& server, const Request& req) -> Response;
    auto get_task(Server& server, const Request& req, const std::string& id) -> Response;
    auto get_events(Server& server, const Request& req, const std::string& id, const detail::Target& target)
        -> Response;
    auto post_action(Server& server, const Request& req, const std::string& id) -> Response;

    void attach(Server& server, tcp::socket& sock, beast::flat_buffer& buffer, const Request& req,
                const detail::Target& target);
    void stream(Server& server, tcp::socket& sock, const Request& req, const std::string& id,
                const detail::Target& target);
};

Server::Server(ServerConfig config, TaskRegistry& registry):
    _config(std::move(config)), _registry(registry), _impl(std::make_unique<Impl>())
{
}

Server::~Server()
{
    stop();
}

void Server::start()
{
    auto const address = asio::ip::make_address(_config.bind_address);
    auto const endpoint = tcp::endpoint(address, _config.port);
    _impl->acceptor.open(endpoint.protocol());
    _impl->acceptor.set_option(tcp::acceptor::reuse_address(true));
    _impl->acceptor.bind(endpoint);
    _impl->acceptor.listen();
    _impl->port = _impl->acceptor.local_endpoint().port();

    _running = true;
    _acceptor = std::thread([this] { accept_loop(); });
    _sweeper = std::thread([this] { sweep_loop(); });
}

void Server::stop()
{
    if (!_running.exchange(false))
        return;
    _sweepWake.notify_all();
    if (_acceptor.joinable())
        _acceptor.join();
    if (_sweeper.joinable())
        _sweeper.join();
    auto ec = boost::system::error_code {};
    _impl->acceptor.close(ec);

    auto lock = std::unique_lock(_connMutex);
    for (auto fd: _connections)
        ::shutdown(fd, SHUT_RDWR);
    _connDone.wait(lock, [&] { return _connections.empty(); });
}

auto Server::port() const -> std::uint16_t
{
    return _impl->port;
}

void Server::accept_loop()
{
    auto const listen_fd = _impl->acceptor.native_handle();
    while (_running)
    {
        auto pfd = pollfd { .fd = listen_fd, .events = POLLIN, .revents = 0 };
        if (::poll(&pfd, 1, 100) <= 0)
            continue;
        auto ec = boost::system::error_code {};
        auto sock = _impl->acceptor.accept(ec);
        if (ec)
            continue;
        auto const fd = sock.release(ec);
        if (ec)
            continue;
        {
            auto lock = std::lock_guard(_connMutex);
            _connections.insert(fd);
        }
        std::thread([this, fd] { serve(fd); }).detach();
    }
}

void Server::serve(int fd)
{
    auto sock = tcp::socket(_impl->ioc);
    auto ec = boost::system::error_code {};
    sock.assign(_impl->acceptor.local_endpoint(ec).protocol(), fd, ec);
    auto timeout = timeval { .tv_sec = 10, .tv_usec = 0 };
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &timeout, sizeof timeout);

    try
    {
        auto buffer = beast::flat_buffer {};
        while (_running)
        {
            auto req = Request {};
            http::read(sock, buffer, req, ec);
            if (ec)
                break;

            auto const target = detail::parse_target(std::string_view(req.target().data(), req.target().size()));
            if (!_config.token.empty() && req[http::field::authorization] != "Bearer " + _config.token)
            {
                auto res = json_response(http::status::unauthorized,
                                         error_body("Unauthorized", "missing or wrong bearer token"),
                                         req.version());
                res.keep_alive(false);
                res.prepare_payload();
                http::write(sock, res, ec);
                break;
            }

            auto const parts = detail::split_path(target.path);
            if (req.method() == http::verb::get && target.path == "/attach")
            {
                _impl->attach(*this, sock, buffer, req, target);
                break;
            }
            if (req.method() == http::verb::get && parts.size() == 3 && parts[0] == "tasks" && parts[2] == "stream")
            {
                _impl->stream(*this, sock, req, parts[1], target);
                break;
            }

            auto res = _impl->handle(*this, req, target);
            res.keep_alive(req.keep_alive());
            res.prepare_payload();
            http::write(sock, res, ec);
            if (ec || !req.keep_alive())
                break;
        }
    }
    catch (const std::exception& e)
    {
        std::cerr << fmt::format("connection error: {}\n", e.what());
    }

    {
        auto lock = std::lock_guard(_connMutex);
        _connections.erase(fd);
        sock.close(ec);
    }
    _connDone.notify_all();
}

auto Server::Impl::handle(Server& server, const Request& req, const detail::Target& target) -> Response
{
    auto const parts = detail::split_path(target.path);
    auto const v = req.version();
    try
    {
        if (parts.size() == 1 && parts[0] == "tasks" && req.method() == http::verb::post)
            return create_task(server, req);
        if (parts.size() == 2 && parts[0] == "tasks" && req.method() == http::verb::get)
            return get_task(server, req, parts[1]);
        if (parts.size() == 3 && parts[0] == "tasks" && parts[2] == "events" && req.method() == http::verb::get)
            return get_events(server, req, parts[1], target);
        if (parts.size() == 3 && parts[0] == "tasks" && parts[2] == "actions" && req.method() == http::verb::post)
            return post_action(server, req, parts[1]);
        return json_response(http::status::not_found,
                             error_body("NotFound", fmt::format("no route for {} {}", std::string(req.method_string()), target.path)),
                             v);
    }
    catch (const maestro::MaestroError& e)
    {
        return json_response(status_for(e.code()), error_body(maestro::to_string(e.code()), e.what()), v);
    }
    catch (const UnknownPolicy& e)
    {
        return json_response(http::status::bad_request, error_body("UnknownPolicy", e.what()), v);
    }
    catch (const json::exception& e)
    {
        return json_response(http::status::bad_request, error_body("InvalidBody", e.what()), v);
    }
    catch (const std::invalid_argument& e)
    {
        return json_response(http::status::bad_request, error_body("InvalidBody", e.what()), v);
    }
    catch (const state::StateError& e)
    {
        auto const status = e.code() == state::StateError::Code::TaskTerminated ? http::status::conflict
                                                                                 : http::status::internal_server_error;
        return json_response(status, error_body("StateError", e.what()), v);
    }
    catch (const std::exception& e)
    {
        return json_response(http::status::internal_server_error, error_body("InternalError", e.what()), v);
    }
}

auto Server::Impl::create_task(Server& server, const Request& req) -> Response
{
    auto const request = parse_create_request(req.body());
    auto const id = server._registry.create(request);
    return json_response(http::status::created, json { { "task_id", id }, { "status", "Created" } }, req.version());
}

auto Server::Impl::get_task(Server& server, const Request& req, const std::string& id) -> Response
{
    auto* runner = server._registry.find(id);
    if (!runner)
        return json_response(http::status::not_found, error_body("TaskNotFound", fmt::format("no task {}", id)),
                             req.version());
    auto body = maestro::to_json(runner->record());
    body["attached"] = runner->attached_session().has_value();
    return json_response(http::status::ok, body, req.version());
}

auto Server::Impl::get_events(Server& server, const Request& req, const std::string& id, const detail::Target& target)
    -> Response
{
    auto from = std::uint64_t { 1 };
    if (auto it = target.query.find("from_seq"); it != target.query.end())
    {
        auto const parsed = detail::parse_u64(it->second);
        if (!parsed)
            throw std::invalid_argument("'from_seq' must be a non-negative integer");
        from = *parsed;
    }
    auto& log = server._registry.log();
    if (!log.contains(id))
        return json_response(http::status::not_found, error_body("TaskNotFound", fmt::format("no task {}", id)),
                             req.version());
    auto events = json::array();
    for (auto const& event: log.read(id, from))
        events.push_back(state::to_json(event));
    return json_response(http::status::ok,
                         json {
                             { "task_id", id },
                             { "from_seq", from },
                             { "last_seq", log.last_seq(id) },
                             { "events", std::move(events) },
                         },
                         req.version());
}

auto Server::Impl::post_action(Server& server, const Request& req, const std::string& id) -> Response
{
    auto const body = json::parse(req.body());
    if (!body.is_object() || !body.contains("action") || !body["action"].is_string())
        throw std::invalid_argument("body must be an object with a string 'action'");
    auto* runner = server._registry.find(id);
    if (!runner)
        return json_response(http::status::not_found, error_body("TaskNotFound", fmt::format("no task {}", id)),
                             req.version());

    auto const action = body["action"].get<std::string>();
    auto const invocation = optional_string(body, "invocation_id");
    auto const reason = optional_string(body, "reason").value_or("");
    auto steps = std::vector<std::string> {};
    if (body.contains("steps"))
        steps = body["steps"].get<std::vector<std::string>>();

    if (action == "approve")
        runner->approve(invocation, "user");
    else if (action == "deny")
        runner->deny(invocation, reason, "user");
    else if (action == "plan_approve")
        runner->decide_plan(maestro::PlanDecisionKind::Approved, {}, "");
    else if (action == "plan_modify")
        runner->decide_plan(maestro::PlanDecisionKind::Modified, steps, "");
    else if (action == "plan_reject")
        runner->decide_plan(maestro::PlanDecisionKind::Rejected, {}, reason);
    else if (action == "cancel")
        runner->cancel(reason.empty() ? "cancelled by user" : reason);
    else
        throw std::invalid_argument(fmt::format(
            "'action' must be one of: {}",
            legal_values({ "approve", "deny", "plan_approve", "plan_modify", "plan_reject", "cancel" })));

    return json_response(http::status::ok,
                         json { { "task_id", id }, { "status", maestro::to_string(runner->status()) } },
                         req.version());
}

void Server::Impl::attach(Server& server,
                          tcp::socket& sock,
                          beast::flat_buffer& buffer,
                          const Request& req,
                          const detail::Target& target)
{
    auto ec = boost::system::error_code {};
    auto const reject = [&](http::status status, const json& body) {
        auto res = json_response(status, body, req.version());
        res.keep_alive(false);
        res.prepare_payload();
        http::write(sock, res, ec);
    };

    auto const task_it = target.query.find("task_id");
    if (task_it == target.query.end() || task_it->second.empty())
        return reject(http::status::bad_request, error_body("InvalidRequest", "'task_id' is required"));
    auto const task_id = task_it->second;
    auto last_seq = std::uint64_t { 0 };
    if (auto it = target.query.find("last_seq"); it != target.query.end())
    {
        auto const parsed = detail::parse_u64(it->second);
        if (!parsed)
            return reject(http::status::bad_request,
                          error_body("InvalidRequest", "'last_seq' must be a non-negative integer"));
        last_seq = *parsed;
    }

    maestro::TaskRunner* runner = nullptr;
    try
    {
        runner = server._registry.find(task_id);
    }
    catch (const std::exception& e)
    {
        return reject(http::status::internal_server_error, error_body("InternalError", e.what()));
    }
    if (!runner)
        return reject(http::status::not_found, error_body("TaskNotFound", fmt::format("no task {}", task_id)));
    if (auto const status = runner->status(); maestro::is_terminal(status))
    {
        auto body = error_body("TaskTerminal", fmt::format("task {} is already {}", task_id, maestro::to_string(status)));
        body["status"] = maestro::to_string(status);
        return reject(http::status::conflict, body);
    }
    if (auto const session = runner->attached_session())
        return reject(http::status::conflict,
                      error_body("ExecutorAlreadyAttached",
                                 fmt::format("task {} already has executor session {}", task_id, *session)));

    auto res = http::response<http::empty_body> { http::status::switching_protocols, req.version() };
    res.set(http::field::upgrade, "steward-lines/1");
    res.set(http::field::connection, "Upgrade");
    http::write(sock, res, ec);
    if (ec)
        return;

    auto pending = std::string(static_cast<const char*>(buffer.data().data()), buffer.data().size());
    buffer.consume(buffer.size());

    auto const fd = sock.native_handle();
    auto const session_id = fmt::format("s-{}", server._nextSession++);
    auto link = std::make_shared<SocketLink>(session_id, fd);
    auto const now = Clock::now();
    {
        auto lock = std::lock_guard(server._sessionsMutex);
        server._sessions[session_id] = ExecutorSession {
            .session_id = session_id,
            .task_id = task_id,
            .last_activity = now,
            .last_ping = now,
            .link = link,
        };
    }

    auto const forget = [&] {
        auto lock = std::lock_guard(server._sessionsMutex);
        server._sessions.erase(session_id);
    };

    try
    {
        runner->attach(link, last_seq);
    }
    catch (const maestro::MaestroError& e)
    {
        link->send(protocol::make_message(protocol::MessageKind::Error,
                                          task_id,
                                          json { { "code", maestro::to_string(e.code()) }, { "message", e.what() } }));
        forget();
        link->invalidate();
        return;
    }

    auto const reply_error = [&](std::string_view code, const std::string& message) {
        link->send(protocol::make_message(protocol::MessageKind::Error,
                                          task_id,
                                          json { { "code", code }, { "message", message } }));
    };

    auto const handle_line = [&](std::string_view line) {
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        if (line.empty())
            return;
        auto msg = protocol::Message {};
        try
        {
            msg = protocol::decode_message(line);
        }
        catch (const protocol::ProtocolError& e)
        {
            auto const where = e.field().empty() ? std::string {} : fmt::format(" ({})", e.field());
            reply_error(protocol::to_string(e.code()), e.what() + where);
            return;
        }
        server.touch(session_id);
        if (msg.task_id != task_id)
        {
            reply_error("TaskMismatch",
                        fmt::format("this channel serves task {}, not {}", task_id, msg.task_id));
            return;
        }
        runner->deliver(session_id, msg);
    };

    auto chunk = std::array<char, 65536> {};
    while (true)
    {
        for (auto nl = pending.find('\n'); nl != std::string::npos; nl = pending.find('\n'))
        {
            auto const line = pending.substr(0, nl);
            pending.erase(0, nl + 1);
            handle_line(line);
        }
        auto const n = ::recv(fd, chunk.data(), chunk.size(), 0);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            break;
        pending.append(chunk.data(), static_cast<std::size_t>(n));
    }

    runner->detach(session_id, "connection closed");
    forget();
    link->invalidate();
}

void Server::Impl::stream(Server& server,
                          tcp::socket& sock,
                          const Request& req,
                          const std::string& id,
                          const detail::Target& target)
{
    auto ec = boost::system::error_code {};
    auto& log = server._registry.log();
    if (!log.contains(id))
    {
        auto res = json_response(http::status::not_found, error_body("TaskNotFound", fmt::format("no task {}", id)),
                                 req.version());
        res.keep_alive(false);
        res.prepare_payload();
        http::write(sock, res, ec);
        return;
    }

    auto next = std::uint64_t { 1 };
    if (auto it = target.query.find("from_seq"); it != target.query.end())
        next = std::max<std::uint64_t>(1, detail::parse_u64(it->second).value_or(1));
    if (auto const last_id = detail::parse_u64(std::string(req["Last-Event-ID"])))
        next = *last_id + 1;

    auto const head = std::string("HTTP/1.1 200 OK\r\n"
                                  "Content-Type: text/event-stream\r\n"
                                  "Cache-Control: no-cache\r\n"
                                  "Connection: close\r\n\r\n");
    asio::write(sock, asio::buffer(head), ec);

    auto done = false;
    while (!ec && !done && server._running)
    {
        auto const events = log.read(id, next);
        for (auto const& event: events)
        {
            auto const frame = fmt::format("id: {}\nevent: {}\ndata: {}\n\n",
                                           event.seq,
                                           state::to_string(event.kind),
                                           state::to_json(event).dump());
            asio::write(sock, asio::buffer(frame), ec);
            if (ec)
                break;
            next = event.seq + 1;
            done = state::is_terminal(event.kind);
        }
        if (done || ec)
            break;
        if (events.empty() && log.is_closed(id))
            break;
        log.wait_for_events(id, next - 1, std::chrono::milliseconds(250));
    }
    sock.shutdown(tcp::socket::shutdown_send, ec);
}

void Server::touch(const std::string& session_id)
{
    auto lock = std::lock_guard(_sessionsMutex);
    if (auto it = _sessions.find(session_id); it != _sessions.end())
        it->second.last_activity = Clock::now();
}

auto Server::inactivity_sweep(Clock::time_point now) -> std::vector<std::string>
{
    auto expired = std::vector<ExecutorSession> {};
    {
        auto lock = std::lock_guard(_sessionsMutex);
        for (auto it = _sessions.begin(); it != _sessions.end();)
        {
            if (now - it->second.last_activity > _config.inactivity_timeout)
            {
                expired.push_back(it->second);
                it = _sessions.erase(it);
            }
            else
                ++it;
        }
    }

    auto dropped = std::vector<std::string> {};
    for (auto const& session: expired)
    {
        try
        {
            if (auto* runner = _registry.find(session.task_id))
                runner->detach(session.session_id, "inactivity timeout");
        }
        catch (const std::exception& e)
        {
            std::cerr << fmt::format("sweep of {}: {}\n", session.session_id, e.what());
        }
        session.link->close();
        dropped.push_back(session.session_id);
    }
    return dropped;
}

auto Server::sessions() const -> std::vector<ExecutorSession>
{
    auto lock = std::lock_guard(_sessionsMutex);
    auto result = std::vector<ExecutorSession> {};
    for (auto const& [_, session]: _sessions)
        result.push_back(session);
    return result;
}

void Server::sweep_loop()
{
    while (_running)
    {
        {
            auto lock = std::unique_lock(_sweepMutex);
            _sweepWake.wait_for(lock, _config.sweep_interval, [&] { return !_running; });
        }
        if (!_running)
            return;

        auto const now = Clock::now();
        inactivity_sweep(now);

        auto due = std::vector<std::pair<std::string, std::shared_ptr<maestro::ExecutorLink>>> {};
        {
            auto lock = std::lock_guard(_sessionsMutex);
            for (auto& [id, session]: _sessions)
                if (now - session.last_ping >= _config.ping_interval)
                {
                    session.last_ping = now;
                    due.emplace_back(session.task_id, session.link);
                }
        }
        for (auto const& [task_id, link]: due)
            link->send(protocol::make_message(protocol::MessageKind::Ping, task_id));
    }
}

} // namespace steward::server
