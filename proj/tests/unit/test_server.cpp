// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <steward/cli/http_client.hpp>
#include <steward/cli/steering.hpp>

#include <catch_amalgamated.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <thread>

using namespace steward;
using namespace steward::testing;
using nlohmann::json;
using namespace std::chrono_literals;
using state::EventKind;

namespace
{

auto script(std::string_view text) -> model::Script
{
    return model::parse_script(text);
}

auto client(ServerFixture& f, std::string token = {}) -> cli::HttpClient
{
    return cli::HttpClient(cli::parse_server_url(f.url()), std::move(token));
}

auto create(ServerFixture& f, json body) -> std::string
{
    auto const res = client(f).post("/tasks", body);
    REQUIRE(res.status == 201);
    return res.json().at("task_id").get<std::string>();
}

/// Plain socket speaking the attach handshake, for sending arbitrary bytes.
class RawChannel
{
  public:
    RawChannel(std::uint16_t port, const std::string& task_id)
    {
        _fd = ::socket(AF_INET, SOCK_STREAM, 0);
        auto addr = sockaddr_in {};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        REQUIRE(::connect(_fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
        write("GET /attach?task_id=" + task_id
              + " HTTP/1.1\r\nHost: x\r\nUpgrade: steward-lines/1\r\nConnection: Upgrade\r\n\r\n");
        while (_buffer.find("\r\n\r\n") == std::string::npos)
            REQUIRE(fill());
        auto const end = _buffer.find("\r\n\r\n");
        _head = _buffer.substr(0, end);
        _buffer.erase(0, end + 4);
    }
    ~RawChannel() { ::close(_fd); }

    [[nodiscard]] auto head() const -> const std::string& { return _head; }

    void write(const std::string& bytes)
    {
        REQUIRE(::send(_fd, bytes.data(), bytes.size(), MSG_NOSIGNAL) == static_cast<ssize_t>(bytes.size()));
    }

    /// Next frame, or nullopt when the server closed the channel.
    auto next() -> std::optional<protocol::Message>
    {
        while (_buffer.find('\n') == std::string::npos)
            if (!fill())
                return std::nullopt;
        auto const nl = _buffer.find('\n');
        auto const line = _buffer.substr(0, nl);
        _buffer.erase(0, nl + 1);
        return protocol::decode_message(line);
    }

    auto next_of(protocol::MessageKind kind) -> std::optional<protocol::Message>
    {
        while (auto msg = next())
            if (msg->kind == kind)
                return msg;
        return std::nullopt;
    }

  private:
    auto fill() -> bool
    {
        char chunk[4096];
        auto const n = ::recv(_fd, chunk, sizeof chunk, 0);
        if (n <= 0)
            return false;
        _buffer.append(chunk, static_cast<std::size_t>(n));
        return true;
    }

    int _fd = -1;
    std::string _buffer;
    std::string _head;
};

auto bootstrap_frame(const std::string& task_id, const fs::path& wd) -> std::string
{
    return protocol::encode_message(
        protocol::make_message(protocol::MessageKind::BootstrapResult, task_id, protocol::to_json(fake_bootstrap(wd))));
}

auto attach_error(ServerFixture& f, const std::string& task_id) -> cli::AttachRejected
{
    try
    {
        (void) cli::attach_executor(cli::parse_server_url(f.url()), "", task_id, 0);
    }
    catch (const cli::AttachRejected& e)
    {
        return e;
    }
    FAIL("attach accepted");
    throw std::logic_error("unreachable");
}

} // namespace

TEST_CASE("creating and reading tasks")
{
    auto f = ServerFixture({ .script = script("final done\n") });
    auto http = client(f);

    auto res = http.post("/tasks", { { "prompt", "fix it" }, { "mode", "autonomous" }, { "planning", true },
                                     { "effort", "high" } });
    REQUIRE(res.status == 201);
    auto const id = res.json().at("task_id").get<std::string>();
    CHECK(res.json().at("status") == "Created");

    res = http.get("/tasks/" + id);
    REQUIRE(res.status == 200);
    CHECK(res.json().at("status") == "Created");
    CHECK(res.json().at("planning") == true);
    CHECK(res.json().at("attached") == false);

    res = http.get("/tasks/" + id + "/events");
    REQUIRE(res.status == 200);
    CHECK(res.json().at("last_seq") == 1);
    CHECK(res.json().at("events")[0].at("kind") == "TaskCreated");
    CHECK(res.json().at("events")[0].at("payload").at("effort") == "high");

    res = http.get("/tasks/" + id + "/events?from_seq=2");
    CHECK(res.json().at("events").empty());
    CHECK(http.get("/tasks/" + id + "/events?from_seq=x").status == 400);
}

TEST_CASE("bad requests are refused with a reason")
{
    auto f = ServerFixture({ .script = script("final done\n") });
    auto http = client(f);
    auto const error_of = [&](const json& body) {
        auto const res = http.post("/tasks", body);
        CHECK(res.status == 400);
        return res.json().value("error", std::string {});
    };
    CHECK(error_of({ { "mode", "autonomous" } }) == "InvalidBody");
    CHECK(error_of({ { "prompt", "  " } }) == "EmptyPrompt");
    CHECK(error_of({ { "prompt", "x" }, { "mode", "yolo" } }) == "InvalidBody");
    CHECK(error_of({ { "prompt", "x" }, { "effort", "max" } }) == "InvalidBody");
    CHECK(error_of({ { "prompt", "x" }, { "planning", "yes" } }) == "InvalidBody");
    CHECK(error_of({ { "prompt", "x" }, { "colour", "red" } }) == "InvalidBody");
    CHECK(error_of({ { "prompt", "x" }, { "policy", "nope" } }) == "UnknownPolicy");
    CHECK(error_of({ { "prompt", "x" }, { "policy", "../etc/passwd" } }) == "UnknownPolicy");
    CHECK(f.registry().task_ids().empty());
}

TEST_CASE("unknown tasks and routes are 404")
{
    auto f = ServerFixture({ .script = script("final done\n") });
    auto http = client(f);
    CHECK(http.get("/tasks/t-0000000000000000").status == 404);
    CHECK(http.get("/tasks/t-0000000000000000").json().at("error") == "TaskNotFound");
    CHECK(http.get("/tasks/t-0000000000000000/events").status == 404);
    CHECK(http.post("/tasks/t-0000000000000000/actions", { { "action", "cancel" } }).status == 404);
    CHECK(http.get("/nowhere").status == 404);
    CHECK(http.get("/nowhere").json().at("error") == "NotFound");
}

TEST_CASE("actions outside their state are 409, unknown actions 400")
{
    auto f = ServerFixture({ .script = script("final done\n") });
    auto http = client(f);
    auto const id = create(f, { { "prompt", "x" } });
    auto res = http.post("/tasks/" + id + "/actions", { { "action", "approve" } });
    CHECK(res.status == 409);
    CHECK(res.json().at("error") == "ActionIllegalInState");
    CHECK(http.post("/tasks/" + id + "/actions", { { "action", "explode" } }).status == 400);
    CHECK(http.post("/tasks/" + id + "/actions", json::array()).status == 400);

    res = http.post("/tasks/" + id + "/actions", { { "action", "cancel" } });
    CHECK(res.status == 200);
    CHECK(res.json().at("status") == "Cancelled");
    CHECK(http.post("/tasks/" + id + "/actions", { { "action", "cancel" } }).status == 409);
    CHECK(f.events(id).back().payload.at("reason") == "cancelled by user");
}

TEST_CASE("a token guards every route")
{
    auto f = ServerFixture({ .script = script("final done\n"), .server = { .token = "s3cret" } });
    auto res = client(f).post("/tasks", { { "prompt", "x" } });
    CHECK(res.status == 401);
    CHECK(res.json().at("error") == "Unauthorized");
    CHECK(client(f, "wrong").get("/tasks/t-1").status == 401);
    res = client(f, "s3cret").post("/tasks", { { "prompt", "x" } });
    REQUIRE(res.status == 201);
    auto const id = res.json().at("task_id").get<std::string>();
    CHECK_THROWS_AS(cli::attach_executor(cli::parse_server_url(f.url()), "", id, 0), cli::AttachRejected);
    auto conn = cli::attach_executor(cli::parse_server_url(f.url()), "s3cret", id, 0);
    auto const first = conn->receive();
    REQUIRE(first);
    CHECK(first->kind == protocol::MessageKind::TaskUpdate);
}

TEST_CASE("attach rejections")
{
    auto f = ServerFixture({ .script = script("final done\n") });
    CHECK(attach_error(f, "t-0000000000000000").http_status() == 404);
    CHECK(attach_error(f, "t-0000000000000000").code() == "TaskNotFound");

    auto const id = create(f, { { "prompt", "x" }, { "mode", "autonomous" } });
    auto conn = cli::attach_executor(cli::parse_server_url(f.url()), "", id, 0);
    auto const second = attach_error(f, id);
    CHECK(second.http_status() == 409);
    CHECK(second.code() == "ExecutorAlreadyAttached");

    (void) conn->receive(); // TaskCreated
    auto const request = conn->receive();
    REQUIRE(request);
    REQUIRE(request->kind == protocol::MessageKind::BootstrapRequest);
    conn->send(protocol::make_message(protocol::MessageKind::BootstrapResult, id,
                                      protocol::to_json(fake_bootstrap(fs::current_path()))));
    REQUIRE(f.runner(id).wait_terminal(10s) == maestro::TaskStatus::Completed);
    while (conn->receive())
    {
    }

    auto const late = attach_error(f, id);
    CHECK(late.http_status() == 409);
    CHECK(late.code() == "TaskTerminal");
    CHECK(late.task_status() == "Completed");
}

TEST_CASE("the line channel answers bad frames without dropping")
{
    auto dir = TempDir {};
    auto f = ServerFixture({ .script = script("final done\n") });
    auto const id = create(f, { { "prompt", "x" }, { "mode", "autonomous" } });
    auto raw = RawChannel(f.server().port(), id);
    CHECK(raw.head().starts_with("HTTP/1.1 101"));
    REQUIRE(raw.next_of(protocol::MessageKind::BootstrapRequest));

    raw.write("{not json\n");
    auto reply = raw.next();
    REQUIRE(reply);
    CHECK(reply->kind == protocol::MessageKind::Error);
    CHECK(reply->body.at("code") == "MalformedFrame");

    raw.write(R"({"body":{},"kind":"Teleport","task_id":")" + id + "\"}\n");
    reply = raw.next();
    REQUIRE(reply);
    CHECK(reply->body.at("code") == "UnknownKind");

    raw.write(R"({"body":{"tool":""},"invocation_id":"inv-1","kind":"ToolResult","task_id":")" + id + "\"}\n");
    reply = raw.next();
    REQUIRE(reply);
    CHECK(reply->body.at("code") == "SchemaViolation");

    raw.write(protocol::encode_message(protocol::make_message(protocol::MessageKind::Ping, "t-other")));
    reply = raw.next();
    REQUIRE(reply);
    CHECK(reply->body.at("code") == "TaskMismatch");

    raw.write(protocol::encode_message(protocol::make_message(protocol::MessageKind::Ping, id)));
    reply = raw.next();
    REQUIRE(reply);
    CHECK(reply->kind == protocol::MessageKind::Pong);

    raw.write(bootstrap_frame(id, dir.path()));
    REQUIRE(f.runner(id).wait_terminal(10s) == maestro::TaskStatus::Completed);
    auto last = std::optional<protocol::Message> {};
    while (auto msg = raw.next())
        last = msg;
    REQUIRE(last);
    CHECK(last->body.at("kind") == "TaskCompleted");
}

TEST_CASE("a dropped channel parks the task until the next attach")
{
    auto dir = TempDir {};
    auto f = ServerFixture({ .script = script("call shell {\"command\":\"echo hi\"}\nfinal done\n") });
    auto const id = create(f, { { "prompt", "x" }, { "mode", "approval" } });
    std::uint64_t seen = 0;
    {
        auto raw = RawChannel(f.server().port(), id);
        REQUIRE(raw.next_of(protocol::MessageKind::BootstrapRequest));
        raw.write(bootstrap_frame(id, dir.path()));
        auto const ask = raw.next_of(protocol::MessageKind::ApprovalRequest);
        REQUIRE(ask);
        CHECK(ask->invocation_id == "inv-1");
        seen = f.registry().log().last_seq(id);
    }
    auto const detached = [&] { return !f.runner(id).attached_session(); };
    for (auto i = 0; i < 400 && !detached(); ++i)
        std::this_thread::sleep_for(5ms);
    REQUIRE(detached());
    CHECK(f.runner(id).status() == maestro::TaskStatus::AwaitingApproval);
    CHECK(f.events(id).back().kind == EventKind::ClientDisconnected);
    CHECK(f.events(id).back().payload.at("reason") == "connection closed");

    auto conn = cli::attach_executor(cli::parse_server_url(f.url()), "", id, seen);
    auto msg = conn->receive();
    REQUIRE(msg);
    CHECK(msg->body.at("seq") == seen + 1);
    while (msg && msg->kind != protocol::MessageKind::ApprovalRequest)
        msg = conn->receive();
    REQUIRE(msg);
    CHECK(msg->invocation_id == "inv-1");
}

TEST_CASE("the inactivity sweep drops silent executors")
{
    auto dir = TempDir {};
    auto f = ServerFixture({ .script = script("call shell {\"command\":\"echo hi\"}\nfinal done\n"),
                             .server = { .inactivity_timeout = 1h, .sweep_interval = 1h } });
    auto const id = create(f, { { "prompt", "x" }, { "mode", "approval" } });
    auto raw = RawChannel(f.server().port(), id);
    REQUIRE(raw.next_of(protocol::MessageKind::BootstrapRequest));
    raw.write(bootstrap_frame(id, dir.path()));
    REQUIRE(raw.next_of(protocol::MessageKind::ApprovalRequest));

    auto const now = std::chrono::steady_clock::now();
    CHECK(f.server().inactivity_sweep(now).empty());
    REQUIRE(f.server().sessions().size() == 1);
    auto const session = f.server().sessions()[0].session_id;
    auto const dropped = f.server().inactivity_sweep(now + 2h);
    REQUIRE(dropped == std::vector<std::string> { session });
    CHECK(f.server().sessions().empty());

    CHECK_FALSE(raw.next_of(protocol::MessageKind::Pong));
    auto const events = f.events(id);
    CHECK(events.back().kind == EventKind::ClientDisconnected);
    CHECK(events.back().payload.at("reason") == "inactivity timeout");
    CHECK(f.runner(id).status() == maestro::TaskStatus::AwaitingApproval);
    CHECK(f.registry().sessions().get(id));
}

TEST_CASE("the observer stream delivers the timeline and closes at the end")
{
    auto dir = TempDir {};
    write_file(dir / "a.txt", "one\n");
    auto f = ServerFixture({ .script = script("call read {\"path\":\"a.txt\"}\nfinal done\n") });
    auto steering = cli::ScriptedSteering({}, {});
    auto observed = std::vector<cli::StreamEvent> {};
    auto observer = std::thread {};
    auto const run = run_cli(f,
                             cli::RunOptions { .prompt = "read it",
                                               .mode = "autonomous",
                                               .working_dir = dir.path(),
                                               .on_task =
                                                   [&](const std::string& id) {
                                                       observer = std::thread([&, id] {
                                                           (void) client(f).stream(
                                                               "/tasks/" + id + "/stream",
                                                               [&](const cli::StreamEvent& e) {
                                                                   observed.push_back(e);
                                                                   return true;
                                                               });
                                                       });
                                                   } },
                             steering);
    observer.join();
    REQUIRE(run.exit_code == 0);
    auto const events = f.events(run.task_id);
    REQUIRE(observed.size() == events.size());
    for (auto i = std::size_t { 0 }; i < events.size(); ++i)
    {
        CHECK(observed[i].id == std::to_string(events[i].seq));
        CHECK(observed[i].event == state::to_string(events[i].kind));
        CHECK(json::parse(observed[i].data) == state::to_json(events[i]));
    }

    auto late = std::vector<cli::StreamEvent> {};
    auto const res = client(f).stream("/tasks/" + run.task_id + "/stream?from_seq=3", [&](const cli::StreamEvent& e) {
        late.push_back(e);
        return true;
    });
    CHECK(res.status == 200);
    REQUIRE(late.size() == events.size() - 2);
    CHECK(late.front().id == "3");
    CHECK(client(f).stream("/tasks/t-0000000000000000/stream", [](const cli::StreamEvent&) { return true; }).status
          == 404);
}

TEST_CASE("tasks survive a server restart on the same data directory")
{
    auto data = TempDir {};
    auto dir = TempDir {};
    auto const text = std::string("call shell {\"command\":\"echo hi\"}\nmatch=hi ; final done\n");
    auto id = std::string {};
    {
        auto f = ServerFixture({ .script = script(text), .data_dir = data.path() });
        id = create(f, { { "prompt", "x" }, { "mode", "approval" } });
        auto raw = RawChannel(f.server().port(), id);
        REQUIRE(raw.next_of(protocol::MessageKind::BootstrapRequest));
        raw.write(bootstrap_frame(id, dir.path()));
        REQUIRE(raw.next_of(protocol::MessageKind::ApprovalRequest));
    }
    auto f = ServerFixture({ .script = script(text), .data_dir = data.path() });
    CHECK(f.registry().task_ids() == std::vector<std::string> { id });
    auto res = client(f).get("/tasks/" + id);
    REQUIRE(res.status == 200);
    CHECK(res.json().at("status") == "AwaitingApproval");

    auto steering = cli::ScriptedSteering({ cli::ApprovalAnswer { .approve = true } }, {});
    auto const run = run_cli(f, cli::RunOptions { .resume = id, .working_dir = dir.path() }, steering);
    CHECK(run.exit_code == 0);
    CHECK(f.runner(id).record().final_text == "done");
    CHECK(count_kind(f.events(id), EventKind::ToolResult) == 1);
    REQUIRE_NOTHROW(state::check_timeline(f.events(id)));
}

TEST_CASE("named policies come from the policy directory")
{
    auto policies = TempDir {};
    write_file(policies / "strict.policy", "capability.FsDelete = deny\n");
    auto dir = TempDir {};
    auto f = ServerFixture({ .script = script("call shell {\"command\":\"rm -rf build\"}\nmatch=denied ; final ok\n"),
                             .policy_dir = policies.path() });
    auto steering = cli::ScriptedSteering({}, {});
    auto const run = run_cli(
        f, cli::RunOptions { .prompt = "clean", .mode = "autonomous", .policy = "strict", .working_dir = dir.path() },
        steering);
    REQUIRE(run.exit_code == 0);
    CHECK(count_kind(f.events(run.task_id), EventKind::PolicyDenied) == 1);
    CHECK(count_kind(f.events(run.task_id), EventKind::ToolDispatched) == 0);
    CHECK(f.runner(run.task_id).record().policy_name == "strict");
}
