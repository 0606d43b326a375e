// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <steward/cli/channel.hpp>
#include <steward/cli/commands.hpp>
#include <steward/cli/executor.hpp>
#include <steward/cli/http_client.hpp>
#include <steward/cli/steering.hpp>

#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>
#include <thread>

using namespace steward;
using namespace steward::cli;
using namespace steward::testing;
using state::EventKind;
using nlohmann::json;
using namespace std::chrono_literals;

namespace
{

auto fixture_for(std::string_view script_text, FixtureOptions options = {}) -> std::unique_ptr<ServerFixture>
{
    options.script = model::parse_script(script_text);
    return std::make_unique<ServerFixture>(std::move(options));
}

auto replace_all(std::string text, const std::string& from, const std::string& to) -> std::string
{
    for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size()))
        text.replace(pos, from.size(), to);
    return text;
}

constexpr auto GoldenScript = "call read {\"path\":\"a.txt\"}\n"
                              "call edit {\"file_name\":\"a.txt\",\"old_string\":\"world\",\"new_string\":\"steward\"}\n"
                              "call shell {\"command\":\"cat a.txt\"}\n"
                              "match=hello steward ; final greeting updated\n";

/// Posts a cancel from inside the approval prompt, then approves.
class CancellingSteering final: public Steering
{
  public:
    explicit CancellingSteering(std::string url): _url(std::move(url)) {}

    auto approve(const protocol::Message& request) -> ApprovalAnswer override
    {
        auto http = HttpClient(parse_server_url(_url), "");
        status = http.post("/tasks/" + request.task_id + "/actions", { { "action", "cancel" } }).status;
        return { .approve = true, .reason = {} };
    }
    auto plan(const std::vector<std::string>&) -> PlanAnswer override { return {}; }

    int status = 0;

  private:
    std::string _url;
};

} // namespace

TEST_CASE("server urls")
{
    auto u = parse_server_url("http://example.org:9000");
    CHECK(u.host == "example.org");
    CHECK(u.port == 9000);
    u = parse_server_url("localhost:81");
    CHECK(u.host == "localhost");
    CHECK(u.port == 81);
    u = parse_server_url("steward.internal");
    CHECK(u.port == 8080);
    CHECK_THROWS_AS(parse_server_url("https://x:1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_server_url("x:99999"), std::invalid_argument);
    CHECK_THROWS_AS(parse_server_url("x:"), std::invalid_argument);
}

TEST_CASE("exit codes")
{
    CHECK(exit_code_for(maestro::TaskStatus::Completed) == 0);
    CHECK(exit_code_for(maestro::TaskStatus::Failed) == 1);
    CHECK(exit_code_for(maestro::TaskStatus::Cancelled) == 2);
    CHECK_FALSE(exit_code_for(maestro::TaskStatus::AwaitingModel));
    CHECK(ExitTransport == 3);
}

TEST_CASE("plan editor commands")
{
    auto steps = std::vector<std::string> { "one", "two", "three" };
    CHECK(edit_plan(steps, "d 2"));
    CHECK(steps == std::vector<std::string> { "one", "three" });
    CHECK(edit_plan(steps, "e 1 first step"));
    CHECK(edit_plan(steps, "i 2 middle"));
    CHECK(edit_plan(steps, "i 4 end"));
    CHECK(edit_plan(steps, "a  appended "));
    CHECK(steps == std::vector<std::string> { "first step", "middle", "three", "end", "appended" });

    auto const before = steps;
    for (auto const* bad: { "d 0", "d 6", "d x", "d 1 extra", "e 1", "e 9 text", "i 7 text", "a", "x 1", "", "d" })
    {
        INFO(bad);
        CHECK_FALSE(edit_plan(steps, bad));
        CHECK(steps == before);
    }
}

TEST_CASE("approval rendering shows the exact command and the matched rules")
{
    auto const request = protocol::make_message(
        protocol::MessageKind::ApprovalRequest,
        "t-1",
        { { "tool", "shell" },
          { "args", { { "command", "rm -rf build " } } },
          { "audit", { "capability.FsDelete = require_approval [rm -rf build]" } },
          { "rationale", "clean up" } },
        "inv-4");
    CHECK(render_approval(request)
          == "Approval required: shell (invocation inv-4)\n"
             "  command (13 bytes):\n"
             "rm -rf build \n"
             "  rationale: clean up\n"
             "  policy:\n"
             "    capability.FsDelete = require_approval [rm -rf build]\n");

    auto const edit = protocol::make_message(
        protocol::MessageKind::ApprovalRequest,
        "t-1",
        { { "tool", "edit" },
          { "args", { { "file_name", "a.txt" }, { "old_string", "x\n" }, { "new_string", "" } } },
          { "audit", json::array() } },
        "inv-1");
    CHECK(render_approval(edit)
          == "Approval required: edit (invocation inv-1)\n"
             "  file_name: a.txt\n"
             "  old_string (2 bytes):\nx\n\n"
             "  new_string (0 bytes):\n\n"
             "  policy:\n");
    CHECK(render_plan({ "a", "b" }) == "Proposed plan:\n  1. a\n  2. b\n");
}

TEST_CASE("terminal steering")
{
    auto const request = protocol::make_message(protocol::MessageKind::ApprovalRequest, "t-1",
                                                { { "tool", "read" }, { "args", { { "path", "a" } } },
                                                  { "audit", json::array() } },
                                                "inv-1");
    SECTION("non-interactive denies and rejects without reading")
    {
        auto in = std::istringstream("y\na\n");
        auto out = std::ostringstream {};
        auto steering = TerminalSteering(in, out, false);
        auto const a = steering.approve(request);
        CHECK_FALSE(a.approve);
        CHECK(a.reason == NonInteractiveReason);
        auto const p = steering.plan({ "x" });
        CHECK(p.decision == "rejected");
        CHECK(p.reason == NonInteractiveReason);
        auto line = std::string {};
        CHECK(std::getline(in, line));
        CHECK(line == "y");
        CHECK(out.str().find("denied: non-interactive session") != std::string::npos);
    }
    SECTION("interactive answers")
    {
        auto in = std::istringstream("yes\nn too risky\nno\n");
        auto out = std::ostringstream {};
        auto steering = TerminalSteering(in, out, true);
        CHECK(steering.approve(request).approve);
        auto const denied = steering.approve(request);
        CHECK_FALSE(denied.approve);
        CHECK(denied.reason == "too risky");
        CHECK(steering.approve(request).reason == "denied by user");
        CHECK(steering.approve(request).reason == "input closed");
    }
    SECTION("interactive plan modification")
    {
        auto in = std::istringstream("m\nd 2\nbogus\ne 1 read a.txt first\na run tests\ndone\n");
        auto out = std::ostringstream {};
        auto steering = TerminalSteering(in, out, true);
        auto const p = steering.plan({ "read", "delete stuff", "edit" });
        CHECK(p.decision == "modified");
        CHECK(p.steps == std::vector<std::string> { "read a.txt first", "edit", "run tests" });
        CHECK(out.str().find("not understood") != std::string::npos);
    }
    SECTION("emptying a plan asks again")
    {
        auto in = std::istringstream("m\nd 1\ndone\nr not like this\n");
        auto out = std::ostringstream {};
        auto steering = TerminalSteering(in, out, true);
        auto const p = steering.plan({ "only" });
        CHECK(p.decision == "rejected");
        CHECK(p.reason == "not like this");
        CHECK(out.str().find("a plan needs at least one step") != std::string::npos);
    }
}

TEST_CASE("the invocation cache survives restarts and torn lines")
{
    auto dir = TempDir {};
    auto const file = dir / "cache" / "t-1.invocations";
    auto const result = protocol::make_tool_result("t-1", "inv-1", "read",
                                                   protocol::ToolOutcome::success({ { "content", "x" } }));
    {
        auto cache = InvocationCache(file);
        CHECK(cache.size() == 0);
        cache.store(result);
        cache.store(protocol::make_tool_result("t-1", "inv-2", "shell", protocol::ToolOutcome::failure("TimedOut", "slow")));
    }
    {
        auto out = std::ofstream(file, std::ios::app);
        out << R"({"body":{"payload":{},"status":"ok","tool":"read"},"invocation_id":"inv-3","kin)";
    }
    auto const cache = InvocationCache(file);
    CHECK(cache.size() == 2);
    CHECK(cache.find("inv-1") == result);
    CHECK(cache.find("inv-2")->body.at("error_kind") == "TimedOut");
    CHECK_FALSE(cache.find("inv-3"));
    CHECK(InvocationCache().size() == 0);

    ::setenv("STEWARD_CACHE_DIR", "/var/tmp/sc", 1);
    CHECK(default_cache_file("t-9") == fs::path("/var/tmp/sc/t-9.invocations"));
}

TEST_CASE("the executor answers a re-dispatch from its cache")
{
    auto dir = TempDir {};
    write_file(dir / "log.txt", "");
    auto cache = InvocationCache(dir / "inv");
    auto steering = ScriptedSteering({}, {});
    auto core = ExecutorCore("t-1", ExecutorOptions { .working_dir = dir.path() }, steering, cache);
    auto const dispatch = protocol::make_tool_dispatch(
        "t-1", "inv-1", protocol::ToolCall { .tool = "shell", .args = { { "command", "echo x >> log.txt" } } }, {});
    auto reaction = core.handle(dispatch);
    REQUIRE(reaction.replies.size() == 1);
    CHECK(core.executed() == 1);

    auto restarted = InvocationCache(dir / "inv");
    auto again = ExecutorCore("t-1", ExecutorOptions { .working_dir = dir.path() }, steering, restarted);
    auto redispatch = protocol::make_tool_dispatch("t-1", "inv-1",
                                                   protocol::ToolCall { .tool = "shell",
                                                                        .args = { { "command", "echo x >> log.txt" } } },
                                                   { .redispatch = true });
    auto const second = again.handle(redispatch);
    REQUIRE(second.replies.size() == 1);
    CHECK(second.replies[0] == reaction.replies[0]);
    CHECK(again.executed() == 0);
    CHECK(again.replayed() == 1);
    CHECK(read_file(dir / "log.txt") == "x\n");

    auto crashing = ExecutorCore("t-1",
                                    ExecutorOptions { .working_dir = dir.path(),
                                                      .fault = [](FaultPoint p, const protocol::Message&) {
                                                          return p == FaultPoint::Executed;
                                                      } },
                                    steering, restarted);
    auto const dispatch2 = protocol::make_tool_dispatch(
        "t-1", "inv-2", protocol::ToolCall { .tool = "shell", .args = { { "command", "echo y >> log.txt" } } }, {});
    auto const r = crashing.handle(dispatch2);
    CHECK(r.crash);
    CHECK(r.replies.empty());
    CHECK(restarted.find("inv-2"));
    CHECK(read_file(dir / "log.txt") == "x\ny\n");
}

TEST_CASE("run: a full autonomous session")
{
    auto dir = TempDir {};
    write_file(dir / "a.txt", "hello world\n");
    auto f = fixture_for(GoldenScript);
    auto steering = ScriptedSteering({}, {});
    auto const run = run_cli(*f, RunOptions { .prompt = "make it friendly", .mode = "autonomous", .working_dir = dir.path() },
                             steering);
    CHECK(run.exit_code == 0);
    CHECK(run.out.starts_with("task " + run.task_id + "\n"));
    CHECK(run.out.find("greeting updated\ntask " + run.task_id + " Completed\n") != std::string::npos);
    CHECK(read_file(dir / "a.txt") == "hello steward\n");
    CHECK(steering.transcript().empty());

    auto const kinds = kind_names(f->events(run.task_id));
    auto const expected = [] {
        auto in = std::ifstream(fs::path(STEWARD_FIXTURE_DIR) / "golden_timeline.txt");
        auto out = std::vector<std::string> {};
        for (auto line = std::string {}; std::getline(in, line);)
            if (!line.empty())
                out.push_back(line);
        return out;
    }();
    REQUIRE_FALSE(expected.empty());
    CHECK(kinds == expected);

    auto out = std::ostringstream {};
    auto err = std::ostringstream {};
    REQUIRE(cmd_logs(LogsOptions { .task_id = run.task_id, .server = f->url() }, out, err) == 0);
    auto const os = f->runner(run.task_id).record().bootstrap->os_name;
    auto const logs = replace_all(replace_all(out.str(), dir.path().string(), "<wd>"), " " + os + " ", " <os> ");
    CHECK(logs == read_file(fs::path(STEWARD_FIXTURE_DIR) / "golden_logs.txt"));

    auto followed = std::ostringstream {};
    REQUIRE(cmd_logs(LogsOptions { .task_id = run.task_id, .follow = true, .server = f->url() }, followed, err) == 0);
    CHECK(followed.str() == out.str());
}

TEST_CASE("run: approval prompt for a destructive command")
{
    auto dir = TempDir {};
    auto f = fixture_for("call shell {\"command\":\"rm -rf build\"}\nmatch=denied by user ; final left it alone\n");
    auto steering = ScriptedSteering({ ApprovalAnswer { .approve = false, .reason = "keep build" } }, {});
    auto const run = run_cli(*f, RunOptions { .prompt = "clean", .working_dir = dir.path() }, steering);
    CHECK(run.exit_code == 0);
    REQUIRE(steering.transcript().size() == 1);
    auto const shown = steering.transcript()[0];
    CHECK(shown.starts_with("Approval required: shell (invocation inv-1)\n  command (12 bytes):\nrm -rf build\n"));
    CHECK(shown.ends_with("  policy:\n    mode: approval = require_approval [capabilities {FsDelete}]\n"));

    auto const events = f->events(run.task_id);
    auto const denied = events[*index_of(events, EventKind::ApprovalDenied, "inv-1")];
    CHECK(denied.payload.at("reason") == "keep build");
    CHECK(denied.payload.at("source") == "executor");
    CHECK(f->payloads(run.task_id).back().history.back().content == "denied by user: keep build");
}

TEST_CASE("run: non-interactive sessions deny on the record")
{
    auto dir = TempDir {};
    auto f = fixture_for("call edit {\"file_name\":\"a.txt\",\"old_string\":\"a\",\"new_string\":\"b\"}\n"
                         "match=non-interactive session ; final gave up\n");
    auto in = std::istringstream {};
    auto shown = std::ostringstream {};
    auto steering = TerminalSteering(in, shown, false);
    auto const run = run_cli(*f, RunOptions { .prompt = "edit", .working_dir = dir.path() }, steering);
    CHECK(run.exit_code == 0);
    auto const events = f->events(run.task_id);
    REQUIRE(index_of(events, EventKind::ApprovalDenied, "inv-1"));
    CHECK(events[*index_of(events, EventKind::ApprovalDenied, "inv-1")].payload.at("reason") == NonInteractiveReason);
    CHECK(count_kind(events, EventKind::ToolDispatched) == 0);
}

TEST_CASE("run: planning with a modified plan")
{
    auto dir = TempDir {};
    write_file(dir / "a.txt", "x\n");
    auto f = fixture_for("plan read a.txt|delete a.txt\n"
                         "match=only read ; call read {\"path\":\"a.txt\"}\n"
                         "final read it\n");
    auto steering = ScriptedSteering({}, { PlanAnswer { .decision = "modified", .steps = { "only read a.txt" } } });
    auto const run = run_cli(*f, RunOptions { .prompt = "look", .mode = "autonomous", .plan = true, .working_dir = dir.path() },
                             steering);
    CHECK(run.exit_code == 0);
    auto const events = f->events(run.task_id);
    auto const modified = *index_of(events, EventKind::PlanModified);
    CHECK(events[modified].payload.at("steps") == json { "only read a.txt" });
    CHECK(*index_of(events, EventKind::ToolDispatched) > modified);
    CHECK(steering.transcript()[0] == "Proposed plan:\n  1. read a.txt\n  2. delete a.txt\n");
}

TEST_CASE("run: failed and cancelled tasks map to exit codes")
{
    auto dir = TempDir {};
    SECTION("the model runs out of turns")
    {
        auto f = fixture_for("call read {\"path\":\"missing\"}\n");
        auto steering = ScriptedSteering({}, {});
        auto const run = run_cli(*f, RunOptions { .prompt = "x", .mode = "autonomous", .working_dir = dir.path() }, steering);
        CHECK(run.exit_code == ExitFailed);
        CHECK(run.out.find(" Failed\n") != std::string::npos);
        CHECK(f->runner(run.task_id).record().failure_reason == "DriverUnavailable");
    }
    SECTION("the user cancels during an approval")
    {
        auto f = fixture_for("call shell {\"command\":\"echo hi\"}\nfinal done\n");
        auto steering = CancellingSteering(f->url());
        auto const run = run_cli(*f, RunOptions { .prompt = "x", .working_dir = dir.path() }, steering);
        CHECK(steering.status == 200);
        CHECK(run.exit_code == ExitCancelled);
        CHECK(count_kind(f->events(run.task_id), EventKind::ToolDispatched) == 0);
    }
}

TEST_CASE("run: resuming a finished task reports its outcome")
{
    auto dir = TempDir {};
    auto f = fixture_for("final done\n");
    auto steering = ScriptedSteering({}, {});
    auto const first = run_cli(*f, RunOptions { .prompt = "x", .mode = "autonomous", .working_dir = dir.path() }, steering);
    REQUIRE(first.exit_code == 0);
    auto const again = run_cli(*f, RunOptions { .resume = first.task_id, .working_dir = dir.path() }, steering);
    CHECK(again.exit_code == 0);
    CHECK(again.err == "steward: task " + first.task_id + " is already Completed\n");

    auto const unknown = run_cli(*f, RunOptions { .resume = "t-0000000000000000" }, steering);
    CHECK(unknown.exit_code == ExitTransport);
    CHECK(unknown.err.find("TaskNotFound") == std::string::npos);
    CHECK(unknown.err.find("404") != std::string::npos);
}

TEST_CASE("run: resume waits out a session the server has not reaped yet")
{
    auto dir = TempDir {};
    auto f = fixture_for("final done\n");
    auto steering = ScriptedSteering({}, {});
    auto const created = HttpClient(parse_server_url(f->url()), "")
                             .post("/tasks", { { "prompt", "x" }, { "mode", "autonomous" } })
                             .json();
    auto const task_id = created.at("task_id").get<std::string>();
    auto holder = attach_executor(parse_server_url(f->url()), "", task_id, 0);

    SECTION("the old session goes away")
    {
        auto closer = std::thread([&] {
            std::this_thread::sleep_for(300ms);
            holder->close();
        });
        auto const run = run_cli(*f,
                                 RunOptions { .resume = task_id,
                                              .working_dir = dir.path(),
                                              .reconnect_attempts = 10,
                                              .reconnect_delay = 100ms },
                                 steering);
        closer.join();
        CHECK(run.exit_code == 0);
    }
    SECTION("another executor keeps the task")
    {
        auto const run = run_cli(*f,
                                 RunOptions { .resume = task_id,
                                              .working_dir = dir.path(),
                                              .reconnect_attempts = 2,
                                              .reconnect_delay = 50ms },
                                 steering);
        CHECK(run.exit_code == ExitTransport);
        CHECK(run.err.find("attach rejected (409)") != std::string::npos);
    }
}

TEST_CASE("run and logs: transport failures")
{
    auto steering = ScriptedSteering({}, {});
    auto out = std::ostringstream {};
    auto err = std::ostringstream {};
    CHECK(cmd_run(RunOptions { .prompt = "x", .server = "127.0.0.1:1" }, steering, out, err) == ExitTransport);
    CHECK(err.str().starts_with("steward: "));
    CHECK(cmd_run(RunOptions { .prompt = " ", .server = "bad url:x" }, steering, out, err) == ExitTransport);

    auto f = fixture_for("final done\n");
    err.str("");
    CHECK(cmd_run(RunOptions { .prompt = " ", .server = f->url() }, steering, out, err) == ExitTransport);
    CHECK(err.str().find("task creation rejected") != std::string::npos);
    err.str("");
    CHECK(cmd_logs(LogsOptions { .task_id = "t-0000000000000000", .server = f->url() }, out, err) == ExitTransport);
    CHECK(err.str().find("cannot read task") != std::string::npos);
}

TEST_CASE("log lines")
{
    auto const event = state::TimelineEvent {
        .task_id = "t-1",
        .seq = 7,
        .timestamp_ms = 0,
        .kind = EventKind::ToolResult,
        .payload = { { "invocation_id", "inv-2" },
                     { "tool", "edit" },
                     { "outcome", { { "status", "error" }, { "error_kind", "NoMatch" } } } },
    };
    CHECK(format_log_line(event) == "   7 ToolResult             inv-2 edit error (NoMatch)");
    auto const round = timeline_event_from_json(state::to_json(event));
    CHECK(round == event);
    auto bad = state::to_json(event);
    bad["kind"] = "Nope";
    CHECK_THROWS_AS(timeline_event_from_json(bad), std::invalid_argument);
}
