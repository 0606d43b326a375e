// SPDX-License-Identifier: Apache-2.0
#include <steward/cli/commands.hpp>
#include <steward/cli/http_client.hpp>

#include <fmt/format.h>

#include <thread>

namespace steward::cli
{

using nlohmann::json;

auto format_log_line(const state::TimelineEvent& event) -> std::string
{
    auto line = fmt::format("{:>4} {:<22} {}", event.seq, state::to_string(event.kind), state::summarize(event));
    while (!line.empty() && line.back() == ' ')
        line.pop_back();
    return line;
}

auto timeline_event_from_json(const json& j) -> state::TimelineEvent
{
    auto const kind_name = j.at("kind").get<std::string>();
    auto const kind = state::parse_event_kind(kind_name);
    if (!kind)
        throw std::invalid_argument(fmt::format("unknown event kind '{}'", kind_name));
    return state::TimelineEvent {
        .task_id = j.at("task_id").get<std::string>(),
        .seq = j.at("seq").get<std::uint64_t>(),
        .timestamp_ms = j.at("timestamp").get<std::int64_t>(),
        .kind = *kind,
        .payload = j.at("payload"),
    };
}

namespace
{

auto describe_error(const HttpResponse& res) -> std::string
{
    auto const body = res.json();
    if (body.contains("message") && body["message"].is_string())
        return fmt::format("{} ({})", body["message"].get<std::string>(), res.status);
    return fmt::format("HTTP {}", res.status);
}

auto create(HttpClient& client, const RunOptions& options) -> std::string
{
    auto body = json {
        { "prompt", options.prompt },
        { "mode", options.mode },
        { "planning", options.plan },
        { "effort", options.effort },
    };
    if (!options.policy.empty())
        body["policy"] = options.policy;
    auto const res = client.post("/tasks", body);
    if (res.status != 201)
        throw std::runtime_error(fmt::format("task creation rejected: {}", describe_error(res)));
    return res.json().at("task_id").get<std::string>();
}

} // namespace

auto cmd_run(const RunOptions& options, Steering& steering, std::ostream& out, std::ostream& err) -> int
{
    auto server = ServerUrl {};
    auto task_id = options.resume;
    try
    {
        server = parse_server_url(options.server);
        if (task_id.empty())
        {
            auto client = HttpClient(server, options.token);
            task_id = create(client, options);
            out << fmt::format("task {}\n", task_id) << std::flush;
        }
    }
    catch (const std::exception& e)
    {
        err << fmt::format("steward: {}\n", e.what());
        return ExitTransport;
    }
    if (options.on_task)
        options.on_task(task_id);

    auto cache = InvocationCache(options.cache_file.value_or(default_cache_file(task_id)));
    auto core = ExecutorCore(task_id,
                             ExecutorOptions {
                                 .working_dir = options.working_dir,
                                 .limits = options.limits,
                                 .progress = &out,
                                 .fault = options.fault,
                             },
                             steering,
                             cache);

    auto failures = 0;
    while (true)
    {
        auto conn = std::unique_ptr<Connection> {};
        try
        {
            conn = attach_executor(server, options.token, task_id, core.last_seq());
        }
        catch (const AttachRejected& e)
        {
            if (e.code() == "TaskTerminal")
                if (auto const status = maestro::parse_task_status(e.task_status()))
                {
                    err << fmt::format("steward: task {} is already {}\n", task_id, e.task_status());
                    return exit_code_for(*status).value_or(ExitTransport);
                }
            // After a crash the server may not have reaped our previous session yet.
            if (e.code() == "ExecutorAlreadyAttached" && ++failures <= options.reconnect_attempts)
            {
                std::this_thread::sleep_for(options.reconnect_delay);
                continue;
            }
            err << fmt::format("steward: {}\n", e.what());
            return ExitTransport;
        }
        catch (const ConnectionFailed& e)
        {
            if (++failures > options.reconnect_attempts)
            {
                err << fmt::format("steward: {}\n", e.what());
                return ExitTransport;
            }
            std::this_thread::sleep_for(options.reconnect_delay);
            continue;
        }

        failures = 0;
        switch (run_session(*conn, core))
        {
            case SessionEnd::Terminal:
            {
                auto const status = *core.terminal();
                if (status == maestro::TaskStatus::Completed)
                    out << core.final_text() << "\n";
                out << fmt::format("task {} {}\n", task_id, maestro::to_string(status)) << std::flush;
                return *exit_code_for(status);
            }
            case SessionEnd::Crashed: err << "steward: executor stopped\n"; return ExitTransport;
            case SessionEnd::Disconnected:
                err << fmt::format("steward: connection to {}:{} lost; reattaching\n", server.host, server.port);
                if (++failures > options.reconnect_attempts)
                    return ExitTransport;
                std::this_thread::sleep_for(options.reconnect_delay);
                break;
        }
    }
}

auto cmd_logs(const LogsOptions& options, std::ostream& out, std::ostream& err) -> int
{
    try
    {
        auto client = HttpClient(parse_server_url(options.server), options.token);
        if (!options.follow)
        {
            auto const res = client.get(fmt::format("/tasks/{}/events?from_seq=1", options.task_id));
            if (res.status != 200)
            {
                err << fmt::format("steward: cannot read task {}: {}\n", options.task_id, describe_error(res));
                return ExitTransport;
            }
            auto const body = res.json();
            for (auto const& event: body.at("events"))
                out << format_log_line(timeline_event_from_json(event)) << "\n";
            return 0;
        }

        auto const res = client.stream(fmt::format("/tasks/{}/stream?from_seq=1", options.task_id),
                                       [&](const StreamEvent& event) {
                                           out << format_log_line(timeline_event_from_json(json::parse(event.data)))
                                               << "\n"
                                               << std::flush;
                                           return true;
                                       });
        if (res.status != 200)
        {
            err << fmt::format("steward: cannot follow task {}: {}\n", options.task_id, describe_error(res));
            return ExitTransport;
        }
        return 0;
    }
    catch (const std::exception& e)
    {
        err << fmt::format("steward: {}\n", e.what());
        return ExitTransport;
    }
}

} // namespace steward::cli
