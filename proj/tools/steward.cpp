// SPDX-License-Identifier: Apache-2.0
#include <steward/cli/commands.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <unistd.h>

namespace
{

auto env_or(const char* name, std::string fallback) -> std::string
{
    auto const* value = std::getenv(name);
    return value && *value ? std::string(value) : std::move(fallback);
}

} // namespace

auto main(int argc, char** argv) -> int
{
    using namespace steward::cli;

    CLI::App app { "steward: run coding tasks against a steward server and execute their tools locally" };
    app.require_subcommand(1);

    auto run = RunOptions {};
    run.server = env_or("STEWARD_SERVER", run.server);
    run.token = env_or("STEWARD_TOKEN", "");
    auto logs = LogsOptions {};
    logs.server = run.server;
    logs.token = run.token;

    auto add_run_flags = [&](CLI::App* cmd) {
        cmd->add_option("--mode", run.mode, "approval or autonomous")
            ->check(CLI::IsMember({ "approval", "autonomous" }))
            ->capture_default_str();
        cmd->add_flag("--plan", run.plan, "Ask the agent for a plan before it uses any tool");
        cmd->add_option("--effort", run.effort, "low, medium or high")
            ->check(CLI::IsMember({ "low", "medium", "high" }))
            ->capture_default_str();
        cmd->add_option("--server", run.server, "Server URL (env STEWARD_SERVER)")->capture_default_str();
        cmd->add_option("--policy", run.policy, "Name of a server-side policy");
    };

    auto* run_cmd = app.add_subcommand("run", "Start a task and execute it here");
    run_cmd->add_option("prompt", run.prompt, "What the agent should do");
    run_cmd->add_option("--resume", run.resume, "Attach to an existing task instead of creating one");
    add_run_flags(run_cmd);

    auto* resume_cmd = app.add_subcommand("resume", "Same as run --resume <task_id>");
    resume_cmd->add_option("task_id", run.resume, "Task to resume")->required();
    add_run_flags(resume_cmd);

    auto* logs_cmd = app.add_subcommand("logs", "Print a task's timeline");
    logs_cmd->add_option("task_id", logs.task_id, "Task id")->required();
    logs_cmd->add_flag("--follow", logs.follow, "Keep printing events until the task ends");
    logs_cmd->add_option("--server", logs.server, "Server URL (env STEWARD_SERVER)")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    if (*logs_cmd)
        return cmd_logs(logs, std::cout, std::cerr);

    if (*run_cmd && run.resume.empty() && run.prompt.empty())
    {
        std::cerr << "steward: run needs a prompt or --resume <task_id>\n";
        return ExitTransport;
    }
    auto steering = TerminalSteering(std::cin, std::cout, ::isatty(STDIN_FILENO) == 1);
    return cmd_run(run, steering, std::cout, std::cerr);
}
