// SPDX-License-Identifier: Apache-2.0
#include <steward/server/server.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <csignal>
#include <fstream>
#include <iostream>

namespace
{

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int)
{
    g_stop = 1;
}

} // namespace

auto main(int argc, char** argv) -> int
{
    using namespace steward;

    CLI::App app { "steward orchestrator server" };
    auto config = server::ServerConfig {};
    auto storage = server::StorageConfig {};
    auto maestro_config = maestro::MaestroConfig {};
    std::string data_dir;
    std::string script_path;
    std::string policy_path;
    std::string policy_dir;
    std::string read_before_edit = "warn";
    double inactivity_seconds = 20 * 60;
    double ping_seconds = 30;
    std::string port_file;

    app.add_option("--bind", config.bind_address, "Address to listen on")->capture_default_str();
    app.add_option("--port", config.port, "TCP port; 0 picks a free one")->capture_default_str();
    app.add_option("--data-dir", data_dir, "Directory for timelines and session snapshots (empty: in memory)");
    app.add_option("--token", config.token, "Bearer token required on every request")->envname("STEWARD_TOKEN");
    app.add_option("--script", script_path, "Scripted model turns")->required()->check(CLI::ExistingFile);
    app.add_option("--policy", policy_path, "Default policy file")->check(CLI::ExistingFile);
    app.add_option("--policy-dir", policy_dir, "Directory of named <name>.policy files")->check(CLI::ExistingDirectory);
    app.add_option("--max-iterations", maestro_config.max_iterations, "Model turns per task")->capture_default_str();
    app.add_option("--read-before-edit", read_before_edit, "warn or enforce")
        ->check(CLI::IsMember({ "warn", "enforce" }))
        ->capture_default_str();
    app.add_option("--inactivity-timeout", inactivity_seconds, "Seconds before an idle executor is dropped")
        ->capture_default_str();
    app.add_option("--ping-interval", ping_seconds, "Seconds between heartbeat pings")->capture_default_str();
    app.add_option("--port-file", port_file, "Write the bound port to this file once listening");

    CLI11_PARSE(app, argc, argv);

    try
    {
        maestro_config.read_before_edit = *maestro::parse_read_before_edit_mode(read_before_edit);
        config.inactivity_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(inactivity_seconds * 1000));
        config.ping_interval = std::chrono::milliseconds(static_cast<std::int64_t>(ping_seconds * 1000));
        storage.data_dir = data_dir;

        auto policy = policy_path.empty() ? safety::PolicyConfig {} : safety::load_policy(policy_path);
        for (auto const& warning: safety::lint_policy(policy))
            std::cerr << fmt::format("policy warning: {}\n", warning.message);

        auto registry = server::TaskRegistry(storage,
                                             maestro_config,
                                             server::scripted_driver_factory(model::load_script(script_path)),
                                             policy,
                                             policy_dir);
        auto srv = server::Server(config, registry);
        srv.start();
        std::cerr << fmt::format("steward-server listening on {}:{}\n", config.bind_address, srv.port());
        if (!port_file.empty())
        {
            auto out = std::ofstream(port_file);
            out << srv.port() << "\n";
        }

        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop)
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        srv.stop();
        registry.shutdown();
    }
    catch (const std::exception& e)
    {
        std::cerr << fmt::format("steward-server: {}\n", e.what());
        return 1;
    }
    return 0;
}
