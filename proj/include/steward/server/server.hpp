// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/maestro/runner.hpp>
#include <steward/server/registry.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace steward::server
{

struct ServerConfig
{
    std::string bind_address = "127.0.0.1";
    std::uint16_t port = 0; // 0 picks a free port
    /// Required as "Authorization: Bearer <token>" when non-empty.
    std::string token;
    std::chrono::milliseconds inactivity_timeout = std::chrono::minutes(20);
    std::chrono::milliseconds ping_interval = std::chrono::seconds(30);
    std::chrono::milliseconds sweep_interval = std::chrono::seconds(1);
};

/// A live executor connection.
struct ExecutorSession
{
    std::string session_id;
    std::string task_id;
    std::chrono::steady_clock::time_point last_activity;
    std::chrono::steady_clock::time_point last_ping;
    std::shared_ptr<maestro::ExecutorLink> link;
};

/// HTTP API, executor channel and observer stream over one listening socket.
///
///   POST /tasks                      create a task
///   GET  /tasks/{id}                 task summary
///   GET  /tasks/{id}/events?from_seq timeline page
///   POST /tasks/{id}/actions         approve, deny, plan_*, cancel
///   GET  /tasks/{id}/stream          text/event-stream of timeline events
///   GET  /attach?task_id=&last_seq=  upgrade to the executor line channel
class Server
{
  public:
    Server(ServerConfig config, TaskRegistry& registry);
    ~Server();
    Server(const Server&) = delete;
    auto operator=(const Server&) -> Server& = delete;

    void start();
    void stop();
    [[nodiscard]] auto port() const -> std::uint16_t;

    /// Closes sessions idle for longer than the inactivity timeout and parks
    /// their tasks. Returns the dropped session ids.
    auto inactivity_sweep(std::chrono::steady_clock::time_point now) -> std::vector<std::string>;
    [[nodiscard]] auto sessions() const -> std::vector<ExecutorSession>;

    [[nodiscard]] auto registry() -> TaskRegistry& { return _registry; }

  private:
    struct Impl;

    void accept_loop();
    void sweep_loop();
    void serve(int fd);
    void touch(const std::string& session_id);

    ServerConfig _config;
    TaskRegistry& _registry;
    std::unique_ptr<Impl> _impl;

    std::atomic<bool> _running { false };
    std::thread _acceptor;
    std::thread _sweeper;
    std::mutex _sweepMutex;
    std::condition_variable _sweepWake;

    mutable std::mutex _sessionsMutex;
    std::map<std::string, ExecutorSession> _sessions;
    std::atomic<std::uint64_t> _nextSession { 1 };

    std::mutex _connMutex;
    std::condition_variable _connDone;
    std::set<int> _connections;
};

} // namespace steward::server
