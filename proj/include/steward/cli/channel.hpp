// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/protocol/message.hpp>

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

namespace steward::cli
{

struct ServerUrl
{
    std::string host = "127.0.0.1";
    std::uint16_t port = 8080;
};

/// Accepts "http://host:port", "host:port" and "host" (port 8080).
/// Throws std::invalid_argument.
[[nodiscard]] auto parse_server_url(const std::string& text) -> ServerUrl;

/// The server could not be reached or the connection broke mid-request.
class ConnectionFailed: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// The server refused the executor attach.
class AttachRejected: public std::runtime_error
{
  public:
    AttachRejected(int http_status, std::string code, std::string status, const std::string& message);

    [[nodiscard]] auto http_status() const noexcept -> int { return _httpStatus; }
    /// Error code from the response, e.g. "TaskNotFound" or "TaskTerminal".
    [[nodiscard]] auto code() const noexcept -> const std::string& { return _code; }
    /// Task status when the task is already terminal.
    [[nodiscard]] auto task_status() const noexcept -> const std::string& { return _status; }

  private:
    int _httpStatus;
    std::string _code;
    std::string _status;
};

/// Executor end of the line channel.
class Connection
{
  public:
    virtual ~Connection() = default;

    /// Thread-safe. False once the connection is gone.
    virtual auto send(const protocol::Message& msg) -> bool = 0;
    /// Blocks for the next frame; nullopt when the connection is closed.
    /// Throws protocol::ProtocolError for a bad frame (the connection stays usable).
    virtual auto receive() -> std::optional<protocol::Message> = 0;
    /// Idempotent; unblocks receive().
    virtual void close() = 0;
};

/// Upgrades GET /attach?task_id=&last_seq= to the line channel.
/// Throws ConnectionFailed or AttachRejected.
[[nodiscard]] auto attach_executor(const ServerUrl& server,
                                   const std::string& token,
                                   const std::string& task_id,
                                   std::uint64_t last_seq) -> std::unique_ptr<Connection>;

} // namespace steward::cli
