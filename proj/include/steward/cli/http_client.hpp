// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/cli/channel.hpp>

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>

namespace steward::cli
{

struct HttpResponse
{
    int status = 0;
    std::string body;

    /// Parsed body, or an empty object when it is not JSON.
    [[nodiscard]] auto json() const -> nlohmann::json;
};

struct StreamEvent
{
    std::string id;
    std::string event;
    std::string data;
};

/// Minimal blocking client for the task API. One connection per request.
class HttpClient
{
  public:
    HttpClient(ServerUrl server, std::string token);

    /// Throws ConnectionFailed on transport errors; HTTP errors are returned.
    auto get(const std::string& target) -> HttpResponse;
    auto post(const std::string& target, const nlohmann::json& body) -> HttpResponse;

    /// Reads a text/event-stream until the server closes it or `on_event`
    /// returns false. A non-200 reply is returned without calling `on_event`.
    auto stream(const std::string& target, const std::function<bool(const StreamEvent&)>& on_event) -> HttpResponse;

  private:
    auto request(const std::string& method, const std::string& target, const std::optional<nlohmann::json>& body)
        -> HttpResponse;

    ServerUrl _server;
    std::string _token;
};

} // namespace steward::cli
