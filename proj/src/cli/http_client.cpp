// SPDX-License-Identifier: Apache-2.0
#include <steward/cli/http_client.hpp>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core/flat_buffer.hpp>
#include <boost/beast/http.hpp>
#include <fmt/format.h>

#include <array>
#include <limits>

namespace steward::cli
{

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
using tcp = asio::ip::tcp;

namespace
{

auto connect(asio::io_context& ioc, const ServerUrl& server) -> tcp::socket
{
    auto sock = tcp::socket(ioc);
    auto ec = boost::system::error_code {};
    auto resolver = tcp::resolver(ioc);
    auto const endpoints = resolver.resolve(server.host, std::to_string(server.port), ec);
    if (!ec)
        asio::connect(sock, endpoints, ec);
    if (ec)
        throw ConnectionFailed(fmt::format("cannot reach {}:{}: {}", server.host, server.port, ec.message()));
    return sock;
}

auto make_request(const ServerUrl& server,
                  const std::string& token,
                  http::verb verb,
                  const std::string& target,
                  const std::optional<nlohmann::json>& body) -> http::request<http::string_body>
{
    auto req = http::request<http::string_body> { verb, target, 11 };
    req.set(http::field::host, server.host);
    req.set(http::field::connection, "close");
    if (!token.empty())
        req.set(http::field::authorization, "Bearer " + token);
    if (body)
    {
        req.set(http::field::content_type, "application/json");
        req.body() = body->dump();
    }
    req.prepare_payload();
    return req;
}

} // namespace

auto HttpResponse::json() const -> nlohmann::json
{
    auto parsed = nlohmann::json::parse(body, nullptr, false);
    return parsed.is_discarded() ? nlohmann::json::object() : parsed;
}

HttpClient::HttpClient(ServerUrl server, std::string token): _server(std::move(server)), _token(std::move(token))
{
}

auto HttpClient::get(const std::string& target) -> HttpResponse
{
    return request("GET", target, std::nullopt);
}

auto HttpClient::post(const std::string& target, const nlohmann::json& body) -> HttpResponse
{
    return request("POST", target, std::optional<nlohmann::json>(std::in_place, body));
}

auto HttpClient::request(const std::string& method, const std::string& target, const std::optional<nlohmann::json>& body)
    -> HttpResponse
{
    auto ioc = asio::io_context {};
    auto sock = connect(ioc, _server);
    auto const verb = method == "POST" ? http::verb::post : http::verb::get;
    auto ec = boost::system::error_code {};
    http::write(sock, make_request(_server, _token, verb, target, body), ec);

    auto buffer = beast::flat_buffer {};
    auto res = http::response<http::string_body> {};
    if (!ec)
        http::read(sock, buffer, res, ec);
    if (ec)
        throw ConnectionFailed(fmt::format("{} {} failed: {}", method, target, ec.message()));
    sock.shutdown(tcp::socket::shutdown_both, ec);
    return HttpResponse { .status = static_cast<int>(res.result_int()), .body = res.body() };
}

auto HttpClient::stream(const std::string& target, const std::function<bool(const StreamEvent&)>& on_event)
    -> HttpResponse
{
    auto ioc = asio::io_context {};
    auto sock = connect(ioc, _server);
    auto ec = boost::system::error_code {};
    http::write(sock, make_request(_server, _token, http::verb::get, target, std::nullopt), ec);

    auto buffer = beast::flat_buffer {};
    auto parser = http::response_parser<http::string_body> {};
    parser.body_limit(std::numeric_limits<std::uint64_t>::max());
    if (!ec)
        http::read_header(sock, buffer, parser, ec);
    if (ec)
        throw ConnectionFailed(fmt::format("GET {} failed: {}", target, ec.message()));

    auto const status = static_cast<int>(parser.get().result_int());
    if (status != 200)
    {
        http::read(sock, buffer, parser, ec);
        return HttpResponse { .status = status, .body = parser.get().body() };
    }

    // The event stream has no length; read raw bytes until the server closes.
    auto pending = std::string(static_cast<const char*>(buffer.data().data()), buffer.data().size());
    auto current = StreamEvent {};
    auto chunk = std::array<char, 16384> {};
    while (true)
    {
        for (auto nl = pending.find('\n'); nl != std::string::npos; nl = pending.find('\n'))
        {
            auto line = pending.substr(0, nl);
            pending.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            if (line.empty())
            {
                if (!current.data.empty() || !current.event.empty())
                {
                    if (!on_event(current))
                        return HttpResponse { .status = status, .body = {} };
                }
                current = StreamEvent {};
                continue;
            }
            if (line.front() == ':')
                continue;
            auto const colon = line.find(':');
            auto const field = line.substr(0, colon);
            auto value = colon == std::string::npos ? std::string {} : line.substr(colon + 1);
            if (!value.empty() && value.front() == ' ')
                value.erase(0, 1);
            if (field == "id")
                current.id = value;
            else if (field == "event")
                current.event = value;
            else if (field == "data")
                current.data += current.data.empty() ? value : "\n" + value;
        }
        auto const n = sock.read_some(asio::buffer(chunk), ec);
        if (ec)
            break;
        pending.append(chunk.data(), n);
    }
    return HttpResponse { .status = status, .body = {} };
}

} // namespace steward::cli
