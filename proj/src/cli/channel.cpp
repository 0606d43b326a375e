// SPDX-License-Identifier: Apache-2.0
#include <steward/cli/channel.hpp>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core/flat_buffer.hpp>
#include <boost/beast/http.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <array>
#include <atomic>
#include <cerrno>
#include <charconv>
#include <sys/socket.h>

namespace steward::cli
{

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
using tcp = asio::ip::tcp;

auto parse_server_url(const std::string& text) -> ServerUrl
{
    auto rest = std::string_view(text);
    if (rest.starts_with("http://"))
        rest.remove_prefix(7);
    else if (rest.find("://") != std::string_view::npos)
        throw std::invalid_argument(fmt::format("unsupported server URL '{}': only http:// is supported", text));
    while (!rest.empty() && rest.back() == '/')
        rest.remove_suffix(1);
    if (rest.empty())
        throw std::invalid_argument("empty server URL");

    auto url = ServerUrl {};
    auto const colon = rest.rfind(':');
    if (colon == std::string_view::npos)
    {
        url.host = std::string(rest);
        return url;
    }
    url.host = std::string(rest.substr(0, colon));
    auto const port_text = rest.substr(colon + 1);
    auto port = unsigned {};
    auto const [end, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc {} || end != port_text.data() + port_text.size() || port == 0 || port > 65535
        || url.host.empty())
        throw std::invalid_argument(fmt::format("bad server URL '{}'", text));
    url.port = static_cast<std::uint16_t>(port);
    return url;
}

AttachRejected::AttachRejected(int http_status, std::string code, std::string status, const std::string& message):
    std::runtime_error(message), _httpStatus(http_status), _code(std::move(code)), _status(std::move(status))
{
}

namespace
{

class TcpConnection final: public Connection
{
  public:
    TcpConnection(std::unique_ptr<asio::io_context> ioc, tcp::socket sock, std::string pending):
        _ioc(std::move(ioc)), _sock(std::move(sock)), _pending(std::move(pending))
    {
    }

    ~TcpConnection() override { close(); }

    auto send(const protocol::Message& msg) -> bool override
    {
        auto const data = protocol::encode_message(msg);
        auto lock = std::lock_guard(_sendMutex);
        if (_closed)
            return false;
        auto offset = std::size_t { 0 };
        while (offset < data.size())
        {
            auto const n = ::send(_sock.native_handle(), data.data() + offset, data.size() - offset, MSG_NOSIGNAL);
            if (n < 0 && errno == EINTR)
                continue;
            if (n <= 0)
                return false;
            offset += static_cast<std::size_t>(n);
        }
        return true;
    }

    auto receive() -> std::optional<protocol::Message> override
    {
        auto chunk = std::array<char, 65536> {};
        while (true)
        {
            if (auto const nl = _pending.find('\n'); nl != std::string::npos)
            {
                auto line = _pending.substr(0, nl);
                _pending.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r')
                    line.pop_back();
                if (line.empty())
                    continue;
                return protocol::decode_message(line);
            }
            auto const n = ::recv(_sock.native_handle(), chunk.data(), chunk.size(), 0);
            if (n < 0 && errno == EINTR)
                continue;
            if (n <= 0)
                return std::nullopt;
            _pending.append(chunk.data(), static_cast<std::size_t>(n));
        }
    }

    void close() override
    {
        auto lock = std::lock_guard(_sendMutex);
        if (_closed)
            return;
        _closed = true;
        ::shutdown(_sock.native_handle(), SHUT_RDWR);
    }

  private:
    std::unique_ptr<asio::io_context> _ioc;
    tcp::socket _sock;
    std::string _pending;
    std::mutex _sendMutex;
    bool _closed = false;
};

} // namespace

auto attach_executor(const ServerUrl& server, const std::string& token, const std::string& task_id, std::uint64_t last_seq)
    -> std::unique_ptr<Connection>
{
    auto ioc = std::make_unique<asio::io_context>();
    auto sock = tcp::socket(*ioc);
    auto ec = boost::system::error_code {};
    auto resolver = tcp::resolver(*ioc);
    auto const endpoints = resolver.resolve(server.host, std::to_string(server.port), ec);
    if (!ec)
        asio::connect(sock, endpoints, ec);
    if (ec)
        throw ConnectionFailed(fmt::format("cannot reach {}:{}: {}", server.host, server.port, ec.message()));

    auto req = http::request<http::empty_body> { http::verb::get,
                                                 fmt::format("/attach?task_id={}&last_seq={}", task_id, last_seq),
                                                 11 };
    req.set(http::field::host, server.host);
    req.set(http::field::upgrade, "steward-lines/1");
    req.set(http::field::connection, "Upgrade");
    if (!token.empty())
        req.set(http::field::authorization, "Bearer " + token);
    http::write(sock, req, ec);

    auto buffer = beast::flat_buffer {};
    auto res = http::response<http::string_body> {};
    if (!ec)
        http::read(sock, buffer, res, ec);
    if (ec)
        throw ConnectionFailed(fmt::format("attach to task {} failed: {}", task_id, ec.message()));

    if (res.result() != http::status::switching_protocols)
    {
        auto const body = nlohmann::json::parse(res.body(), nullptr, false);
        auto const code = body.is_object() ? body.value("error", std::string {}) : std::string {};
        auto const status = body.is_object() ? body.value("status", std::string {}) : std::string {};
        auto const message = body.is_object() ? body.value("message", res.body()) : res.body();
        throw AttachRejected(static_cast<int>(res.result_int()), code, status,
                             fmt::format("attach rejected ({}): {}", res.result_int(), message));
    }

    auto pending = std::string(static_cast<const char*>(buffer.data().data()), buffer.data().size());
    return std::make_unique<TcpConnection>(std::move(ioc), std::move(sock), std::move(pending));
}

} // namespace steward::cli
