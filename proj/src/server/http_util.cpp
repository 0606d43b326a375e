// SPDX-License-Identifier: Apache-2.0
#include "http_util.hpp"

#include <charconv>

namespace steward::server::detail
{

namespace
{

auto hex_value(char c) -> int
{
    if (c >= '0' && c <= '9')
        return c - '0';
    if (c >= 'a' && c <= 'f')
        return c - 'a' + 10;
    if (c >= 'A' && c <= 'F')
        return c - 'A' + 10;
    return -1;
}

} // namespace

auto percent_decode(std::string_view text) -> std::string
{
    auto out = std::string {};
    out.reserve(text.size());
    for (auto i = std::size_t { 0 }; i < text.size(); ++i)
    {
        auto const c = text[i];
        if (c == '+')
            out.push_back(' ');
        else if (c == '%' && i + 2 < text.size() && hex_value(text[i + 1]) >= 0 && hex_value(text[i + 2]) >= 0)
        {
            out.push_back(static_cast<char>(hex_value(text[i + 1]) * 16 + hex_value(text[i + 2])));
            i += 2;
        }
        else
            out.push_back(c);
    }
    return out;
}

auto parse_target(std::string_view target) -> Target
{
    auto result = Target {};
    auto const q = target.find('?');
    result.path = percent_decode(target.substr(0, q));
    if (q == std::string_view::npos)
        return result;

    auto rest = target.substr(q + 1);
    while (!rest.empty())
    {
        auto const amp = rest.find('&');
        auto const pair = rest.substr(0, amp);
        auto const eq = pair.find('=');
        auto key = percent_decode(pair.substr(0, eq));
        auto value = eq == std::string_view::npos ? std::string {} : percent_decode(pair.substr(eq + 1));
        if (!key.empty())
            result.query.emplace(std::move(key), std::move(value));
        if (amp == std::string_view::npos)
            break;
        rest.remove_prefix(amp + 1);
    }
    return result;
}

auto split_path(std::string_view path) -> std::vector<std::string>
{
    auto parts = std::vector<std::string> {};
    while (!path.empty())
    {
        auto const slash = path.find('/');
        auto const part = path.substr(0, slash);
        if (!part.empty())
            parts.emplace_back(part);
        if (slash == std::string_view::npos)
            break;
        path.remove_prefix(slash + 1);
    }
    return parts;
}

auto parse_u64(std::string_view text) -> std::optional<std::uint64_t>
{
    auto value = std::uint64_t {};
    auto const [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc {} || end != text.data() + text.size() || text.empty())
        return std::nullopt;
    return value;
}

} // namespace steward::server::detail
