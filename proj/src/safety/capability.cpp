// SPDX-License-Identifier: Apache-2.0
#include <steward/safety/capability.hpp>

#include <fmt/format.h>

#include <array>
#include <utility>

namespace steward::safety
{

namespace
{

constexpr auto kNames = std::array {
    std::pair { Capability::FsRead, std::string_view("FsRead") },
    std::pair { Capability::FsWrite, std::string_view("FsWrite") },
    std::pair { Capability::FsDelete, std::string_view("FsDelete") },
    std::pair { Capability::GitPushForce, std::string_view("GitPushForce") },
    std::pair { Capability::NetworkWrite, std::string_view("NetworkWrite") },
    std::pair { Capability::Exec, std::string_view("Exec") },
    std::pair { Capability::Unknown, std::string_view("Unknown") },
};

} // namespace

auto to_string(Capability cap) -> std::string_view
{
    for (auto const& [value, name]: kNames)
        if (value == cap)
            return name;
    return "?";
}

auto parse_capability(std::string_view name) -> std::optional<Capability>
{
    for (auto const& [value, text]: kNames)
        if (text == name)
            return value;
    return std::nullopt;
}

auto all_capabilities() -> const std::vector<Capability>&
{
    static const auto caps = [] {
        auto out = std::vector<Capability> {};
        for (auto const& [value, name]: kNames)
            out.push_back(value);
        return out;
    }();
    return caps;
}

auto to_string(const CapabilitySet& caps) -> std::string
{
    auto names = std::vector<std::string_view> {};
    for (auto cap: caps)
        names.push_back(to_string(cap));
    return fmt::format("{{{}}}", fmt::join(names, ", "));
}

} // namespace steward::safety
