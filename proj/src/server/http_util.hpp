// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace steward::server::detail
{

struct Target
{
    std::string path;
    std::map<std::string, std::string> query;
};

[[nodiscard]] auto percent_decode(std::string_view text) -> std::string;
[[nodiscard]] auto parse_target(std::string_view target) -> Target;
/// "/tasks/abc/events" -> {"tasks", "abc", "events"}
[[nodiscard]] auto split_path(std::string_view path) -> std::vector<std::string>;
[[nodiscard]] auto parse_u64(std::string_view text) -> std::optional<std::uint64_t>;

} // namespace steward::server::detail
