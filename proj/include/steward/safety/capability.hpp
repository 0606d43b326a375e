// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace steward::safety
{

/// Normalized effect class of a tool call. Policies are written against these,
/// so the same restriction binds every tool that can produce the effect.
enum class Capability
{
    FsRead,
    FsWrite,
    FsDelete,
    GitPushForce,
    NetworkWrite,
    Exec,
    Unknown,
};

using CapabilitySet = std::set<Capability>;

[[nodiscard]] auto to_string(Capability cap) -> std::string_view;
[[nodiscard]] auto parse_capability(std::string_view name) -> std::optional<Capability>;
[[nodiscard]] auto all_capabilities() -> const std::vector<Capability>&;
[[nodiscard]] auto to_string(const CapabilitySet& caps) -> std::string;

} // namespace steward::safety
