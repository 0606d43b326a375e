// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/safety/capability.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace steward::safety
{

/// One simple command between chain operators (`;`, `&&`, `||`, `|`, `&`).
struct ShellSegment
{
    /// Unquoted words joined by single spaces, leading VAR=value assignments
    /// dropped and the program reduced to its basename. Blocklist patterns
    /// match against this.
    std::string normalized;
    /// For wrapper commands (sudo, xargs, env, ...) the normalized wrapped
    /// command; otherwise equal to `normalized`.
    std::string unwrapped;
    CapabilitySet capabilities;
};

struct ShellAnalysis
{
    std::vector<ShellSegment> segments;
    CapabilitySet capabilities; // union over segments, never empty
    /// Set when the command could not be tokenized (e.g. unbalanced quotes).
    /// Such commands classify as {Exec, Unknown}.
    std::string diagnostic;

    [[nodiscard]] auto parsed() const noexcept -> bool { return diagnostic.empty(); }
};

/// Static, conservative classification by program name and flags. Never
/// throws; anything it cannot account for becomes {Exec, Unknown}.
[[nodiscard]] auto analyze_shell(std::string_view command) -> ShellAnalysis;

[[nodiscard]] inline auto classify_shell(std::string_view command) -> CapabilitySet
{
    return analyze_shell(command).capabilities;
}

/// Every capability the classification table can produce for some command.
[[nodiscard]] auto shell_reachable_capabilities() -> const CapabilitySet&;

} // namespace steward::safety
