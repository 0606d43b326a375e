// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/protocol/manifest.hpp>
#include <steward/safety/capability.hpp>

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace steward::safety
{

/// Ordered by strictness; evaluation takes the maximum over all matches.
enum class Rule
{
    Allow,
    RequireApproval,
    Deny,
};

[[nodiscard]] auto to_string(Rule rule) -> std::string_view;
[[nodiscard]] auto parse_rule(std::string_view text) -> std::optional<Rule>;

enum class ExecutionMode
{
    Approval,
    Autonomous,
};

[[nodiscard]] auto to_string(ExecutionMode mode) -> std::string_view;
[[nodiscard]] auto parse_execution_mode(std::string_view text) -> std::optional<ExecutionMode>;

struct PolicyConfig
{
    std::map<std::string, Rule> tool_rules;
    std::map<Capability, Rule> capability_rules;
    std::vector<std::string> command_blocklist; // glob patterns, always deny
    Rule unknown_command_rule = Rule::RequireApproval;

    friend auto operator==(const PolicyConfig&, const PolicyConfig&) -> bool = default;
};

struct MatchedRule
{
    std::string source; // "tool.shell", "capability.FsDelete", "block git push*", "unknown_command", "mode: approval"
    Rule rule = Rule::Allow;
    std::string detail; // what matched, e.g. the offending segment

    friend auto operator==(const MatchedRule&, const MatchedRule&) -> bool = default;
};

struct PolicyDecision
{
    Rule verdict = Rule::Allow;
    CapabilitySet capabilities;
    std::vector<MatchedRule> matched;

    /// One line per matched rule, for approval prompts and the timeline.
    [[nodiscard]] auto audit() const -> std::vector<std::string>;
    /// Capability or pattern that produced a Deny, for the model-facing message.
    [[nodiscard]] auto deny_reason() const -> std::string;
};

/// Throws std::invalid_argument for tools that are not in the manifest.
[[nodiscard]] auto classify_tool_call(const protocol::ToolCall& call) -> CapabilitySet;

/// Total: never throws. Unknown tools and unparseable commands are handled
/// through the unknown_command rule.
[[nodiscard]] auto evaluate(const PolicyConfig& policy,
                            const protocol::ToolCall& call,
                            ExecutionMode mode,
                            const protocol::ToolManifest& manifest = protocol::default_manifest()) -> PolicyDecision;

class PolicyError: public std::runtime_error
{
  public:
    enum class Code
    {
        ParseError,
        UnknownRuleValue,
    };

    PolicyError(Code code, int line, const std::string& message);

    [[nodiscard]] auto code() const noexcept -> Code { return _code; }
    [[nodiscard]] auto line() const noexcept -> int { return _line; }

  private:
    Code _code;
    int _line;
};

[[nodiscard]] auto parse_policy(std::string_view text) -> PolicyConfig;
[[nodiscard]] auto load_policy(const std::filesystem::path& path) -> PolicyConfig;
[[nodiscard]] auto format_policy(const PolicyConfig& policy) -> std::string;

struct GapWarning
{
    Capability capability;
    std::string denied_tool;
    std::string message;
};

/// Reports capabilities denied through one tool but still reachable through
/// the shell under the same policy.
[[nodiscard]] auto lint_policy(const PolicyConfig& policy) -> std::vector<GapWarning>;

/// glob(7)-style match: '*', '?', and bracket expressions; '/' is not special.
[[nodiscard]] auto glob_match(std::string_view pattern, std::string_view text) -> bool;

} // namespace steward::safety
