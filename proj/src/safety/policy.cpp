// SPDX-License-Identifier: Apache-2.0
#include <steward/safety/policy.hpp>
#include <steward/safety/shell_classifier.hpp>

#include <fmt/format.h>

#include <fnmatch.h>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace steward::safety
{

namespace tn = protocol::tool_names;

auto to_string(Rule rule) -> std::string_view
{
    switch (rule)
    {
        case Rule::Allow: return "allow";
        case Rule::RequireApproval: return "require_approval";
        case Rule::Deny: return "deny";
    }
    return "?";
}

auto parse_rule(std::string_view text) -> std::optional<Rule>
{
    if (text == "allow")
        return Rule::Allow;
    if (text == "require_approval")
        return Rule::RequireApproval;
    if (text == "deny")
        return Rule::Deny;
    return std::nullopt;
}

auto to_string(ExecutionMode mode) -> std::string_view
{
    return mode == ExecutionMode::Approval ? "approval" : "autonomous";
}

auto parse_execution_mode(std::string_view text) -> std::optional<ExecutionMode>
{
    if (text == "approval")
        return ExecutionMode::Approval;
    if (text == "autonomous")
        return ExecutionMode::Autonomous;
    return std::nullopt;
}

auto PolicyDecision::audit() const -> std::vector<std::string>
{
    auto lines = std::vector<std::string> {};
    for (auto const& m: matched)
    {
        if (m.detail.empty())
            lines.push_back(fmt::format("{} = {}", m.source, to_string(m.rule)));
        else
            lines.push_back(fmt::format("{} = {} [{}]", m.source, to_string(m.rule), m.detail));
    }
    return lines;
}

auto PolicyDecision::deny_reason() const -> std::string
{
    for (auto const& m: matched)
    {
        if (m.rule != Rule::Deny)
            continue;
        if (m.source.starts_with("capability."))
            return fmt::format("{} ({} = deny)", m.source.substr(11), m.source);
        if (m.source.starts_with("tool."))
            return fmt::format("tool {} is disabled ({} = deny)", m.source.substr(5), m.source);
        if (m.source.starts_with("block "))
            return fmt::format("blocked command pattern '{}' matched {}", m.source.substr(6), m.detail);
        return fmt::format("{} = deny", m.source);
    }
    return {};
}

auto classify_tool_call(const protocol::ToolCall& call) -> CapabilitySet
{
    if (call.tool == tn::Read)
        return { Capability::FsRead };
    if (call.tool == tn::Edit)
        return { Capability::FsWrite };
    if (call.tool == tn::Shell)
    {
        auto const it = call.args.find("command");
        if (it == call.args.end() || !it->is_string())
            return { Capability::Exec, Capability::Unknown };
        return classify_shell(it->get_ref<const std::string&>());
    }
    throw std::invalid_argument(fmt::format("unknown tool '{}'", call.tool));
}

auto evaluate(const PolicyConfig& policy,
              const protocol::ToolCall& call,
              ExecutionMode mode,
              const protocol::ToolManifest& manifest) -> PolicyDecision
{
    auto decision = PolicyDecision {};
    auto const* entry = protocol::find_tool(manifest, call.tool);

    auto analysis = std::optional<ShellAnalysis> {};
    if (call.tool == tn::Shell)
    {
        auto const it = call.args.find("command");
        auto const command = it != call.args.end() && it->is_string() ? it->get<std::string>() : std::string {};
        analysis = analyze_shell(command);
        decision.capabilities = analysis->capabilities;
    }
    else if (call.tool == tn::Read || call.tool == tn::Edit)
    {
        decision.capabilities = classify_tool_call(call);
    }
    else
    {
        decision.capabilities = { Capability::Exec, Capability::Unknown };
    }

    if (auto it = policy.tool_rules.find(call.tool); it != policy.tool_rules.end())
        decision.matched.push_back({ fmt::format("tool.{}", call.tool), it->second, {} });

    for (auto cap: decision.capabilities)
    {
        if (auto it = policy.capability_rules.find(cap); it != policy.capability_rules.end())
            decision.matched.push_back({ fmt::format("capability.{}", to_string(cap)), it->second, {} });
    }

    if (analysis)
    {
        for (auto i = std::size_t { 0 }; i < analysis->segments.size(); ++i)
        {
            auto const& segment = analysis->segments[i];
            for (auto const& pattern: policy.command_blocklist)
            {
                if (glob_match(pattern, segment.normalized) || glob_match(pattern, segment.unwrapped))
                    decision.matched.push_back({ fmt::format("block {}", pattern),
                                                 Rule::Deny,
                                                 fmt::format("segment {}: {}", i + 1, segment.normalized) });
            }
        }
    }

    if (decision.capabilities.contains(Capability::Unknown))
    {
        auto detail = std::string {};
        if (!entry)
            detail = fmt::format("unknown tool '{}'", call.tool);
        else if (analysis && !analysis->parsed())
            detail = analysis->diagnostic;
        else if (analysis)
        {
            auto unknown = std::vector<std::string> {};
            for (auto const& segment: analysis->segments)
                if (segment.capabilities.contains(Capability::Unknown))
                    unknown.push_back(segment.normalized);
            detail = fmt::format("unclassified: {}", fmt::join(unknown, " ; "));
        }
        decision.matched.push_back({ "unknown_command", policy.unknown_command_rule, std::move(detail) });
    }

    if (mode == ExecutionMode::Approval && entry && entry->destructive)
        decision.matched.push_back(
            { "mode: approval", Rule::RequireApproval, fmt::format("capabilities {}", to_string(decision.capabilities)) });

    for (auto const& m: decision.matched)
        decision.verdict = std::max(decision.verdict, m.rule);
    return decision;
}

PolicyError::PolicyError(Code code, int line, const std::string& message):
    std::runtime_error(fmt::format("line {}: {}", line, message)), _code(code), _line(line)
{
}

namespace
{

auto trim(std::string_view text) -> std::string_view
{
    auto const first = text.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    auto const last = text.find_last_not_of(" \t\r");
    return text.substr(first, last - first + 1);
}

} // namespace

auto parse_policy(std::string_view text) -> PolicyConfig
{
    using Code = PolicyError::Code;
    auto policy = PolicyConfig {};
    auto unknownSet = false;
    auto lineNo = 0;

    auto stream = std::istringstream(std::string(text));
    auto raw = std::string {};
    while (std::getline(stream, raw))
    {
        ++lineNo;
        auto const line = trim(raw);
        if (line.empty() || line.front() == '#')
            continue;

        if (line.starts_with("block ") || line.starts_with("block\t"))
        {
            auto const pattern = trim(line.substr(6));
            if (pattern.empty())
                throw PolicyError(Code::ParseError, lineNo, "block needs a command pattern");
            policy.command_blocklist.emplace_back(pattern);
            continue;
        }

        auto const eq = line.find('=');
        if (eq == std::string_view::npos)
            throw PolicyError(Code::ParseError, lineNo, fmt::format("expected 'key = value', got '{}'", line));
        auto const key = trim(line.substr(0, eq));
        auto const valueText = trim(line.substr(eq + 1));
        auto const value = parse_rule(valueText);

        auto const requireValue = [&] {
            if (!value)
                throw PolicyError(Code::UnknownRuleValue,
                                  lineNo,
                                  fmt::format("'{}' is not a rule; use allow, require_approval or deny", valueText));
            return *value;
        };

        if (key == "unknown_command")
        {
            if (unknownSet)
                throw PolicyError(Code::ParseError, lineNo, "duplicate key unknown_command");
            policy.unknown_command_rule = requireValue();
            unknownSet = true;
        }
        else if (key.starts_with("tool."))
        {
            auto const tool = std::string(key.substr(5));
            if (!protocol::find_tool(protocol::default_manifest(), tool))
                throw PolicyError(Code::ParseError, lineNo, fmt::format("unknown tool '{}'", tool));
            auto const rule = requireValue();
            if (!policy.tool_rules.emplace(tool, rule).second)
                throw PolicyError(Code::ParseError, lineNo, fmt::format("duplicate key {}", key));
        }
        else if (key.starts_with("capability."))
        {
            auto const cap = parse_capability(key.substr(11));
            if (!cap)
                throw PolicyError(Code::ParseError, lineNo, fmt::format("unknown capability '{}'", key.substr(11)));
            auto const rule = requireValue();
            if (!policy.capability_rules.emplace(*cap, rule).second)
                throw PolicyError(Code::ParseError, lineNo, fmt::format("duplicate key {}", key));
        }
        else
        {
            throw PolicyError(Code::ParseError, lineNo, fmt::format("unknown key '{}'", key));
        }
    }
    return policy;
}

auto load_policy(const std::filesystem::path& path) -> PolicyConfig
{
    auto in = std::ifstream(path);
    if (!in)
        throw std::runtime_error(fmt::format("cannot open policy file {}", path.string()));
    auto buffer = std::ostringstream {};
    buffer << in.rdbuf();
    return parse_policy(buffer.str());
}

auto format_policy(const PolicyConfig& policy) -> std::string
{
    auto out = std::string {};
    for (auto const& [tool, rule]: policy.tool_rules)
        out += fmt::format("tool.{} = {}\n", tool, to_string(rule));
    for (auto const& [cap, rule]: policy.capability_rules)
        out += fmt::format("capability.{} = {}\n", to_string(cap), to_string(rule));
    for (auto const& pattern: policy.command_blocklist)
        out += fmt::format("block {}\n", pattern);
    out += fmt::format("unknown_command = {}\n", to_string(policy.unknown_command_rule));
    return out;
}

auto lint_policy(const PolicyConfig& policy) -> std::vector<GapWarning>
{
    auto warnings = std::vector<GapWarning> {};

    auto const shellDenied = [&] {
        auto it = policy.tool_rules.find(std::string(tn::Shell));
        return it != policy.tool_rules.end() && it->second == Rule::Deny;
    }();
    if (shellDenied)
        return warnings;

    for (auto const& [tool, rule]: policy.tool_rules)
    {
        if (rule != Rule::Deny || tool == tn::Shell)
            continue;
        auto const caps = classify_tool_call(protocol::ToolCall { .tool = tool, .args = {}, .rationale = {} });
        for (auto cap: caps)
        {
            auto it = policy.capability_rules.find(cap);
            if (it != policy.capability_rules.end() && it->second == Rule::Deny)
                continue;
            if (!shell_reachable_capabilities().contains(cap))
                continue;
            warnings.push_back(GapWarning {
                .capability = cap,
                .denied_tool = tool,
                .message = fmt::format("{} reachable via shell although tool.{} = deny; add 'capability.{} = deny' "
                                       "to close the bypass",
                                       to_string(cap),
                                       tool,
                                       to_string(cap)),
            });
        }
    }
    return warnings;
}

auto glob_match(std::string_view pattern, std::string_view text) -> bool
{
    return ::fnmatch(std::string(pattern).c_str(), std::string(text).c_str(), 0) == 0;
}

} // namespace steward::safety
