// SPDX-License-Identifier: Apache-2.0
#include <steward/model/turn.hpp>

#include <fmt/format.h>

#include <stdexcept>

namespace steward::model
{

using nlohmann::json;

auto to_string(ThinkingEffort effort) -> std::string_view
{
    switch (effort)
    {
        case ThinkingEffort::Low: return "low";
        case ThinkingEffort::Medium: return "medium";
        case ThinkingEffort::High: return "high";
    }
    return "?";
}

auto parse_thinking_effort(std::string_view text) -> std::optional<ThinkingEffort>
{
    if (text == "low")
        return ThinkingEffort::Low;
    if (text == "medium")
        return ThinkingEffort::Medium;
    if (text == "high")
        return ThinkingEffort::High;
    return std::nullopt;
}

auto to_string(Role role) -> std::string_view
{
    switch (role)
    {
        case Role::User: return "user";
        case Role::Model: return "model";
        case Role::Tool: return "tool";
    }
    return "?";
}

auto to_json(const ModelTurn& turn) -> json
{
    return std::visit(
        [](const auto& t) -> json {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, FinalText>)
                return json { { "type", "final" }, { "text", t.text } };
            else if constexpr (std::is_same_v<T, ToolCall>)
            {
                auto j = protocol::to_json(t);
                j["type"] = "call";
                return j;
            }
            else
                return json { { "type", "plan" }, { "steps", t.steps } };
        },
        turn);
}

auto model_turn_from_json(const json& j) -> ModelTurn
{
    auto const type = j.at("type").get<std::string>();
    if (type == "final")
        return FinalText { j.at("text").get<std::string>() };
    if (type == "call")
        return protocol::tool_call_from_json(j);
    if (type == "plan")
        return PlanProposal { j.at("steps").get<std::vector<std::string>>() };
    throw std::invalid_argument(fmt::format("unknown turn type '{}'", type));
}

auto render_turn(const ModelTurn& turn) -> std::string
{
    return std::visit(
        [](const auto& t) -> std::string {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, FinalText>)
                return fmt::format("final {}", t.text);
            else if constexpr (std::is_same_v<T, ToolCall>)
            {
                auto line = fmt::format("call {} {}", t.tool, t.args.dump(-1, ' ', false, json::error_handler_t::replace));
                if (t.rationale)
                    line += fmt::format(" {}", *t.rationale);
                return line;
            }
            else
                return fmt::format("plan {}", fmt::join(t.steps, "|"));
        },
        turn);
}

auto render_tool_result(const std::string& tool, const protocol::ToolOutcome& outcome) -> std::string
{
    if (!outcome.ok())
        return fmt::format("error ({}): {}", outcome.error_kind, outcome.message);

    auto const& p = outcome.payload;
    if (tool == protocol::tool_names::Read)
        return fmt::format("read {} ({} bytes{}, sha256 {}):\n{}",
                           p.value("path", std::string {}),
                           p.value("size", 0),
                           p.value("truncated", false) ? ", truncated" : "",
                           p.value("hash", std::string {}),
                           p.value("content", std::string {}));
    if (tool == protocol::tool_names::Edit)
        return p.value("summary", std::string {});
    if (tool == protocol::tool_names::Shell)
        return fmt::format("exit_code: {}\nstdout{}:\n{}\nstderr{}:\n{}",
                           p.value("exit_code", 0),
                           p.value("stdout_truncated", false) ? " (truncated)" : "",
                           p.value("stdout", std::string {}),
                           p.value("stderr_truncated", false) ? " (truncated)" : "",
                           p.value("stderr", std::string {}));
    return p.dump(-1, ' ', false, json::error_handler_t::replace);
}

auto render_plan_acceptance(const std::vector<std::string>& steps, bool modified) -> std::string
{
    auto text = std::string(modified ? "The user modified the plan and approved the result. Follow these steps:"
                                     : "The user approved this plan. Follow these steps:");
    for (auto i = std::size_t { 0 }; i < steps.size(); ++i)
        text += fmt::format("\n{}. {}", i + 1, steps[i]);
    return text;
}

auto render_plan_rejection(const std::string& reason) -> std::string
{
    if (reason.empty())
        return "plan rejected. Propose a different plan.";
    return fmt::format("plan rejected: {}. Propose a different plan.", reason);
}

auto to_json(const HistoryEntry& entry) -> json
{
    auto j = json { { "role", to_string(entry.role) }, { "content", entry.content } };
    if (entry.invocation_id)
        j["invocation_id"] = *entry.invocation_id;
    if (entry.is_error)
        j["is_error"] = true;
    return j;
}

auto history_entry_from_json(const json& j) -> HistoryEntry
{
    auto entry = HistoryEntry {};
    auto const role = j.at("role").get<std::string>();
    entry.role = role == "user" ? Role::User : role == "model" ? Role::Model : Role::Tool;
    entry.content = j.at("content").get<std::string>();
    if (auto it = j.find("invocation_id"); it != j.end())
        entry.invocation_id = it->get<std::string>();
    entry.is_error = j.value("is_error", false);
    return entry;
}

} // namespace steward::model
