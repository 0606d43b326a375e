// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/protocol/bodies.hpp>
#include <steward/protocol/manifest.hpp>

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace steward::model
{

enum class ThinkingEffort
{
    Low,
    Medium,
    High,
};

[[nodiscard]] auto to_string(ThinkingEffort effort) -> std::string_view;
[[nodiscard]] auto parse_thinking_effort(std::string_view text) -> std::optional<ThinkingEffort>;

enum class Role
{
    User,
    Model,
    Tool,
};

[[nodiscard]] auto to_string(Role role) -> std::string_view;

struct HistoryEntry
{
    Role role = Role::User;
    std::string content;
    /// Set on model tool-call turns and on the tool turns answering them.
    std::optional<std::string> invocation_id;
    bool is_error = false;

    friend auto operator==(const HistoryEntry&, const HistoryEntry&) -> bool = default;
};

struct FinalText
{
    std::string text;
    friend auto operator==(const FinalText&, const FinalText&) -> bool = default;
};

struct PlanProposal
{
    std::vector<std::string> steps; // non-empty
    friend auto operator==(const PlanProposal&, const PlanProposal&) -> bool = default;
};

using ToolCall = protocol::ToolCall;

/// The model's move for one iteration of the loop.
using ModelTurn = std::variant<FinalText, ToolCall, PlanProposal>;

[[nodiscard]] auto to_json(const ModelTurn& turn) -> nlohmann::json;
[[nodiscard]] auto model_turn_from_json(const nlohmann::json& j) -> ModelTurn;

/// Text form used in the conversation history, matching the script syntax:
/// `final <text>`, `call <tool> <args>`, `plan <step>|<step>`.
[[nodiscard]] auto render_turn(const ModelTurn& turn) -> std::string;

// Conversation text for non-model turns.
[[nodiscard]] auto render_tool_result(const std::string& tool, const protocol::ToolOutcome& outcome) -> std::string;
[[nodiscard]] auto render_plan_acceptance(const std::vector<std::string>& steps, bool modified) -> std::string;
[[nodiscard]] auto render_plan_rejection(const std::string& reason) -> std::string;

[[nodiscard]] auto to_json(const HistoryEntry& entry) -> nlohmann::json;
[[nodiscard]] auto history_entry_from_json(const nlohmann::json& j) -> HistoryEntry;

} // namespace steward::model
