// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace steward::protocol
{

enum class ParamType
{
    String,
    Integer,
    Boolean,
};

[[nodiscard]] auto to_string(ParamType type) -> std::string_view;

struct ParamSpec
{
    std::string name;
    ParamType type = ParamType::String;
    bool required = true;
    std::string description;
};

/// Declarative description of one tool as presented to the model.
struct ToolManifestEntry
{
    std::string name;
    std::string description;
    std::vector<ParamSpec> parameters;
    bool destructive = false;

    [[nodiscard]] auto find_param(std::string_view param) const -> const ParamSpec*;
};

using ToolManifest = std::vector<ToolManifestEntry>;

/// A tool invocation as requested by the model. `args` is whatever the model
/// produced; it is checked against the manifest before anything runs.
struct ToolCall
{
    std::string tool;
    nlohmann::json args = nlohmann::json::object();
    std::optional<std::string> rationale;

    friend auto operator==(const ToolCall&, const ToolCall&) -> bool = default;
};

[[nodiscard]] auto to_json(const ToolCall& call) -> nlohmann::json;
[[nodiscard]] auto tool_call_from_json(const nlohmann::json& j) -> ToolCall;

namespace tool_names
{
    inline constexpr std::string_view Read = "read";
    inline constexpr std::string_view Edit = "edit";
    inline constexpr std::string_view Shell = "shell";
} // namespace tool_names

/// The read / edit / shell manifest shipped with the orchestrator.
[[nodiscard]] auto default_manifest() -> const ToolManifest&;

[[nodiscard]] auto find_tool(const ToolManifest& manifest, std::string_view name) -> const ToolManifestEntry*;

/// Throws std::invalid_argument if names repeat, a name is empty, or a required
/// parameter lacks a description.
void check_manifest(const ToolManifest& manifest);

[[nodiscard]] auto manifest_to_json(const ToolManifest& manifest) -> nlohmann::json;

struct ArgViolation
{
    enum class Kind
    {
        NotAnObject,
        Missing,
        WrongType,
        Undeclared,
    };

    Kind kind;
    std::string param;
    std::string message;

    friend auto operator==(const ArgViolation&, const ArgViolation&) -> bool = default;
};

/// Empty result means the arguments are acceptable. Every violation is
/// reported, not just the first, so the model can repair the call in one go.
[[nodiscard]] auto validate_tool_args(const ToolManifestEntry& entry, const nlohmann::json& args)
    -> std::vector<ArgViolation>;

/// Model-facing text describing the violations and the expected call shape.
[[nodiscard]] auto describe_violations(const ToolManifestEntry& entry, const std::vector<ArgViolation>& violations)
    -> std::string;

} // namespace steward::protocol
