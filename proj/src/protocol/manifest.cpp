// SPDX-License-Identifier: Apache-2.0
#include <steward/protocol/manifest.hpp>

#include <fmt/format.h>

#include <set>
#include <stdexcept>

namespace steward::protocol
{

using nlohmann::json;

auto to_string(ParamType type) -> std::string_view
{
    switch (type)
    {
        case ParamType::String: return "string";
        case ParamType::Integer: return "integer";
        case ParamType::Boolean: return "boolean";
    }
    return "?";
}

auto ToolManifestEntry::find_param(std::string_view param) const -> const ParamSpec*
{
    for (auto const& p: parameters)
        if (p.name == param)
            return &p;
    return nullptr;
}

auto to_json(const ToolCall& call) -> json
{
    auto j = json { { "tool", call.tool }, { "args", call.args } };
    if (call.rationale)
        j["rationale"] = *call.rationale;
    return j;
}

auto tool_call_from_json(const json& j) -> ToolCall
{
    auto call = ToolCall {};
    call.tool = j.at("tool").get<std::string>();
    call.args = j.at("args");
    if (auto it = j.find("rationale"); it != j.end() && it->is_string())
        call.rationale = it->get<std::string>();
    return call;
}

auto default_manifest() -> const ToolManifest&
{
    static const auto manifest = ToolManifest {
        ToolManifestEntry {
            .name = std::string(tool_names::Read),
            .description = "Read a file from the project and return its full current content together with a "
                           "content hash. Always read a file before editing it so the edit is based on what is "
                           "actually on disk. Large files are truncated and marked as such.",
            .parameters = {
                { "path", ParamType::String, true, "Path of the file to read, relative to the working directory." },
            },
            .destructive = false,
        },
        ToolManifestEntry {
            .name = std::string(tool_names::Edit),
            .description = "Replace one exact occurrence of old_string with new_string in an existing file. "
                           "old_string must appear exactly once; include enough surrounding lines to make it "
                           "unique. The file is never rewritten wholesale and edit never creates files.",
            .parameters = {
                { "file_name", ParamType::String, true, "Path of the file to modify." },
                { "old_string", ParamType::String, true,
                  "Exact text currently in the file, copied from the latest read, including whitespace." },
                { "new_string", ParamType::String, true, "Text that replaces old_string." },
            },
            .destructive = true,
        },
        ToolManifestEntry {
            .name = std::string(tool_names::Shell),
            .description = "Run a shell command in the working directory and return its exit code, stdout and "
                           "stderr. A non-zero exit code is a normal result. Commands are subject to the "
                           "organisation's command policy and may require human approval.",
            .parameters = {
                { "command", ParamType::String, true, "Command line passed to /bin/sh -c." },
                { "timeout_seconds", ParamType::Integer, false, "Wall-clock limit in seconds (default 120)." },
            },
            .destructive = true,
        },
    };
    return manifest;
}

auto find_tool(const ToolManifest& manifest, std::string_view name) -> const ToolManifestEntry*
{
    for (auto const& entry: manifest)
        if (entry.name == name)
            return &entry;
    return nullptr;
}

void check_manifest(const ToolManifest& manifest)
{
    auto names = std::set<std::string> {};
    for (auto const& entry: manifest)
    {
        if (entry.name.empty())
            throw std::invalid_argument("manifest entry with empty name");
        if (!names.insert(entry.name).second)
            throw std::invalid_argument(fmt::format("duplicate tool name '{}'", entry.name));
        for (auto const& p: entry.parameters)
            if (p.required && p.description.empty())
                throw std::invalid_argument(
                    fmt::format("required parameter '{}.{}' has no description", entry.name, p.name));
    }
}

auto manifest_to_json(const ToolManifest& manifest) -> json
{
    auto out = json::array();
    for (auto const& entry: manifest)
    {
        auto params = json::array();
        for (auto const& p: entry.parameters)
        {
            params.push_back({
                { "name", p.name },
                { "type", to_string(p.type) },
                { "required", p.required },
                { "description", p.description },
            });
        }
        out.push_back({
            { "name", entry.name },
            { "description", entry.description },
            { "parameters", std::move(params) },
            { "destructive", entry.destructive },
        });
    }
    return out;
}

namespace
{

auto matches_type(const json& value, ParamType type) -> bool
{
    switch (type)
    {
        case ParamType::String: return value.is_string();
        case ParamType::Integer: return value.is_number_integer();
        case ParamType::Boolean: return value.is_boolean();
    }
    return false;
}

auto json_type_name(const json& value) -> std::string_view
{
    if (value.is_number_integer())
        return "integer";
    if (value.is_number_float())
        return "number";
    return value.type_name();
}

} // namespace

auto validate_tool_args(const ToolManifestEntry& entry, const json& args) -> std::vector<ArgViolation>
{
    using Kind = ArgViolation::Kind;
    auto violations = std::vector<ArgViolation> {};

    if (!args.is_object())
    {
        violations.push_back({ Kind::NotAnObject,
                               "",
                               fmt::format("arguments must be an object, got {}", json_type_name(args)) });
        return violations;
    }

    for (auto const& param: entry.parameters)
    {
        auto it = args.find(param.name);
        if (it == args.end())
        {
            if (param.required)
                violations.push_back({ Kind::Missing,
                                       param.name,
                                       fmt::format("missing required parameter '{}' ({})",
                                                   param.name,
                                                   to_string(param.type)) });
            continue;
        }
        if (!matches_type(*it, param.type))
            violations.push_back({ Kind::WrongType,
                                   param.name,
                                   fmt::format("parameter '{}' must be {}, got {}",
                                               param.name,
                                               to_string(param.type),
                                               json_type_name(*it)) });
    }

    for (auto const& [key, value]: args.items())
    {
        if (!entry.find_param(key))
            violations.push_back(
                { Kind::Undeclared, key, fmt::format("undeclared parameter '{}' for tool '{}'", key, entry.name) });
    }
    return violations;
}

auto describe_violations(const ToolManifestEntry& entry, const std::vector<ArgViolation>& violations) -> std::string
{
    auto text = fmt::format("invalid arguments for tool '{}':\n", entry.name);
    for (auto const& v: violations)
        text += fmt::format("- {}\n", v.message);

    auto shape = std::vector<std::string> {};
    for (auto const& p: entry.parameters)
        shape.push_back(fmt::format("{}: {}{}", p.name, to_string(p.type), p.required ? "" : " (optional)"));
    text += fmt::format("expected call: {}({})", entry.name, fmt::join(shape, ", "));
    return text;
}

} // namespace steward::protocol
