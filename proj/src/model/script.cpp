// SPDX-License-Identifier: Apache-2.0
#include <steward/model/script.hpp>

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace steward::model
{

using nlohmann::json;

namespace
{

auto trim(std::string_view s) -> std::string_view
{
    auto const ws = " \t\r";
    auto const begin = s.find_first_not_of(ws);
    if (begin == std::string_view::npos)
        return {};
    auto const end = s.find_last_not_of(ws);
    return s.substr(begin, end - begin + 1);
}

auto split_word(std::string_view s) -> std::pair<std::string_view, std::string_view>
{
    s = trim(s);
    auto const space = s.find_first_of(" \t");
    if (space == std::string_view::npos)
        return { s, {} };
    return { s.substr(0, space), trim(s.substr(space + 1)) };
}

auto parse_call(std::string_view rest, int line) -> ToolCall
{
    auto [tool, tail] = split_word(rest);
    if (tool.empty())
        throw ScriptParseError(line, "call needs a tool name");
    if (tail.empty() || tail.front() != '{')
        throw ScriptParseError(line, "call needs a JSON object of arguments after the tool name");

    auto in = std::istringstream(std::string(tail));
    auto args = json {};
    try
    {
        in >> args;
    }
    catch (const json::exception& e)
    {
        throw ScriptParseError(line, fmt::format("bad call arguments: {}", e.what()));
    }

    auto call = ToolCall { .tool = std::string(tool), .args = std::move(args), .rationale = std::nullopt };
    auto remaining = std::string {};
    std::getline(in, remaining, '\0');
    if (auto rationale = trim(remaining); !rationale.empty())
        call.rationale = std::string(rationale);
    return call;
}

auto parse_plan(std::string_view rest, int line) -> PlanProposal
{
    auto plan = PlanProposal {};
    while (true)
    {
        auto const bar = rest.find('|');
        auto step = trim(rest.substr(0, bar));
        if (step.empty())
            throw ScriptParseError(line, "plan steps must be non-empty");
        plan.steps.emplace_back(step);
        if (bar == std::string_view::npos)
            break;
        rest.remove_prefix(bar + 1);
    }
    return plan;
}

} // namespace

ScriptParseError::ScriptParseError(int line, const std::string& message):
    std::runtime_error(fmt::format("script line {}: {}", line, message)), _line(line)
{
}

auto parse_script(std::string_view text) -> Script
{
    auto script = Script {};
    auto lineNo = 0;
    while (!text.empty())
    {
        ++lineNo;
        auto const nl = text.find('\n');
        auto raw = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);

        auto line = trim(raw);
        if (line.empty() || line.front() == '#')
            continue;

        auto entry = ScriptEntry { .match = std::nullopt, .respond = FinalText {}, .line = lineNo };
        if (line.substr(0, 6) == "match=")
        {
            auto const semi = line.find(';');
            if (semi == std::string_view::npos)
                throw ScriptParseError(lineNo, "match= prefix must end with ';'");
            auto pattern = trim(line.substr(6, semi - 6));
            if (pattern.empty())
                throw ScriptParseError(lineNo, "empty match pattern");
            entry.match = std::string(pattern);
            line = trim(line.substr(semi + 1));
        }

        auto [variant, rest] = split_word(line);
        if (variant == "final")
            entry.respond = FinalText { std::string(rest) };
        else if (variant == "call")
            entry.respond = parse_call(rest, lineNo);
        else if (variant == "plan")
            entry.respond = parse_plan(rest, lineNo);
        else
            throw ScriptParseError(lineNo,
                                   fmt::format("unknown entry '{}'; expected final, call or plan", std::string(variant)));
        script.entries.push_back(std::move(entry));
    }
    return script;
}

auto load_script(const std::filesystem::path& path) -> Script
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw std::runtime_error(fmt::format("cannot open script {}", path.string()));
    auto buffer = std::stringstream {};
    buffer << in.rdbuf();
    return parse_script(buffer.str());
}

auto format_entry(const ScriptEntry& entry) -> std::string
{
    auto text = render_turn(entry.respond);
    if (entry.match)
        text = fmt::format("match={} ; {}", *entry.match, text);
    return text;
}

} // namespace steward::model
