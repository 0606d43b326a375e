// SPDX-License-Identifier: Apache-2.0
#include <steward/cli/steering.hpp>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <charconv>
#include <istream>
#include <ostream>

namespace steward::cli
{

using nlohmann::json;

namespace
{

/// Verbatim block; the byte count makes trailing whitespace visible.
auto verbatim(const std::string& label, const std::string& text) -> std::string
{
    return fmt::format("  {} ({} bytes):\n{}\n", label, text.size(), text);
}

auto trim(std::string text) -> std::string
{
    auto const first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos)
        return {};
    auto const last = text.find_last_not_of(" \t\r");
    return text.substr(first, last - first + 1);
}

auto parse_index(std::string_view text, std::size_t limit) -> std::optional<std::size_t>
{
    auto value = std::size_t {};
    auto const [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc {} || end != text.data() + text.size() || value == 0 || value > limit)
        return std::nullopt;
    return value - 1;
}

} // namespace

auto render_approval(const protocol::Message& request) -> std::string
{
    auto const& body = request.body;
    auto const tool = body.value("tool", std::string {});
    auto const& args = body.contains("args") ? body["args"] : json::object();

    auto out = fmt::format("Approval required: {} (invocation {})\n", tool, request.invocation_id.value_or("?"));
    auto const string_arg = [&](const char* key) {
        return args.contains(key) && args[key].is_string() ? args[key].get<std::string>() : std::string {};
    };
    if (tool == "shell")
    {
        out += verbatim("command", string_arg("command"));
        if (args.contains("timeout_seconds"))
            out += fmt::format("  timeout_seconds: {}\n", args["timeout_seconds"].dump());
    }
    else if (tool == "edit")
    {
        out += "  file_name: " + string_arg("file_name") + "\n";
        out += verbatim("old_string", string_arg("old_string"));
        out += verbatim("new_string", string_arg("new_string"));
    }
    else
    {
        for (auto const& [key, value]: args.items())
            out += fmt::format("  {}: {}\n", key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    if (body.contains("rationale"))
        out += "  rationale: " + body["rationale"].get<std::string>() + "\n";
    out += "  policy:\n";
    for (auto const& line: body.value("audit", std::vector<std::string> {}))
        out += "    " + line + "\n";
    return out;
}

auto render_plan(const std::vector<std::string>& steps) -> std::string
{
    auto out = std::string("Proposed plan:\n");
    for (auto i = std::size_t { 0 }; i < steps.size(); ++i)
        out += fmt::format("  {}. {}\n", i + 1, steps[i]);
    return out;
}

auto edit_plan(std::vector<std::string>& steps, const std::string& command) -> bool
{
    auto const line = trim(command);
    if (line.size() < 2 || line[1] != ' ')
        return false;
    auto const op = line[0];
    auto rest = trim(line.substr(2));
    if (op == 'a')
    {
        if (rest.empty())
            return false;
        steps.push_back(rest);
        return true;
    }
    auto const space = rest.find(' ');
    auto const number = rest.substr(0, space);
    auto const text = space == std::string::npos ? std::string {} : trim(rest.substr(space + 1));
    switch (op)
    {
        case 'd':
            if (auto const i = parse_index(number, steps.size()); i && text.empty())
            {
                steps.erase(steps.begin() + static_cast<std::ptrdiff_t>(*i));
                return true;
            }
            return false;
        case 'e':
            if (auto const i = parse_index(number, steps.size()); i && !text.empty())
            {
                steps[*i] = text;
                return true;
            }
            return false;
        case 'i':
            if (auto const i = parse_index(number, steps.size() + 1); i && !text.empty())
            {
                steps.insert(steps.begin() + static_cast<std::ptrdiff_t>(*i), text);
                return true;
            }
            return false;
        default: return false;
    }
}

TerminalSteering::TerminalSteering(std::istream& in, std::ostream& out, bool interactive):
    _in(in), _out(out), _interactive(interactive)
{
}

auto TerminalSteering::read_line(std::string& line) -> bool
{
    _out.flush();
    return static_cast<bool>(std::getline(_in, line));
}

auto TerminalSteering::approve(const protocol::Message& request) -> ApprovalAnswer
{
    _out << render_approval(request);
    if (!_interactive)
    {
        _out << fmt::format("  denied: {}\n", NonInteractiveReason);
        return { .approve = false, .reason = std::string(NonInteractiveReason) };
    }
    _out << "Approve? [y]es / [n]o [reason]: ";
    auto line = std::string {};
    if (!read_line(line))
        return { .approve = false, .reason = "input closed" };
    line = trim(line);
    if (line == "y" || line == "yes")
        return { .approve = true, .reason = {} };
    auto reason = std::string {};
    if (auto const space = line.find(' '); space != std::string::npos)
        reason = trim(line.substr(space + 1));
    return { .approve = false, .reason = reason.empty() ? "denied by user" : reason };
}

auto TerminalSteering::plan(const std::vector<std::string>& steps) -> PlanAnswer
{
    _out << render_plan(steps);
    if (!_interactive)
    {
        _out << fmt::format("  rejected: {}\n", NonInteractiveReason);
        return { .decision = "rejected", .steps = {}, .reason = std::string(NonInteractiveReason) };
    }
    while (true)
    {
        _out << "[a]pprove, [m]odify, [r]eject [reason]: ";
        auto line = std::string {};
        if (!read_line(line))
            return { .decision = "rejected", .steps = {}, .reason = "input closed" };
        line = trim(line);
        if (line == "a" || line == "approve")
            return { .decision = "approved", .steps = {}, .reason = {} };
        if (line == "r" || line == "reject" || line.starts_with("r ") || line.starts_with("reject "))
        {
            auto const space = line.find(' ');
            return { .decision = "rejected",
                     .steps = {},
                     .reason = space == std::string::npos ? std::string {} : trim(line.substr(space + 1)) };
        }
        if (line == "m" || line == "modify")
        {
            auto edited = steps;
            _out << "Edit with: d N (delete), e N text (replace), i N text (insert), a text (append); "
                    "'done' to finish.\n";
            while (true)
            {
                _out << render_plan(edited) << "> ";
                auto command = std::string {};
                if (!read_line(command))
                    return { .decision = "rejected", .steps = {}, .reason = "input closed" };
                if (trim(command) == "done")
                    break;
                if (!edit_plan(edited, command))
                    _out << "  not understood\n";
            }
            if (edited.empty())
            {
                _out << "  a plan needs at least one step\n";
                continue;
            }
            return { .decision = "modified", .steps = edited, .reason = {} };
        }
    }
}

ScriptedSteering::ScriptedSteering(std::vector<ApprovalAnswer> approvals, std::vector<PlanAnswer> plans):
    _approvals(approvals.begin(), approvals.end()), _plans(plans.begin(), plans.end())
{
}

auto ScriptedSteering::approve(const protocol::Message& request) -> ApprovalAnswer
{
    auto lock = std::lock_guard(_mutex);
    _transcript.push_back(render_approval(request));
    if (_approvals.empty())
        return { .approve = false, .reason = "no scripted answer" };
    auto answer = _approvals.front();
    _approvals.pop_front();
    return answer;
}

auto ScriptedSteering::plan(const std::vector<std::string>& steps) -> PlanAnswer
{
    auto lock = std::lock_guard(_mutex);
    _transcript.push_back(render_plan(steps));
    if (_plans.empty())
        return { .decision = "rejected", .steps = {}, .reason = "no scripted answer" };
    auto answer = _plans.front();
    _plans.pop_front();
    return answer;
}

auto ScriptedSteering::transcript() const -> std::vector<std::string>
{
    auto lock = std::lock_guard(_mutex);
    return _transcript;
}

} // namespace steward::cli
