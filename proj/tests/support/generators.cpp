// SPDX-License-Identifier: Apache-2.0
#include "generators.hpp"

#include <steward/safety/capability.hpp>

namespace steward::testing
{

using nlohmann::json;
using protocol::MessageKind;

namespace
{

void append_code_point(std::string& out, char32_t cp)
{
    if (cp < 0x80)
        out.push_back(static_cast<char>(cp));
    else if (cp < 0x800)
    {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    else if (cp < 0x10000)
    {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    else
    {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

auto identifier(Rng& rng) -> std::string
{
    return rng.text("abcdefghijklmnopqrstuvwxyz_", 1, 10);
}

auto string_list(Rng& rng, std::size_t min, std::size_t max) -> json
{
    auto list = json::array();
    auto const n = static_cast<std::size_t>(rng.uniform(static_cast<int>(min), static_cast<int>(max)));
    for (auto i = std::size_t { 0 }; i < n; ++i)
        list.push_back(random_text(rng, 24));
    return list;
}

} // namespace

auto random_text(Rng& rng, std::size_t max_chars) -> std::string
{
    auto out = std::string {};
    auto const n = rng.index(max_chars + 1);
    for (auto i = std::size_t { 0 }; i < n; ++i)
    {
        switch (rng.uniform(0, 9))
        {
            case 0: append_code_point(out, static_cast<char32_t>(rng.uniform(0, 0x1F))); break;
            case 1: out.push_back(rng.chance(0.5) ? '"' : '\\'); break;
            case 2: append_code_point(out, static_cast<char32_t>(rng.uniform(0x80, 0x7FF))); break;
            case 3:
            {
                auto cp = static_cast<char32_t>(rng.uniform(0x800, 0xFFFD));
                if (cp >= 0xD800 && cp <= 0xDFFF)
                    cp = 0x4E2D;
                append_code_point(out, cp);
                break;
            }
            case 4: append_code_point(out, static_cast<char32_t>(rng.uniform(0x10000, 0x10FFFF))); break;
            default: out.push_back(static_cast<char>(rng.uniform(0x20, 0x7E))); break;
        }
    }
    return out;
}

auto random_json(Rng& rng, int depth) -> json
{
    auto const pick = rng.uniform(0, depth > 0 ? 7 : 5);
    switch (pick)
    {
        case 0: return nullptr;
        case 1: return rng.chance(0.5);
        case 2: return static_cast<std::int64_t>(rng.engine()()) >> rng.uniform(0, 62);
        case 3: return static_cast<double>(rng.uniform(-4000, 4000)) / 8.0 + 0.5;
        case 4:
        case 5: return random_text(rng, 16);
        case 6:
        {
            auto arr = json::array();
            for (auto i = rng.uniform(0, 4); i > 0; --i)
                arr.push_back(random_json(rng, depth - 1));
            return arr;
        }
        default: return random_object(rng, depth - 1);
    }
}

auto random_object(Rng& rng, int depth) -> json
{
    auto obj = json::object();
    for (auto i = rng.uniform(0, 4); i > 0; --i)
        obj[random_text(rng, 8)] = random_json(rng, depth);
    return obj;
}

auto random_message(Rng& rng) -> protocol::Message
{
    return random_message(rng, rng.pick(protocol::all_message_kinds()));
}

auto random_message(Rng& rng, MessageKind kind) -> protocol::Message
{
    auto msg = protocol::Message {};
    msg.kind = kind;
    msg.task_id = rng.chance(0.2) ? random_text(rng, 12) + "t" : "t-" + rng.text("0123456789abcdef", 16, 16);
    if (protocol::carries_invocation(kind))
        msg.invocation_id = rng.chance(0.2) ? random_text(rng, 8) + "i" : "inv-" + std::to_string(rng.uniform(1, 999));

    auto& body = msg.body;
    auto const maybe = [&](const char* key, auto make) {
        if (rng.chance(0.5))
            body[key] = make();
    };
    auto const tool = [&] { return rng.chance(0.8) ? rng.pick(std::vector<std::string> { "read", "edit", "shell" }) : identifier(rng); };

    switch (kind)
    {
        case MessageKind::Hello:
            body["version"] = rng.uniform(1, 3);
            maybe("client", [&] { return random_text(rng, 12); });
            maybe("last_seq", [&] { return rng.uniform(0, 100000); });
            break;
        case MessageKind::BootstrapRequest:
            body["max_commits"] = rng.uniform(0, 50);
            body["max_depth"] = rng.uniform(0, 8);
            body["max_entries"] = rng.uniform(0, 5000);
            body["timeout_ms"] = rng.uniform(0, 60000);
            break;
        case MessageKind::BootstrapResult:
            body["os_name"] = random_text(rng, 16);
            body["working_directory"] = random_text(rng, 32);
            body["recent_git_history"] = string_list(rng, 0, 5);
            body["project_structure"] = string_list(rng, 0, 8);
            break;
        case MessageKind::ToolDispatch:
            body["tool"] = tool();
            body["args"] = random_object(rng, 2);
            maybe("redispatch", [&] { return rng.chance(0.5); });
            maybe("expected_hash", [&] { return rng.text("0123456789abcdef", 64, 64); });
            maybe("enforce_read_before_edit", [&] { return rng.chance(0.5); });
            break;
        case MessageKind::ToolResult:
            body["tool"] = tool();
            body["status"] = rng.chance(0.5) ? "ok" : "error";
            body["payload"] = random_object(rng, 2);
            maybe("error_kind", [&] { return identifier(rng); });
            maybe("message", [&] { return random_text(rng, 40); });
            break;
        case MessageKind::ApprovalRequest:
            body["tool"] = tool();
            body["args"] = random_object(rng, 2);
            body["audit"] = string_list(rng, 0, 4);
            maybe("rationale", [&] { return random_text(rng, 40); });
            break;
        case MessageKind::ApprovalDecision:
            body["decision"] = rng.chance(0.5) ? "approve" : "deny";
            maybe("reason", [&] { return random_text(rng, 30); });
            break;
        case MessageKind::PlanProposed: body["steps"] = string_list(rng, 1, 6); break;
        case MessageKind::PlanDecision:
            body["decision"] = rng.pick(std::vector<std::string> { "approved", "modified", "rejected" });
            maybe("steps", [&] { return string_list(rng, 0, 5); });
            maybe("reason", [&] { return random_text(rng, 30); });
            break;
        case MessageKind::TaskUpdate:
            body["seq"] = rng.uniform(1, 1000000);
            body["timestamp"] = static_cast<std::int64_t>(rng.engine()() >> 24);
            body["kind"] = identifier(rng);
            body["payload"] = random_object(rng, 2);
            break;
        case MessageKind::Error:
            body["code"] = identifier(rng);
            body["message"] = random_text(rng, 40);
            break;
        case MessageKind::Ping:
        case MessageKind::Pong: break;
    }
    return msg;
}

auto all_mutations() -> const std::vector<Mutation>&
{
    static const auto all = std::vector<Mutation> {
        Mutation::Truncate,     Mutation::ControlChar,  Mutation::InvalidUtf8, Mutation::UnknownKind,
        Mutation::DropRequired, Mutation::ExtraBodyKey, Mutation::WrongType,
    };
    return all;
}

auto to_string(Mutation m) -> std::string_view
{
    switch (m)
    {
        case Mutation::Truncate: return "truncate";
        case Mutation::ControlChar: return "control-char";
        case Mutation::InvalidUtf8: return "invalid-utf8";
        case Mutation::UnknownKind: return "unknown-kind";
        case Mutation::DropRequired: return "drop-required";
        case Mutation::ExtraBodyKey: return "extra-body-key";
        case Mutation::WrongType: return "wrong-type";
    }
    return "?";
}

namespace
{

auto required_body_fields(MessageKind kind) -> std::vector<std::string>
{
    switch (kind)
    {
        case MessageKind::Hello: return { "version" };
        case MessageKind::BootstrapRequest: return { "max_commits", "max_depth", "max_entries", "timeout_ms" };
        case MessageKind::BootstrapResult:
            return { "os_name", "working_directory", "recent_git_history", "project_structure" };
        case MessageKind::ToolDispatch: return { "tool", "args" };
        case MessageKind::ToolResult: return { "tool", "status", "payload" };
        case MessageKind::ApprovalRequest: return { "tool", "args", "audit" };
        case MessageKind::ApprovalDecision: return { "decision" };
        case MessageKind::PlanProposed: return { "steps" };
        case MessageKind::PlanDecision: return { "decision" };
        case MessageKind::TaskUpdate: return { "seq", "timestamp", "kind", "payload" };
        case MessageKind::Error: return { "code", "message" };
        case MessageKind::Ping:
        case MessageKind::Pong: return {};
    }
    return {};
}

/// A value whose JSON type differs from `value`'s.
auto other_type(Rng& rng, const json& value) -> json
{
    auto candidates = std::vector<json> { json(nullptr), json(true), json(7), json("text"), json::array(), json::object() };
    auto out = std::vector<json> {};
    for (auto& c: candidates)
    {
        auto const sameFamily = (c.is_number() && value.is_number()) || c.type() == value.type();
        if (!sameFamily)
            out.push_back(std::move(c));
    }
    return rng.pick(out);
}

} // namespace

auto mutate(Rng& rng, const protocol::Message& msg, Mutation m) -> std::string
{
    auto line = protocol::encode_message(msg);
    line.pop_back();
    auto frame = json::parse(line);

    switch (m)
    {
        case Mutation::Truncate: return line.substr(0, rng.index(line.size()));
        case Mutation::ControlChar:
        {
            auto ch = static_cast<char>(rng.uniform(0, 0x1C));
            if (ch == '\t' || ch == '\n' || ch == '\r')
                ch = 0x1F;
            line.insert(rng.index(line.size() + 1), 1, ch);
            return line;
        }
        case Mutation::InvalidUtf8:
            line.insert(rng.index(line.size() + 1), 1, static_cast<char>(0xFF));
            return line;
        case Mutation::UnknownKind:
        {
            auto name = std::string {};
            do
                name = random_text(rng, 12);
            while (protocol::parse_message_kind(name));
            frame["kind"] = name;
            break;
        }
        case Mutation::DropRequired:
        {
            auto fields = std::vector<std::string> { "kind", "task_id", "body" };
            if (msg.invocation_id)
                fields.emplace_back("invocation_id");
            for (auto const& f: required_body_fields(msg.kind))
                fields.push_back("body." + f);
            auto const victim = rng.pick(fields);
            if (victim.starts_with("body."))
                frame["body"].erase(victim.substr(5));
            else
                frame.erase(victim);
            break;
        }
        case Mutation::ExtraBodyKey:
            frame["body"]["undeclared_" + rng.text("abcxyz", 1, 6)] = random_json(rng, 1);
            break;
        case Mutation::WrongType:
        {
            auto fields = std::vector<std::string> { "task_id", "body" };
            if (msg.invocation_id)
                fields.emplace_back("invocation_id");
            for (auto const& [key, value]: frame["body"].items())
                fields.push_back("body." + key);
            auto const victim = rng.pick(fields);
            auto& slot = victim.starts_with("body.") ? frame["body"][victim.substr(5)] : frame[victim];
            slot = other_type(rng, slot);
            break;
        }
    }
    return frame.dump();
}

auto byte_noise(Rng& rng, std::string line) -> std::string
{
    for (auto n = rng.uniform(1, 4); n > 0; --n)
    {
        auto const op = rng.uniform(0, 2);
        if (op == 0 && !line.empty())
            line[rng.index(line.size())] = static_cast<char>(rng.uniform(0, 255));
        else if (op == 1)
            line.insert(rng.index(line.size() + 1), 1, static_cast<char>(rng.uniform(0, 255)));
        else if (!line.empty())
            line.erase(rng.index(line.size()), 1);
    }
    return line;
}

auto random_command(Rng& rng) -> std::string
{
    static const auto segments = std::vector<std::string> {
        "ls",
        "ls -la src",
        "cat a.txt",
        "grep -rn TODO .",
        "echo hi",
        "echo hi > out.txt",
        "rm a.txt",
        "rm -rf tmp",
        "rm -rf /tmp/x",
        "mv a.txt b.txt",
        "cp a.txt b.txt",
        "touch new.txt",
        "mkdir -p build",
        "git status",
        "git log --oneline",
        "git push origin main",
        "git push --force",
        "git push -f origin main",
        "curl -X POST https://example.com",
        "curl https://example.com",
        "make",
        "python3 script.py",
        "sed -i s/a/b/ a.txt",
        "find . -name '*.o' -delete",
        "sudo rm -rf /var/tmp/x",
        "unknowncmd --flag",
        "tee log.txt",
        "wc -l a.txt",
        "npm publish",
        "chmod +x run.sh",
    };
    static const auto operators = std::vector<std::string> { " && ", " || ", "; ", " | " };
    auto command = rng.pick(segments);
    for (auto n = rng.uniform(0, 3); n > 0; --n)
        command += rng.pick(operators) + rng.pick(segments);
    return command;
}

auto random_policy(Rng& rng) -> safety::PolicyConfig
{
    auto const rule = [&] {
        return static_cast<safety::Rule>(rng.uniform(0, 2));
    };
    auto policy = safety::PolicyConfig {};
    for (auto const* tool: { "read", "edit", "shell" })
        if (rng.chance(0.3))
            policy.tool_rules[tool] = rule();
    for (auto cap: safety::all_capabilities())
        if (rng.chance(0.3))
            policy.capability_rules[cap] = rule();
    static const auto patterns = std::vector<std::string> { "git push*", "rm -rf*", "curl*", "npm publish*", "sudo*" };
    for (auto const& pattern: patterns)
        if (rng.chance(0.15))
            policy.command_blocklist.push_back(pattern);
    policy.unknown_command_rule = rule();
    return policy;
}

auto tighten(Rng& rng, safety::PolicyConfig base) -> safety::PolicyConfig
{
    auto const stricter = [&](safety::Rule current) {
        return static_cast<safety::Rule>(rng.uniform(static_cast<int>(current), 2));
    };
    switch (rng.uniform(0, 3))
    {
        case 0:
        {
            auto const* tool = rng.pick(std::vector<const char*> { "read", "edit", "shell" });
            auto const current = base.tool_rules.contains(tool) ? base.tool_rules[tool] : safety::Rule::Allow;
            base.tool_rules[tool] = stricter(current);
            break;
        }
        case 1:
        {
            auto const cap = rng.pick(safety::all_capabilities());
            auto const current =
                base.capability_rules.contains(cap) ? base.capability_rules[cap] : safety::Rule::Allow;
            base.capability_rules[cap] = stricter(current);
            break;
        }
        case 2:
            base.command_blocklist.push_back(
                rng.pick(std::vector<std::string> { "git push*", "rm*", "curl*", "echo*", "*" }));
            break;
        default: base.unknown_command_rule = stricter(base.unknown_command_rule); break;
    }
    return base;
}

} // namespace steward::testing
