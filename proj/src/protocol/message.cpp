// SPDX-License-Identifier: Apache-2.0
#include <steward/protocol/message.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <utility>

namespace steward::protocol
{

namespace
{

using nlohmann::json;

struct KindName
{
    MessageKind kind;
    std::string_view name;
};

constexpr auto kKindNames = std::array {
    KindName { MessageKind::Hello, "Hello" },
    KindName { MessageKind::BootstrapRequest, "BootstrapRequest" },
    KindName { MessageKind::BootstrapResult, "BootstrapResult" },
    KindName { MessageKind::ToolDispatch, "ToolDispatch" },
    KindName { MessageKind::ToolResult, "ToolResult" },
    KindName { MessageKind::ApprovalRequest, "ApprovalRequest" },
    KindName { MessageKind::ApprovalDecision, "ApprovalDecision" },
    KindName { MessageKind::PlanProposed, "PlanProposed" },
    KindName { MessageKind::PlanDecision, "PlanDecision" },
    KindName { MessageKind::TaskUpdate, "TaskUpdate" },
    KindName { MessageKind::Error, "Error" },
    KindName { MessageKind::Ping, "Ping" },
    KindName { MessageKind::Pong, "Pong" },
};

enum class FieldType
{
    String,
    Integer,
    Boolean,
    Object,
    StringList,
};

struct FieldSpec
{
    std::string_view name;
    FieldType type;
    bool required;
    std::vector<std::string_view> allowed {}; // closed value set for strings
    bool non_empty = false;                   // lists and strings
};

auto body_schema(MessageKind kind) -> const std::vector<FieldSpec>&
{
    using enum FieldType;
    static const auto hello = std::vector<FieldSpec> {
        { "version", Integer, true },
        { "client", String, false },
        { "last_seq", Integer, false },
    };
    static const auto bootstrapRequest = std::vector<FieldSpec> {
        { "max_commits", Integer, true },
        { "max_depth", Integer, true },
        { "max_entries", Integer, true },
        { "timeout_ms", Integer, true },
    };
    static const auto bootstrapResult = std::vector<FieldSpec> {
        { "os_name", String, true },
        { "working_directory", String, true },
        { "recent_git_history", StringList, true },
        { "project_structure", StringList, true },
    };
    static const auto toolDispatch = std::vector<FieldSpec> {
        { "tool", String, true, {}, true },
        { "args", Object, true },
        { "redispatch", Boolean, false },
        { "expected_hash", String, false },
        { "enforce_read_before_edit", Boolean, false },
    };
    static const auto toolResult = std::vector<FieldSpec> {
        { "tool", String, true, {}, true },
        { "status", String, true, { "ok", "error" } },
        { "payload", Object, true },
        { "error_kind", String, false },
        { "message", String, false },
    };
    static const auto approvalRequest = std::vector<FieldSpec> {
        { "tool", String, true, {}, true },
        { "args", Object, true },
        { "audit", StringList, true },
        { "rationale", String, false },
    };
    static const auto approvalDecision = std::vector<FieldSpec> {
        { "decision", String, true, { "approve", "deny" } },
        { "reason", String, false },
    };
    static const auto planProposed = std::vector<FieldSpec> {
        { "steps", StringList, true, {}, true },
    };
    static const auto planDecision = std::vector<FieldSpec> {
        { "decision", String, true, { "approved", "modified", "rejected" } },
        { "steps", StringList, false },
        { "reason", String, false },
    };
    static const auto taskUpdate = std::vector<FieldSpec> {
        { "seq", Integer, true },
        { "timestamp", Integer, true },
        { "kind", String, true, {}, true },
        { "payload", Object, true },
    };
    static const auto error = std::vector<FieldSpec> {
        { "code", String, true, {}, true },
        { "message", String, true },
    };
    static const auto empty = std::vector<FieldSpec> {};

    switch (kind)
    {
        case MessageKind::Hello: return hello;
        case MessageKind::BootstrapRequest: return bootstrapRequest;
        case MessageKind::BootstrapResult: return bootstrapResult;
        case MessageKind::ToolDispatch: return toolDispatch;
        case MessageKind::ToolResult: return toolResult;
        case MessageKind::ApprovalRequest: return approvalRequest;
        case MessageKind::ApprovalDecision: return approvalDecision;
        case MessageKind::PlanProposed: return planProposed;
        case MessageKind::PlanDecision: return planDecision;
        case MessageKind::TaskUpdate: return taskUpdate;
        case MessageKind::Error: return error;
        case MessageKind::Ping:
        case MessageKind::Pong: return empty;
    }
    return empty;
}

auto type_name(FieldType type) -> std::string_view
{
    switch (type)
    {
        case FieldType::String: return "string";
        case FieldType::Integer: return "integer";
        case FieldType::Boolean: return "boolean";
        case FieldType::Object: return "object";
        case FieldType::StringList: return "list of strings";
    }
    return "?";
}

auto has_type(const json& value, FieldType type) -> bool
{
    switch (type)
    {
        case FieldType::String: return value.is_string();
        case FieldType::Integer: return value.is_number_integer();
        case FieldType::Boolean: return value.is_boolean();
        case FieldType::Object: return value.is_object();
        case FieldType::StringList:
            return value.is_array()
                   && std::all_of(value.begin(), value.end(), [](const json& v) { return v.is_string(); });
    }
    return false;
}

[[noreturn]] void schema_violation(std::string field, const std::string& what)
{
    auto message = fmt::format("schema violation at '{}': {}", field, what);
    throw ProtocolError(ProtocolError::Code::SchemaViolation, std::move(field), message);
}

void validate_body(MessageKind kind, const json& body)
{
    if (!body.is_object())
        schema_violation("body", "must be an object");

    const auto& schema = body_schema(kind);
    for (const auto& [key, value]: body.items())
    {
        auto known = std::any_of(schema.begin(), schema.end(), [&](const FieldSpec& f) { return f.name == key; });
        if (!known)
            schema_violation("body." + key, fmt::format("field not allowed in {}", to_string(kind)));
    }

    for (const auto& field: schema)
    {
        auto const path = fmt::format("body.{}", field.name);
        auto it = body.find(field.name);
        if (it == body.end())
        {
            if (field.required)
                schema_violation(path, fmt::format("required {} is missing", type_name(field.type)));
            continue;
        }
        if (!has_type(*it, field.type))
            schema_violation(path, fmt::format("expected {}", type_name(field.type)));
        auto const blank = it->is_string() ? it->get_ref<const std::string&>().empty() : it->empty();
        if (field.non_empty && blank)
            schema_violation(path, "must not be empty");
        if (!field.allowed.empty())
        {
            auto const& text = it->get_ref<const std::string&>();
            if (std::find(field.allowed.begin(), field.allowed.end(), text) == field.allowed.end())
                schema_violation(path, fmt::format("'{}' is not one of [{}]", text, fmt::join(field.allowed, ", ")));
        }
    }
}

// Length of the well-formed UTF-8 sequence starting at `i`, or 0.
auto utf8_sequence_length(std::string_view text, std::size_t i) -> std::size_t
{
    auto const byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
    auto const lead = byte(i);
    auto const remaining = text.size() - i;
    auto const cont = [&](std::size_t k) { return k < text.size() && (byte(k) & 0xC0) == 0x80; };

    if (lead < 0x80)
        return 1;
    if (lead >= 0xC2 && lead <= 0xDF)
        return remaining >= 2 && cont(i + 1) ? 2 : 0;
    if (lead >= 0xE0 && lead <= 0xEF)
    {
        if (remaining < 3 || !cont(i + 1) || !cont(i + 2))
            return 0;
        auto const second = byte(i + 1);
        if (lead == 0xE0 && second < 0xA0)
            return 0; // overlong
        if (lead == 0xED && second > 0x9F)
            return 0; // surrogate
        return 3;
    }
    if (lead >= 0xF0 && lead <= 0xF4)
    {
        if (remaining < 4 || !cont(i + 1) || !cont(i + 2) || !cont(i + 3))
            return 0;
        auto const second = byte(i + 1);
        if (lead == 0xF0 && second < 0x90)
            return 0;
        if (lead == 0xF4 && second > 0x8F)
            return 0;
        return 4;
    }
    return 0;
}

} // namespace

auto to_string(MessageKind kind) -> std::string_view
{
    for (auto const& entry: kKindNames)
        if (entry.kind == kind)
            return entry.name;
    return "?";
}

auto parse_message_kind(std::string_view name) -> std::optional<MessageKind>
{
    for (auto const& entry: kKindNames)
        if (entry.name == name)
            return entry.kind;
    return std::nullopt;
}

auto all_message_kinds() -> const std::vector<MessageKind>&
{
    static const auto kinds = [] {
        auto out = std::vector<MessageKind> {};
        for (auto const& entry: kKindNames)
            out.push_back(entry.kind);
        return out;
    }();
    return kinds;
}

auto carries_invocation(MessageKind kind) -> bool
{
    switch (kind)
    {
        case MessageKind::ToolDispatch:
        case MessageKind::ToolResult:
        case MessageKind::ApprovalRequest:
        case MessageKind::ApprovalDecision: return true;
        default: return false;
    }
}

ProtocolError::ProtocolError(Code code, std::string field, const std::string& message):
    std::runtime_error(message), _code(code), _field(std::move(field))
{
}

auto to_string(ProtocolError::Code code) -> std::string_view
{
    switch (code)
    {
        case ProtocolError::Code::MalformedFrame: return "MalformedFrame";
        case ProtocolError::Code::UnknownKind: return "UnknownKind";
        case ProtocolError::Code::SchemaViolation: return "SchemaViolation";
    }
    return "?";
}

void validate_message(const Message& msg)
{
    if (msg.task_id.empty())
        schema_violation("task_id", "must be a non-empty string");

    if (carries_invocation(msg.kind))
    {
        if (!msg.invocation_id || msg.invocation_id->empty())
            schema_violation("invocation_id", fmt::format("required for {}", to_string(msg.kind)));
    }
    else if (msg.invocation_id)
    {
        schema_violation("invocation_id", fmt::format("not allowed for {}", to_string(msg.kind)));
    }

    validate_body(msg.kind, msg.body);
}

auto encode_message(const Message& msg) -> std::string
{
    auto frame = json::object();
    frame["kind"] = to_string(msg.kind);
    frame["task_id"] = msg.task_id;
    if (msg.invocation_id)
        frame["invocation_id"] = *msg.invocation_id;
    frame["body"] = msg.body;

    auto line = frame.dump(-1, ' ', false, json::error_handler_t::replace);
    line.push_back('\n');
    return line;
}

auto decode_message(std::string_view line) -> Message
{
    if (!line.empty() && line.back() == '\n')
        line.remove_suffix(1);
    if (line.find('\n') != std::string_view::npos)
        throw ProtocolError(ProtocolError::Code::MalformedFrame, "", "frame spans more than one line");
    // The JSON lexer stops at a NUL byte, which would let trailing garbage through.
    if (line.find('\0') != std::string_view::npos)
        throw ProtocolError(ProtocolError::Code::MalformedFrame, "", "frame contains a NUL byte");

    auto frame = json::parse(line, nullptr, false);
    if (frame.is_discarded())
        throw ProtocolError(ProtocolError::Code::MalformedFrame, "", "frame is not parseable JSON");
    if (!frame.is_object())
        throw ProtocolError(ProtocolError::Code::MalformedFrame, "", "frame is not a JSON object");

    for (auto const& [key, value]: frame.items())
    {
        if (key != "kind" && key != "task_id" && key != "invocation_id" && key != "body")
            schema_violation(key, "unknown top-level field");
    }

    auto kindIt = frame.find("kind");
    if (kindIt == frame.end() || !kindIt->is_string())
        schema_violation("kind", "required string is missing");
    auto kind = parse_message_kind(kindIt->get_ref<const std::string&>());
    if (!kind)
    {
        throw ProtocolError(ProtocolError::Code::UnknownKind,
                            "kind",
                            fmt::format("unknown message kind '{}'", kindIt->get_ref<const std::string&>()));
    }

    auto msg = Message {};
    msg.kind = *kind;

    auto taskIt = frame.find("task_id");
    if (taskIt == frame.end() || !taskIt->is_string())
        schema_violation("task_id", "required string is missing");
    msg.task_id = taskIt->get<std::string>();

    if (auto it = frame.find("invocation_id"); it != frame.end())
    {
        if (!it->is_string())
            schema_violation("invocation_id", "expected string");
        msg.invocation_id = it->get<std::string>();
    }

    auto bodyIt = frame.find("body");
    if (bodyIt == frame.end())
        schema_violation("body", "required object is missing");
    msg.body = *bodyIt;

    validate_message(msg);
    return msg;
}

auto decode_stream(std::string_view bytes, std::string* rest) -> std::vector<Message>
{
    auto out = std::vector<Message> {};
    while (!bytes.empty())
    {
        auto const newline = bytes.find('\n');
        if (newline == std::string_view::npos)
        {
            if (!rest)
                throw ProtocolError(ProtocolError::Code::MalformedFrame, "", "unterminated frame");
            *rest = std::string(bytes);
            return out;
        }
        out.push_back(decode_message(bytes.substr(0, newline)));
        bytes.remove_prefix(newline + 1);
    }
    if (rest)
        rest->clear();
    return out;
}

auto sanitize_utf8(std::string_view text) -> std::string
{
    auto out = std::string {};
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size();)
    {
        auto const n = utf8_sequence_length(text, i);
        if (n == 0)
        {
            out.push_back('?');
            ++i;
            continue;
        }
        out.append(text.substr(i, n));
        i += n;
    }
    return out;
}

auto make_message(MessageKind kind, std::string task_id, nlohmann::json body, std::optional<std::string> invocation_id)
    -> Message
{
    return Message {
        .kind = kind,
        .task_id = std::move(task_id),
        .invocation_id = std::move(invocation_id),
        .body = std::move(body),
    };
}

} // namespace steward::protocol
