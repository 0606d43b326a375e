// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace steward::protocol
{

inline constexpr int kProtocolVersion = 1;

enum class MessageKind
{
    Hello,
    BootstrapRequest,
    BootstrapResult,
    ToolDispatch,
    ToolResult,
    ApprovalRequest,
    ApprovalDecision,
    PlanProposed,
    PlanDecision,
    TaskUpdate,
    Error,
    Ping,
    Pong,
};

[[nodiscard]] auto to_string(MessageKind kind) -> std::string_view;
[[nodiscard]] auto parse_message_kind(std::string_view name) -> std::optional<MessageKind>;
[[nodiscard]] auto all_message_kinds() -> const std::vector<MessageKind>&;

/// True for the kinds that carry an orchestrator-issued invocation_id.
[[nodiscard]] auto carries_invocation(MessageKind kind) -> bool;

/// One frame on the orchestrator/executor channel.
///
/// The body is a closed, kind-specific JSON object; see validate_message().
struct Message
{
    MessageKind kind = MessageKind::Ping;
    std::string task_id;
    std::optional<std::string> invocation_id;
    nlohmann::json body = nlohmann::json::object();

    friend auto operator==(const Message&, const Message&) -> bool = default;
};

class ProtocolError: public std::runtime_error
{
  public:
    enum class Code
    {
        MalformedFrame,
        UnknownKind,
        SchemaViolation,
    };

    ProtocolError(Code code, std::string field, const std::string& message);

    [[nodiscard]] auto code() const noexcept -> Code { return _code; }
    /// Offending field path (e.g. "invocation_id", "body.args"); empty for whole-frame errors.
    [[nodiscard]] auto field() const noexcept -> const std::string& { return _field; }

  private:
    Code _code;
    std::string _field;
};

[[nodiscard]] auto to_string(ProtocolError::Code code) -> std::string_view;

/// Throws ProtocolError(SchemaViolation) naming the first offending field.
void validate_message(const Message& msg);

/// Canonical wire form: one JSON object, keys sorted, control characters
/// escaped, terminated by '\n'.
[[nodiscard]] auto encode_message(const Message& msg) -> std::string;

/// Accepts one line, with or without its trailing newline.
[[nodiscard]] auto decode_message(std::string_view line) -> Message;

/// Splits a buffer of concatenated frames. A trailing partial line is left in
/// `rest` when provided, otherwise it is an error.
[[nodiscard]] auto decode_stream(std::string_view bytes, std::string* rest = nullptr) -> std::vector<Message>;

/// Replaces every byte that is not part of a well-formed UTF-8 sequence with '?'.
/// Length-preserving, so output caps stay exact.
[[nodiscard]] auto sanitize_utf8(std::string_view text) -> std::string;

// Builders for the common frames.
[[nodiscard]] auto make_message(MessageKind kind,
                                std::string task_id,
                                nlohmann::json body = nlohmann::json::object(),
                                std::optional<std::string> invocation_id = std::nullopt) -> Message;

} // namespace steward::protocol
