// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/protocol/message.hpp>

#include <deque>
#include <iosfwd>
#include <mutex>
#include <string>
#include <vector>

namespace steward::cli
{

inline constexpr std::string_view NonInteractiveReason = "non-interactive session";

struct ApprovalAnswer
{
    bool approve = false;
    std::string reason;
};

struct PlanAnswer
{
    std::string decision = "rejected"; // approved | modified | rejected
    std::vector<std::string> steps;
    std::string reason;
};

/// Text shown before asking for an approval: tool, the exact arguments that
/// will execute, and the policy audit lines.
[[nodiscard]] auto render_approval(const protocol::Message& request) -> std::string;
[[nodiscard]] auto render_plan(const std::vector<std::string>& steps) -> std::string;

/// Where approval and plan decisions come from.
class Steering
{
  public:
    virtual ~Steering() = default;
    virtual auto approve(const protocol::Message& request) -> ApprovalAnswer = 0;
    virtual auto plan(const std::vector<std::string>& steps) -> PlanAnswer = 0;
};

/// Asks on a terminal. When not interactive, denies approvals and rejects
/// plans without asking.
class TerminalSteering final: public Steering
{
  public:
    TerminalSteering(std::istream& in, std::ostream& out, bool interactive);

    auto approve(const protocol::Message& request) -> ApprovalAnswer override;
    auto plan(const std::vector<std::string>& steps) -> PlanAnswer override;

  private:
    auto read_line(std::string& line) -> bool;

    std::istream& _in;
    std::ostream& _out;
    bool _interactive;
};

/// Pre-recorded answers, consumed in order. Once exhausted it falls back to
/// deny and reject.
class ScriptedSteering final: public Steering
{
  public:
    ScriptedSteering(std::vector<ApprovalAnswer> approvals, std::vector<PlanAnswer> plans);

    auto approve(const protocol::Message& request) -> ApprovalAnswer override;
    auto plan(const std::vector<std::string>& steps) -> PlanAnswer override;

    /// Everything render_approval/render_plan produced, in order.
    [[nodiscard]] auto transcript() const -> std::vector<std::string>;

  private:
    mutable std::mutex _mutex;
    std::deque<ApprovalAnswer> _approvals;
    std::deque<PlanAnswer> _plans;
    std::vector<std::string> _transcript;
};

/// Applies one line of the plan editor ("d N", "e N text", "i N text",
/// "a text") to `steps`. Returns false for a line it does not understand.
auto edit_plan(std::vector<std::string>& steps, const std::string& command) -> bool;

} // namespace steward::cli
