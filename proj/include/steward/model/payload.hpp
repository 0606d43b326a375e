// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/maestro/task_record.hpp>
#include <steward/model/turn.hpp>
#include <steward/protocol/bodies.hpp>
#include <steward/protocol/manifest.hpp>

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace steward::model
{

/// The rule the shipped system prompt states about editing. Kept here so the
/// prompt asset can be checked against it.
inline constexpr std::string_view ReadBeforeEditRule =
    "Always invoke the read tool on a file before calling edit on it, and read it again if it may have changed since.";

[[nodiscard]] auto system_prompt() -> std::string_view;
/// Appended to the system prompt while a planning task has no accepted plan.
[[nodiscard]] auto planning_prompt() -> std::string_view;

/// Everything a driver sees for one model call.
struct ModelPayload
{
    std::string task_id;
    std::string system_prompt;
    std::vector<HistoryEntry> history;
    protocol::BootstrapMetadata bootstrap;
    protocol::ToolManifest manifest;
    ThinkingEffort effort = ThinkingEffort::Medium;
    bool planning_requested = false;
};

[[nodiscard]] auto to_json(const ModelPayload& payload) -> nlohmann::json;

class PayloadError: public std::runtime_error
{
  public:
    PayloadError(): std::runtime_error("BootstrapMissing: payload requested before bootstrap completed") {}
};

/// Throws PayloadError if the task has no bootstrap metadata yet.
[[nodiscard]] auto assemble_payload(const maestro::TaskRecord& task,
                                    const protocol::ToolManifest& manifest,
                                    ThinkingEffort effort,
                                    bool planning_requested) -> ModelPayload;

} // namespace steward::model
