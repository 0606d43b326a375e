// SPDX-License-Identifier: Apache-2.0
#include <steward/model/payload.hpp>

namespace steward::model
{

namespace assets
{
    extern const std::string_view system_prompt;
    extern const std::string_view planning_prompt;
} // namespace assets

auto system_prompt() -> std::string_view
{
    return assets::system_prompt;
}

auto planning_prompt() -> std::string_view
{
    return assets::planning_prompt;
}

auto to_json(const ModelPayload& payload) -> nlohmann::json
{
    auto history = nlohmann::json::array();
    for (auto const& entry: payload.history)
        history.push_back(to_json(entry));
    return nlohmann::json {
        { "task_id", payload.task_id },
        { "system_prompt", payload.system_prompt },
        { "history", std::move(history) },
        { "bootstrap", protocol::to_json(payload.bootstrap) },
        { "manifest", protocol::manifest_to_json(payload.manifest) },
        { "effort", to_string(payload.effort) },
        { "planning_requested", payload.planning_requested },
    };
}

auto assemble_payload(const maestro::TaskRecord& task,
                      const protocol::ToolManifest& manifest,
                      ThinkingEffort effort,
                      bool planning_requested) -> ModelPayload
{
    if (!task.bootstrap)
        throw PayloadError();

    auto prompt = std::string(system_prompt());
    if (planning_requested)
    {
        prompt += '\n';
        prompt += planning_prompt();
    }
    return ModelPayload {
        .task_id = task.task_id,
        .system_prompt = std::move(prompt),
        .history = task.history,
        .bootstrap = *task.bootstrap,
        .manifest = manifest,
        .effort = effort,
        .planning_requested = planning_requested,
    };
}

} // namespace steward::model
