// SPDX-License-Identifier: Apache-2.0
#include <steward/model/driver.hpp>

#include <fmt/format.h>

#include <algorithm>

namespace steward::model
{

DriverError::DriverError(Code code, const std::string& message):
    std::runtime_error(fmt::format("{}: {}", to_string(code), message)), _code(code)
{
}

auto to_string(DriverError::Code code) -> std::string_view
{
    switch (code)
    {
        case DriverError::Code::DriverUnavailable: return "DriverUnavailable";
        case DriverError::Code::MalformedTurn: return "MalformedTurn";
    }
    return "?";
}

ScriptedDriver::ScriptedDriver(Script script): _script(std::move(script))
{
}

auto ScriptedDriver::next(const ModelPayload& payload) -> ModelTurn
{
    auto lock = std::lock_guard(_mutex);
    if (_cursor >= _script.entries.size())
        throw DriverError(DriverError::Code::DriverUnavailable,
                          fmt::format("script exhausted after {} entries", _script.entries.size()));

    auto const& entry = _script.entries[_cursor++];
    if (entry.match)
    {
        auto const last = payload.history.empty() ? std::string {} : payload.history.back().content;
        if (last.find(*entry.match) == std::string::npos)
            throw DriverError(DriverError::Code::MalformedTurn,
                              fmt::format("script line {} expects the last history entry to contain '{}'",
                                          entry.line,
                                          *entry.match));
    }
    if (payload.planning_requested && !std::holds_alternative<PlanProposal>(entry.respond))
        throw DriverError(DriverError::Code::MalformedTurn,
                          fmt::format("script line {} is not a plan but planning was requested", entry.line));
    return entry.respond;
}

auto ScriptedDriver::consumed() const -> std::size_t
{
    auto lock = std::lock_guard(_mutex);
    return _cursor;
}

void ScriptedDriver::skip(std::size_t entries)
{
    auto lock = std::lock_guard(_mutex);
    _cursor = std::min(_script.entries.size(), _cursor + entries);
}

RecordingDriver::RecordingDriver(std::shared_ptr<ModelDriver> inner): _inner(std::move(inner))
{
}

auto RecordingDriver::next(const ModelPayload& payload) -> ModelTurn
{
    {
        auto lock = std::lock_guard(_mutex);
        _payloads.push_back(payload);
    }
    return _inner->next(payload);
}

auto RecordingDriver::payloads() const -> std::vector<ModelPayload>
{
    auto lock = std::lock_guard(_mutex);
    return _payloads;
}

} // namespace steward::model
