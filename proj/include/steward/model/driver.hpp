// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/model/payload.hpp>
#include <steward/model/script.hpp>
#include <steward/model/turn.hpp>

#include <cstddef>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace steward::model
{

class DriverError: public std::runtime_error
{
  public:
    enum class Code
    {
        DriverUnavailable,
        MalformedTurn,
    };

    DriverError(Code code, const std::string& message);

    [[nodiscard]] auto code() const noexcept -> Code { return _code; }

  private:
    Code _code;
};

[[nodiscard]] auto to_string(DriverError::Code code) -> std::string_view;

/// Produces the model's next turn. One call at a time per task; different
/// tasks may call concurrently.
class ModelDriver
{
  public:
    virtual ~ModelDriver() = default;
    virtual auto next(const ModelPayload& payload) -> ModelTurn = 0;
};

/// Plays back a Script in order. Effort is ignored.
class ScriptedDriver final: public ModelDriver
{
  public:
    explicit ScriptedDriver(Script script);

    auto next(const ModelPayload& payload) -> ModelTurn override;

    [[nodiscard]] auto consumed() const -> std::size_t;
    /// Moves the cursor forward, e.g. past turns a resumed task already used.
    void skip(std::size_t entries);

  private:
    mutable std::mutex _mutex;
    Script _script;
    std::size_t _cursor = 0;
};

/// Forwards to another driver and keeps a copy of every payload.
class RecordingDriver final: public ModelDriver
{
  public:
    explicit RecordingDriver(std::shared_ptr<ModelDriver> inner);

    auto next(const ModelPayload& payload) -> ModelTurn override;

    [[nodiscard]] auto payloads() const -> std::vector<ModelPayload>;

  private:
    std::shared_ptr<ModelDriver> _inner;
    mutable std::mutex _mutex;
    std::vector<ModelPayload> _payloads;
};

} // namespace steward::model
