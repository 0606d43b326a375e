// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/model/turn.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace steward::model
{

struct ScriptEntry
{
    /// Substring the most recent history entry must contain.
    std::optional<std::string> match;
    ModelTurn respond;
    int line = 0;

    friend auto operator==(const ScriptEntry&, const ScriptEntry&) -> bool = default;
};

struct Script
{
    std::vector<ScriptEntry> entries;
};

class ScriptParseError: public std::runtime_error
{
  public:
    ScriptParseError(int line, const std::string& message);

    [[nodiscard]] auto line() const noexcept -> int { return _line; }

  private:
    int _line;
};

/// One entry per line:
///
///     [match=<substring> ;] final <text>
///     [match=<substring> ;] call <tool> <json-object> [rationale]
///     [match=<substring> ;] plan <step>|<step>|...
///
/// Blank lines and lines starting with '#' are skipped.
[[nodiscard]] auto parse_script(std::string_view text) -> Script;
[[nodiscard]] auto load_script(const std::filesystem::path& path) -> Script;

/// Inverse of parse_script for a single entry.
[[nodiscard]] auto format_entry(const ScriptEntry& entry) -> std::string;

} // namespace steward::model
