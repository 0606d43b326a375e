// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/protocol/bodies.hpp>
#include <steward/protocol/manifest.hpp>

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace steward::tools
{

/// Lowercase hex SHA-256 of raw bytes.
[[nodiscard]] auto sha256_hex(std::string_view bytes) -> std::string;

inline constexpr std::string_view TruncationMarker = "\n[... truncated by steward: content exceeds the read limit ...]\n";

struct ToolLimits
{
    std::size_t read_cap = 1024 * 1024;
    std::size_t output_cap = 200 * 1024; // per stream
    int default_timeout_seconds = 120;
    /// How long to keep reading after the shell exits while a background
    /// child still holds its output open.
    std::chrono::milliseconds drain_grace { 200 };
};

/// Payload: path, content, hash (of the raw bytes), size, truncated.
[[nodiscard]] auto tool_read(const std::filesystem::path& working_dir, const std::string& path, const ToolLimits& limits = {})
    -> protocol::ToolOutcome;

struct EditSpec
{
    std::string file_name;
    std::string old_string;
    std::string new_string;
};

/// Non-overlapping occurrences of `needle` (non-empty) in `haystack`.
[[nodiscard]] auto count_occurrences(std::string_view haystack, std::string_view needle) -> std::size_t;

/// Replaces the single occurrence of old_string. With `enforce` set and an
/// `expected_hash` given, refuses (StaleRead) when the file no longer matches.
/// Payload: file_name, summary, pre_hash, post_hash, offset, bytes_removed,
/// bytes_inserted. Error payloads carry pre_hash whenever the file was read.
[[nodiscard]] auto tool_edit(const std::filesystem::path& working_dir,
                             const EditSpec& spec,
                             const std::optional<std::string>& expected_hash = std::nullopt,
                             bool enforce = false) -> protocol::ToolOutcome;

struct ShellSpec
{
    std::string command;
    int timeout_seconds = 120;
};

/// Payload: exit_code, stdout, stderr, stdout_truncated, stderr_truncated,
/// duration_ms. On TimedOut the payload holds the partial output.
[[nodiscard]] auto tool_shell(const std::filesystem::path& working_dir,
                              const ShellSpec& spec,
                              const ToolLimits& limits = {}) -> protocol::ToolOutcome;

/// Directories never listed in the project tree.
[[nodiscard]] auto is_excluded_directory(std::string_view name) -> bool;

[[nodiscard]] auto bootstrap_probe(const std::filesystem::path& working_dir,
                                   const protocol::BootstrapLimits& limits = {}) -> protocol::BootstrapMetadata;

/// Runs a dispatched call with the matching tool.
[[nodiscard]] auto run_tool(const std::filesystem::path& working_dir,
                            const protocol::ToolCall& call,
                            const protocol::DispatchOptions& options,
                            const ToolLimits& limits = {}) -> protocol::ToolOutcome;

} // namespace steward::tools
