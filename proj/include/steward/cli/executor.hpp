// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/cli/channel.hpp>
#include <steward/cli/steering.hpp>
#include <steward/maestro/task_record.hpp>
#include <steward/tools/tools.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace steward::cli
{

inline constexpr int ExitCompleted = 0;
inline constexpr int ExitFailed = 1;
inline constexpr int ExitCancelled = 2;
inline constexpr int ExitTransport = 3;

/// 0, 1, 2 for Completed, Failed, Cancelled; nullopt for live statuses.
[[nodiscard]] auto exit_code_for(maestro::TaskStatus status) -> std::optional<int>;

/// ToolResult frames of completed invocations. With a file, entries survive
/// an executor restart, so a re-dispatch is answered without running the
/// tool a second time.
class InvocationCache
{
  public:
    InvocationCache() = default;
    explicit InvocationCache(std::filesystem::path file);

    [[nodiscard]] auto find(const std::string& invocation_id) const -> std::optional<protocol::Message>;
    /// Durable before it returns when backed by a file.
    void store(const protocol::Message& result);
    [[nodiscard]] auto size() const -> std::size_t;

  private:
    std::filesystem::path _file;
    mutable std::mutex _mutex;
    std::map<std::string, protocol::Message> _results;
};

/// Default location of a task's cache: $STEWARD_CACHE_DIR, else
/// $XDG_STATE_HOME/steward, else ~/.local/state/steward.
[[nodiscard]] auto default_cache_file(const std::string& task_id) -> std::filesystem::path;

enum class FaultPoint
{
    Received, // a frame arrived, nothing done yet
    Executed, // a tool ran and its result is cached but not sent
};

/// Test hook: returning true simulates a crash at that point.
using FaultHook = std::function<bool(FaultPoint, const protocol::Message&)>;

struct ExecutorOptions
{
    std::filesystem::path working_dir = ".";
    tools::ToolLimits limits;
    std::ostream* progress = nullptr;
    FaultHook fault;
};

/// What the executor does with each inbound frame; no I/O besides tools and
/// steering.
class ExecutorCore
{
  public:
    struct Reaction
    {
        std::vector<protocol::Message> replies;
        bool crash = false;
    };

    ExecutorCore(std::string task_id, ExecutorOptions options, Steering& steering, InvocationCache& cache);

    auto handle(const protocol::Message& msg) -> Reaction;

    [[nodiscard]] auto task_id() const -> const std::string& { return _taskId; }
    [[nodiscard]] auto last_seq() const -> std::uint64_t { return _lastSeq; }
    [[nodiscard]] auto terminal() const -> std::optional<maestro::TaskStatus> { return _terminal; }
    [[nodiscard]] auto final_text() const -> const std::string& { return _finalText; }
    /// Tools actually run, excluding replays served from the cache.
    [[nodiscard]] auto executed() const -> std::size_t { return _executed; }
    [[nodiscard]] auto replayed() const -> std::size_t { return _replayed; }

  private:
    void print(const std::string& line);

    std::string _taskId;
    ExecutorOptions _options;
    Steering& _steering;
    InvocationCache& _cache;
    std::uint64_t _lastSeq = 0;
    std::optional<maestro::TaskStatus> _terminal;
    std::string _finalText;
    std::size_t _executed = 0;
    std::size_t _replayed = 0;
};

enum class SessionEnd
{
    Terminal,
    Disconnected,
    Crashed,
};

/// Pumps one connection until the task ends or the connection drops. Pings
/// are answered from the reader thread even while a tool runs.
auto run_session(Connection& conn, ExecutorCore& core) -> SessionEnd;

} // namespace steward::cli
