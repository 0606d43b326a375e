// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/state/timeline_event.hpp>

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace steward::state
{

/// Persistence backend for timelines.
class EventStore
{
  public:
    virtual ~EventStore() = default;

    /// Must be durable when it returns.
    virtual void persist(const TimelineEvent& event) = 0;
    /// Events of one task in seq order; empty if unknown.
    [[nodiscard]] virtual auto load(const std::string& task_id) -> std::vector<TimelineEvent> = 0;
    [[nodiscard]] virtual auto task_ids() -> std::vector<std::string> = 0;
};

class MemoryEventStore final: public EventStore
{
  public:
    void persist(const TimelineEvent& event) override;
    auto load(const std::string& task_id) -> std::vector<TimelineEvent> override;
    auto task_ids() -> std::vector<std::string> override;

  private:
    std::mutex _mutex;
    std::map<std::string, std::vector<TimelineEvent>> _events;
};

/// One `<task_id>.timeline` file per task, one encoded TaskUpdate frame per line.
class FileEventStore final: public EventStore
{
  public:
    explicit FileEventStore(std::filesystem::path directory, bool sync = true);

    void persist(const TimelineEvent& event) override;
    auto load(const std::string& task_id) -> std::vector<TimelineEvent> override;
    auto task_ids() -> std::vector<std::string> override;

    [[nodiscard]] auto path_for(const std::string& task_id) const -> std::filesystem::path;

  private:
    std::filesystem::path _directory;
    bool _sync;
};

/// Append-only, per-task, gapless event timeline with live-tail support.
///
/// Safe for concurrent use; per-task ordering comes from the single loop that
/// writes each task.
class EventLog
{
  public:
    using Clock = std::function<std::int64_t()>; // epoch milliseconds

    explicit EventLog(std::unique_ptr<EventStore> store, Clock clock = {});

    /// Returns the new event's seq (1-based). Throws StateError(TaskTerminated)
    /// once the task has a terminal event.
    auto append(const std::string& task_id, EventKind kind, nlohmann::json payload) -> std::uint64_t;
    /// Same as append(), returning the stored event.
    auto append_event(const std::string& task_id, EventKind kind, nlohmann::json payload) -> TimelineEvent;

    /// Events with seq >= from_seq, ascending. Empty for unknown tasks.
    [[nodiscard]] auto read(const std::string& task_id, std::uint64_t from_seq = 1) const
        -> std::vector<TimelineEvent>;

    [[nodiscard]] auto contains(const std::string& task_id) const -> bool;
    [[nodiscard]] auto last_seq(const std::string& task_id) const -> std::uint64_t;
    [[nodiscard]] auto is_closed(const std::string& task_id) const -> bool;
    [[nodiscard]] auto task_ids() const -> std::vector<std::string>;

    /// Blocks until the task has an event with seq > after_seq, or the task is
    /// closed, or the timeout passes. Returns true if new events exist.
    auto wait_for_events(const std::string& task_id, std::uint64_t after_seq, std::chrono::milliseconds timeout) const
        -> bool;

  private:
    auto loaded(const std::string& task_id) const -> const std::vector<TimelineEvent>&;

    std::unique_ptr<EventStore> _store;
    Clock _clock;
    mutable std::mutex _mutex;
    mutable std::condition_variable _appended;
    mutable std::map<std::string, std::vector<TimelineEvent>> _cache;
};

/// Verifies seq is exactly 1..N and at most one terminal event, in last
/// position. Throws StateError(CorruptTimeline).
void check_timeline(const std::vector<TimelineEvent>& events);

} // namespace steward::state
