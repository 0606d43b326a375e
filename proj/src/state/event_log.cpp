// SPDX-License-Identifier: Apache-2.0
#include <steward/state/event_log.hpp>

#include <fmt/format.h>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>

namespace steward::state
{

namespace fs = std::filesystem;

void MemoryEventStore::persist(const TimelineEvent& event)
{
    auto lock = std::lock_guard(_mutex);
    _events[event.task_id].push_back(event);
}

auto MemoryEventStore::load(const std::string& task_id) -> std::vector<TimelineEvent>
{
    auto lock = std::lock_guard(_mutex);
    auto it = _events.find(task_id);
    return it == _events.end() ? std::vector<TimelineEvent> {} : it->second;
}

auto MemoryEventStore::task_ids() -> std::vector<std::string>
{
    auto lock = std::lock_guard(_mutex);
    auto ids = std::vector<std::string> {};
    for (auto const& [id, events]: _events)
        ids.push_back(id);
    return ids;
}

FileEventStore::FileEventStore(fs::path directory, bool sync): _directory(std::move(directory)), _sync(sync)
{
    auto ec = std::error_code {};
    fs::create_directories(_directory, ec);
    if (ec)
        throw StateError(StateError::Code::StorageUnavailable,
                         fmt::format("cannot create {}: {}", _directory.string(), ec.message()));
}

auto FileEventStore::path_for(const std::string& task_id) const -> fs::path
{
    return _directory / (task_id + ".timeline");
}

void FileEventStore::persist(const TimelineEvent& event)
{
    auto const line = protocol::encode_message(to_message(event));
    auto const path = path_for(event.task_id);

    auto fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0)
        throw StateError(StateError::Code::StorageUnavailable,
                         fmt::format("cannot open {}: {}", path.string(), std::strerror(errno)));

    auto written = std::size_t { 0 };
    while (written < line.size())
    {
        auto n = ::write(fd, line.data() + written, line.size() - written);
        if (n < 0 && errno == EINTR)
            continue;
        if (n < 0)
        {
            auto const err = errno;
            ::close(fd);
            throw StateError(StateError::Code::StorageUnavailable,
                             fmt::format("write to {} failed: {}", path.string(), std::strerror(err)));
        }
        written += static_cast<std::size_t>(n);
    }
    if (_sync)
        ::fdatasync(fd);
    ::close(fd);
}

auto FileEventStore::load(const std::string& task_id) -> std::vector<TimelineEvent>
{
    auto events = std::vector<TimelineEvent> {};
    auto in = std::ifstream(path_for(task_id));
    if (!in)
        return events;

    auto line = std::string {};
    auto lineNo = 0;
    while (std::getline(in, line))
    {
        ++lineNo;
        try
        {
            events.push_back(event_from_message(protocol::decode_message(line)));
        }
        catch (const std::exception& e)
        {
            throw StateError(StateError::Code::CorruptTimeline,
                             fmt::format("{}:{}: {}", path_for(task_id).string(), lineNo, e.what()));
        }
    }
    check_timeline(events);
    return events;
}

auto FileEventStore::task_ids() -> std::vector<std::string>
{
    auto ids = std::vector<std::string> {};
    for (auto const& entry: fs::directory_iterator(_directory))
        if (entry.path().extension() == ".timeline")
            ids.push_back(entry.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

EventLog::EventLog(std::unique_ptr<EventStore> store, Clock clock): _store(std::move(store)), _clock(std::move(clock))
{
    if (!_clock)
    {
        _clock = [] {
            return std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                .count();
        };
    }
}

auto EventLog::loaded(const std::string& task_id) const -> const std::vector<TimelineEvent>&
{
    auto it = _cache.find(task_id);
    if (it == _cache.end())
        it = _cache.emplace(task_id, _store->load(task_id)).first;
    return it->second;
}

auto EventLog::append(const std::string& task_id, EventKind kind, nlohmann::json payload) -> std::uint64_t
{
    return append_event(task_id, kind, std::move(payload)).seq;
}

auto EventLog::append_event(const std::string& task_id, EventKind kind, nlohmann::json payload) -> TimelineEvent
{
    auto lock = std::unique_lock(_mutex);
    auto const& existing = loaded(task_id);
    if (!existing.empty() && is_terminal(existing.back().kind))
        throw StateError(StateError::Code::TaskTerminated,
                         fmt::format("task {} already ended with {}", task_id, to_string(existing.back().kind)));

    auto event = TimelineEvent {
        .task_id = task_id,
        .seq = existing.size() + 1,
        .timestamp_ms = _clock(),
        .kind = kind,
        .payload = std::move(payload),
    };
    _store->persist(event);
    _cache[task_id].push_back(event);
    lock.unlock();
    _appended.notify_all();
    return event;
}

auto EventLog::read(const std::string& task_id, std::uint64_t from_seq) const -> std::vector<TimelineEvent>
{
    auto lock = std::lock_guard(_mutex);
    auto const& events = loaded(task_id);
    auto const start = from_seq <= 1 ? std::size_t { 0 } : static_cast<std::size_t>(from_seq - 1);
    if (start >= events.size())
        return {};
    return { events.begin() + static_cast<std::ptrdiff_t>(start), events.end() };
}

auto EventLog::contains(const std::string& task_id) const -> bool
{
    auto lock = std::lock_guard(_mutex);
    return !loaded(task_id).empty();
}

auto EventLog::last_seq(const std::string& task_id) const -> std::uint64_t
{
    auto lock = std::lock_guard(_mutex);
    return loaded(task_id).size();
}

auto EventLog::is_closed(const std::string& task_id) const -> bool
{
    auto lock = std::lock_guard(_mutex);
    auto const& events = loaded(task_id);
    return !events.empty() && is_terminal(events.back().kind);
}

auto EventLog::task_ids() const -> std::vector<std::string>
{
    auto lock = std::lock_guard(_mutex);
    auto ids = _store->task_ids();
    for (auto const& [id, events]: _cache)
        if (!events.empty() && std::find(ids.begin(), ids.end(), id) == ids.end())
            ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

auto EventLog::wait_for_events(const std::string& task_id,
                               std::uint64_t after_seq,
                               std::chrono::milliseconds timeout) const -> bool
{
    auto lock = std::unique_lock(_mutex);
    _appended.wait_for(lock, timeout, [&] {
        auto const& events = loaded(task_id);
        return events.size() > after_seq || (!events.empty() && is_terminal(events.back().kind));
    });
    return loaded(task_id).size() > after_seq;
}

void check_timeline(const std::vector<TimelineEvent>& events)
{
    for (auto i = std::size_t { 0 }; i < events.size(); ++i)
    {
        auto const expected = i + 1;
        if (events[i].seq != expected)
        {
            auto const what = events[i].seq < expected ? fmt::format("duplicate seq {}", events[i].seq)
                                                       : fmt::format("gap at {}", expected);
            throw StateError(StateError::Code::CorruptTimeline, what);
        }
        if (is_terminal(events[i].kind) && i + 1 != events.size())
            throw StateError(StateError::Code::CorruptTimeline,
                             fmt::format("terminal event {} at seq {} is not last", to_string(events[i].kind), expected));
    }
}

} // namespace steward::state
