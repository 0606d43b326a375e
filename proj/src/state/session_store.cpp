// SPDX-License-Identifier: Apache-2.0
#include <steward/state/session_store.hpp>
#include <steward/state/timeline_event.hpp>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

namespace steward::state
{

namespace fs = std::filesystem;
using nlohmann::json;

auto encode_snapshot(const SessionSnapshot& snapshot) -> std::string
{
    return json {
        { "task_id", snapshot.task_id },
        { "last_seq", snapshot.last_seq },
        { "record", snapshot.record },
    }
        .dump();
}

auto decode_snapshot(const std::string& text) -> SessionSnapshot
{
    try
    {
        auto const j = json::parse(text);
        return SessionSnapshot {
            .task_id = j.at("task_id").get<std::string>(),
            .record = j.at("record").get<std::string>(),
            .last_seq = j.at("last_seq").get<std::uint64_t>(),
        };
    }
    catch (const json::exception& e)
    {
        throw StateError(StateError::Code::StorageUnavailable, fmt::format("unreadable snapshot: {}", e.what()));
    }
}

void MemoryDurableTier::put(const SessionSnapshot& snapshot)
{
    auto lock = std::lock_guard(_mutex);
    _entries[snapshot.task_id] = snapshot;
}

auto MemoryDurableTier::get(const std::string& task_id) -> std::optional<SessionSnapshot>
{
    auto lock = std::lock_guard(_mutex);
    auto it = _entries.find(task_id);
    if (it == _entries.end())
        return std::nullopt;
    return it->second;
}

FileDurableTier::FileDurableTier(fs::path directory, bool sync): _directory(std::move(directory)), _sync(sync)
{
    auto ec = std::error_code {};
    fs::create_directories(_directory, ec);
    if (ec)
        throw StateError(StateError::Code::StorageUnavailable,
                         fmt::format("cannot create {}: {}", _directory.string(), ec.message()));
}

auto FileDurableTier::path_for(const std::string& task_id) const -> fs::path
{
    return _directory / (task_id + ".snapshot");
}

void FileDurableTier::put(const SessionSnapshot& snapshot)
{
    auto const target = path_for(snapshot.task_id);
    auto const temp = fs::path(target.string() + ".tmp");
    auto const text = encode_snapshot(snapshot);

    auto fail = [&](const char* what) {
        throw StateError(StateError::Code::StorageUnavailable,
                         fmt::format("{} {}: {}", what, temp.string(), std::strerror(errno)));
    };

    auto fd = ::open(temp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0)
        fail("cannot open");
    auto written = std::size_t { 0 };
    while (written < text.size())
    {
        auto n = ::write(fd, text.data() + written, text.size() - written);
        if (n < 0 && errno == EINTR)
            continue;
        if (n < 0)
        {
            ::close(fd);
            fail("cannot write");
        }
        written += static_cast<std::size_t>(n);
    }
    if (_sync)
        ::fdatasync(fd);
    ::close(fd);
    if (::rename(temp.c_str(), target.c_str()) != 0)
        fail("cannot rename");
}

auto FileDurableTier::get(const std::string& task_id) -> std::optional<SessionSnapshot>
{
    auto in = std::ifstream(path_for(task_id), std::ios::binary);
    if (!in)
        return std::nullopt;
    auto buffer = std::stringstream {};
    buffer << in.rdbuf();
    return decode_snapshot(buffer.str());
}

TwoTierStore::TwoTierStore(std::unique_ptr<DurableTier> durable, std::chrono::milliseconds ttl, Clock clock):
    _durable(std::move(durable)), _ttl(ttl), _clock(std::move(clock))
{
    if (!_clock)
        _clock = [] { return std::chrono::steady_clock::now(); };
}

void TwoTierStore::put(const SessionSnapshot& snapshot)
{
    auto lock = std::lock_guard(_mutex);
    _durable->put(snapshot);
    _cache[snapshot.task_id] = CacheEntry { snapshot, _clock() + _ttl };
}

auto TwoTierStore::get(const std::string& task_id) -> std::optional<SessionSnapshot>
{
    auto lock = std::lock_guard(_mutex);
    auto const now = _clock();
    if (auto it = _cache.find(task_id); it != _cache.end())
    {
        if (now < it->second.expires)
        {
            _lastSource = SessionSource::Cache;
            return it->second.snapshot;
        }
        _cache.erase(it);
    }

    auto snapshot = _durable->get(task_id);
    if (!snapshot)
    {
        _lastSource = SessionSource::Absent;
        return std::nullopt;
    }
    _cache[task_id] = CacheEntry { *snapshot, now + _ttl };
    _lastSource = SessionSource::Durable;
    return snapshot;
}

auto TwoTierStore::last_source() const -> SessionSource
{
    auto lock = std::lock_guard(_mutex);
    return _lastSource;
}

auto TwoTierStore::cached(const std::string& task_id) const -> bool
{
    auto lock = std::lock_guard(_mutex);
    auto it = _cache.find(task_id);
    return it != _cache.end() && _clock() < it->second.expires;
}

void TwoTierStore::expire(const std::string& task_id)
{
    auto lock = std::lock_guard(_mutex);
    if (auto it = _cache.find(task_id); it != _cache.end())
        it->second.expires = _clock() - std::chrono::milliseconds(1);
}

} // namespace steward::state
