// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace steward::state
{

/// Serialized TaskRecord plus the seq of the last event folded into it.
/// Snapshots are compared byte for byte, so the text is stored verbatim.
struct SessionSnapshot
{
    std::string task_id;
    std::string record; // canonical JSON text
    std::uint64_t last_seq = 0;

    friend auto operator==(const SessionSnapshot&, const SessionSnapshot&) -> bool = default;
};

[[nodiscard]] auto encode_snapshot(const SessionSnapshot& snapshot) -> std::string;
[[nodiscard]] auto decode_snapshot(const std::string& text) -> SessionSnapshot;

/// Durable tier: no expiry.
class DurableTier
{
  public:
    virtual ~DurableTier() = default;
    virtual void put(const SessionSnapshot& snapshot) = 0;
    [[nodiscard]] virtual auto get(const std::string& task_id) -> std::optional<SessionSnapshot> = 0;
};

class MemoryDurableTier final: public DurableTier
{
  public:
    void put(const SessionSnapshot& snapshot) override;
    auto get(const std::string& task_id) -> std::optional<SessionSnapshot> override;

  private:
    std::mutex _mutex;
    std::map<std::string, SessionSnapshot> _entries;
};

/// `<task_id>.snapshot` per task, replaced atomically on every put.
class FileDurableTier final: public DurableTier
{
  public:
    explicit FileDurableTier(std::filesystem::path directory, bool sync = true);

    void put(const SessionSnapshot& snapshot) override;
    auto get(const std::string& task_id) -> std::optional<SessionSnapshot> override;

    [[nodiscard]] auto path_for(const std::string& task_id) const -> std::filesystem::path;

  private:
    std::filesystem::path _directory;
    bool _sync;
};

/// Where a get() was answered from; exposed for tests and diagnostics.
enum class SessionSource
{
    Cache,
    Durable,
    Absent,
};

/// TTL cache in front of a durable tier.
class TwoTierStore
{
  public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;

    static constexpr auto DefaultTtl = std::chrono::hours(24);

    explicit TwoTierStore(std::unique_ptr<DurableTier> durable,
                          std::chrono::milliseconds ttl = DefaultTtl,
                          Clock clock = {});

    /// Durable write first, then the cache.
    void put(const SessionSnapshot& snapshot);
    /// Cache when unexpired, else the durable tier (repopulating the cache).
    [[nodiscard]] auto get(const std::string& task_id) -> std::optional<SessionSnapshot>;

    [[nodiscard]] auto last_source() const -> SessionSource;
    [[nodiscard]] auto cached(const std::string& task_id) const -> bool;
    /// Marks a cache entry as already expired.
    void expire(const std::string& task_id);
    [[nodiscard]] auto ttl() const noexcept -> std::chrono::milliseconds { return _ttl; }

  private:
    struct CacheEntry
    {
        SessionSnapshot snapshot;
        std::chrono::steady_clock::time_point expires;
    };

    std::unique_ptr<DurableTier> _durable;
    std::chrono::milliseconds _ttl;
    Clock _clock;
    mutable std::mutex _mutex;
    std::map<std::string, CacheEntry> _cache;
    SessionSource _lastSource = SessionSource::Absent;
};

} // namespace steward::state
