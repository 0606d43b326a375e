// SPDX-License-Identifier: Apache-2.0
#include "process.hpp"

#include <steward/protocol/message.hpp>
#include <steward/tools/tools.hpp>

#include <fmt/format.h>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

namespace steward::tools
{

namespace detail
{

namespace
{

using Clock = std::chrono::steady_clock;

struct Stream
{
    int fd = -1;
    std::string* data = nullptr;
    bool* truncated = nullptr;
};

/// Reads whatever is available; false on EOF or error.
auto drain(Stream& s, std::size_t cap) -> bool
{
    auto buffer = std::array<char, 16384> {};
    while (true)
    {
        auto n = ::read(s.fd, buffer.data(), buffer.size());
        if (n > 0)
        {
            auto const room = cap > s.data->size() ? cap - s.data->size() : 0;
            auto const take = std::min(room, static_cast<std::size_t>(n));
            s.data->append(buffer.data(), take);
            if (take < static_cast<std::size_t>(n))
                *s.truncated = true;
            continue;
        }
        if (n < 0 && errno == EINTR)
            continue;
        if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK))
            return true;
        return false;
    }
}

auto decode_status(int status) -> int
{
    if (WIFEXITED(status))
        return WEXITSTATUS(status);
    if (WIFSIGNALED(status))
        return 128 + WTERMSIG(status);
    return -1;
}

} // namespace

auto run_process(const std::filesystem::path& working_dir,
                 const std::vector<std::string>& argv,
                 std::chrono::milliseconds timeout,
                 std::size_t cap,
                 std::chrono::milliseconds drain_grace) -> ProcessResult
{
    auto result = ProcessResult {};
    auto const started = Clock::now();

    int outPipe[2];
    int errPipe[2];
    if (::pipe2(outPipe, O_CLOEXEC) != 0)
    {
        result.spawn_error = fmt::format("pipe: {}", std::strerror(errno));
        return result;
    }
    if (::pipe2(errPipe, O_CLOEXEC) != 0)
    {
        result.spawn_error = fmt::format("pipe: {}", std::strerror(errno));
        ::close(outPipe[0]);
        ::close(outPipe[1]);
        return result;
    }

    auto args = std::vector<char*> {};
    for (auto const& a: argv)
        args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    auto const dir = working_dir.string();

    auto const pid = ::fork();
    if (pid < 0)
    {
        result.spawn_error = fmt::format("fork: {}", std::strerror(errno));
        for (auto fd: { outPipe[0], outPipe[1], errPipe[0], errPipe[1] })
            ::close(fd);
        return result;
    }
    if (pid == 0)
    {
        // Child: async-signal-safe calls only.
        ::setpgid(0, 0);
        struct sigaction dfl {};
        dfl.sa_handler = SIG_DFL;
        ::sigaction(SIGPIPE, &dfl, nullptr);
        sigset_t none;
        ::sigemptyset(&none);
        ::sigprocmask(SIG_SETMASK, &none, nullptr);

        auto devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0)
            ::dup2(devnull, 0);
        ::dup2(outPipe[1], 1);
        ::dup2(errPipe[1], 2);
        if (::chdir(dir.c_str()) != 0)
        {
            constexpr char msg[] = "steward: cannot enter working directory\n";
            [[maybe_unused]] auto n = ::write(2, msg, sizeof(msg) - 1);
            ::_exit(127);
        }
        ::execv(args[0], args.data());
        constexpr char msg[] = "steward: exec failed\n";
        [[maybe_unused]] auto n = ::write(2, msg, sizeof(msg) - 1);
        ::_exit(127);
    }

    ::setpgid(pid, pid);
    ::close(outPipe[1]);
    ::close(errPipe[1]);
    ::fcntl(outPipe[0], F_SETFL, O_NONBLOCK);
    ::fcntl(errPipe[0], F_SETFL, O_NONBLOCK);
    result.spawned = true;

    auto streams = std::array {
        Stream { outPipe[0], &result.out, &result.out_truncated },
        Stream { errPipe[0], &result.err, &result.err_truncated },
    };
    auto open = std::array { true, true };
    auto const deadline = started + timeout;
    auto exited = false;
    auto status = 0;
    auto exitDeadline = Clock::time_point {};

    while (open[0] || open[1])
    {
        auto const now = Clock::now();
        if (!exited && now >= deadline)
        {
            result.timed_out = true;
            break;
        }
        if (exited && now >= exitDeadline)
            break;

        auto const until = exited ? exitDeadline : deadline;
        auto const slice = std::min<std::chrono::milliseconds>(
            std::chrono::duration_cast<std::chrono::milliseconds>(until - now) + std::chrono::milliseconds(1),
            std::chrono::milliseconds(50));

        auto fds = std::array<pollfd, 2> {};
        auto count = 0;
        for (auto i = 0; i < 2; ++i)
            if (open[i])
                fds[count++] = pollfd { streams[i].fd, POLLIN, 0 };
        ::poll(fds.data(), count, static_cast<int>(slice.count()));

        for (auto i = 0; i < 2; ++i)
            if (open[i] && !drain(streams[i], cap))
                open[i] = false;

        if (!exited && ::waitpid(pid, &status, WNOHANG) == pid)
        {
            exited = true;
            exitDeadline = Clock::now() + drain_grace;
        }
    }

    if (result.timed_out)
    {
        ::kill(-pid, SIGTERM);
        auto const graceEnd = Clock::now() + std::chrono::seconds(1);
        while (Clock::now() < graceEnd && ::waitpid(pid, &status, WNOHANG) != pid)
            ::usleep(10'000);
        ::kill(-pid, SIGKILL);
        ::waitpid(pid, &status, WNOHANG);
        for (auto i = 0; i < 2; ++i)
            if (open[i])
                drain(streams[i], cap);
    }
    else
    {
        if (!exited)
            ::waitpid(pid, &status, 0);
        result.exit_code = decode_status(status);
    }
    // Background children left in the group do not outlive the call.
    ::kill(-pid, SIGKILL);
    if (result.timed_out)
        while (::waitpid(pid, &status, 0) < 0 && errno == EINTR)
            ;

    ::close(outPipe[0]);
    ::close(errPipe[0]);
    result.duration = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started);
    return result;
}

} // namespace detail

using nlohmann::json;
using protocol::ToolOutcome;

auto tool_shell(const std::filesystem::path& working_dir, const ShellSpec& spec, const ToolLimits& limits)
    -> ToolOutcome
{
    if (spec.command.find_first_not_of(" \t\r\n") == std::string::npos)
        return ToolOutcome::failure("InvalidArguments", "command must not be empty, e.g. shell(command=\"make test\")");
    if (spec.timeout_seconds <= 0)
        return ToolOutcome::failure("InvalidArguments",
                                    fmt::format("timeout_seconds must be a positive integer, got {}", spec.timeout_seconds));

    auto const r = detail::run_process(working_dir,
                                       { "/bin/sh", "-c", spec.command },
                                       std::chrono::seconds(spec.timeout_seconds),
                                       limits.output_cap,
                                       limits.drain_grace);
    if (!r.spawned)
        return ToolOutcome::failure("SpawnFailed", fmt::format("could not start /bin/sh: {}", r.spawn_error));

    auto payload = json {
        { "exit_code", r.timed_out ? json(nullptr) : json(r.exit_code) },
        { "stdout", protocol::sanitize_utf8(r.out) },
        { "stderr", protocol::sanitize_utf8(r.err) },
        { "stdout_truncated", r.out_truncated },
        { "stderr_truncated", r.err_truncated },
        { "duration_ms", r.duration.count() },
    };
    if (r.timed_out)
        return ToolOutcome::failure(
            "TimedOut",
            fmt::format("command did not finish within {} s and was terminated; partial output is included. Use a "
                        "larger timeout_seconds or a faster command.",
                        spec.timeout_seconds),
            std::move(payload));
    return ToolOutcome::success(std::move(payload));
}

} // namespace steward::tools
