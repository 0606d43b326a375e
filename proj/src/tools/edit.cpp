// SPDX-License-Identifier: Apache-2.0
#include "file_util.hpp"

#include <steward/tools/tools.hpp>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

namespace steward::tools
{

using nlohmann::json;
using protocol::ToolOutcome;

namespace
{

/// Writes `content` next to `target` and renames it into place, keeping the
/// original permission bits.
auto replace_file(const std::filesystem::path& target, const std::string& content) -> std::optional<std::string>
{
    struct stat st {};
    if (::stat(target.c_str(), &st) != 0)
        return std::string(std::strerror(errno));

    auto temp = target.string() + ".steward-XXXXXX";
    auto fd = ::mkstemp(temp.data());
    if (fd < 0)
        return fmt::format("cannot create temporary file: {}", std::strerror(errno));

    auto fail = [&](const char* what) -> std::optional<std::string> {
        auto const message = fmt::format("{}: {}", what, std::strerror(errno));
        ::close(fd);
        ::unlink(temp.c_str());
        return message;
    };

    auto written = std::size_t { 0 };
    while (written < content.size())
    {
        auto n = ::write(fd, content.data() + written, content.size() - written);
        if (n < 0 && errno == EINTR)
            continue;
        if (n < 0)
            return fail("write failed");
        written += static_cast<std::size_t>(n);
    }
    if (::fchmod(fd, st.st_mode & 07777) != 0)
        return fail("cannot set permissions");
    if (::fsync(fd) != 0)
        return fail("fsync failed");
    ::close(fd);
    if (::rename(temp.c_str(), target.c_str()) != 0)
    {
        auto const message = fmt::format("rename failed: {}", std::strerror(errno));
        ::unlink(temp.c_str());
        return message;
    }
    return std::nullopt;
}

} // namespace

auto count_occurrences(std::string_view haystack, std::string_view needle) -> std::size_t
{
    if (needle.empty())
        return 0;
    auto count = std::size_t { 0 };
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + needle.size()))
        ++count;
    return count;
}

auto tool_edit(const std::filesystem::path& working_dir,
               const EditSpec& spec,
               const std::optional<std::string>& expected_hash,
               bool enforce) -> ToolOutcome
{
    if (spec.file_name.empty())
        return ToolOutcome::failure("InvalidArguments", "file_name must not be empty");
    if (spec.old_string.empty())
        return ToolOutcome::failure(
            "InvalidArguments",
            "old_string must not be empty: copy the exact text to replace from the file's current content");

    auto const full = detail::resolve(working_dir, spec.file_name);
    auto bytes = std::string {};
    if (auto error = detail::read_file(full, spec.file_name, bytes))
    {
        if (error->error_kind == "NotFound")
            return ToolOutcome::failure(
                "FileNotFound",
                fmt::format("{} does not exist, and edit never creates files. Check the path, or create the file "
                            "with shell first.",
                            spec.file_name));
        return *error;
    }

    auto const pre_hash = sha256_hex(bytes);
    auto const hashes = json { { "pre_hash", pre_hash } };

    if (enforce && expected_hash && *expected_hash != pre_hash)
        return ToolOutcome::failure(
            "StaleRead",
            fmt::format("{} changed since it was last read. Read it again and base old_string on the current content.",
                        spec.file_name),
            hashes);

    auto const count = count_occurrences(bytes, spec.old_string);
    if (count == 0)
        return ToolOutcome::failure(
            "OldStringNotFound",
            fmt::format("old_string was not found in {}. The file may differ from what you expect: read it again "
                        "and copy old_string exactly, including whitespace and indentation.",
                        spec.file_name),
            hashes);
    if (count > 1)
        return ToolOutcome::failure(
            "AmbiguousMatch",
            fmt::format("old_string occurs {} times in {}; it must match exactly once. Include more surrounding "
                        "text so that it is unique.",
                        count,
                        spec.file_name),
            hashes);

    auto const offset = bytes.find(spec.old_string);
    auto updated = bytes;
    updated.replace(offset, spec.old_string.size(), spec.new_string);

    if (auto error = replace_file(full, updated))
        return ToolOutcome::failure("WriteFailed",
                                    fmt::format("could not write {}: {}. The file was not changed.", spec.file_name, *error),
                                    hashes);

    return ToolOutcome::success({
        { "file_name", spec.file_name },
        { "summary",
          fmt::format("edited {}: replaced {} bytes with {} bytes at offset {}",
                      spec.file_name,
                      spec.old_string.size(),
                      spec.new_string.size(),
                      offset) },
        { "pre_hash", pre_hash },
        { "post_hash", sha256_hex(updated) },
        { "offset", offset },
        { "bytes_removed", spec.old_string.size() },
        { "bytes_inserted", spec.new_string.size() },
    });
}

} // namespace steward::tools
