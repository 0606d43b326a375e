// SPDX-License-Identifier: Apache-2.0
#include <steward/safety/shell_classifier.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <span>
#include <stdexcept>
#include <unordered_set>

namespace steward::safety
{

namespace
{

struct Word
{
    std::string text;
    bool quoted = false;
};

struct Redirect
{
    std::string op;
    std::string target;
};

struct RawSegment
{
    std::vector<Word> words;
    std::vector<Redirect> redirects;
    bool opaque = false; // command/process substitution or grouping
};

class LexError: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

// Tokenizer for the subset of POSIX shell syntax that matters for
// classification. It never evaluates anything.
class Lexer
{
  public:
    explicit Lexer(std::string_view input): _in(input) {}

    auto run() -> std::vector<RawSegment>
    {
        while (_pos < _in.size())
        {
            auto const c = _in[_pos];
            switch (c)
            {
                case ' ':
                case '\t':
                case '\r':
                    flushWord();
                    ++_pos;
                    break;
                case '\n':
                case ';':
                    endSegment();
                    ++_pos;
                    break;
                case '&':
                    if (peek(1) == '>')
                    {
                        flushWord();
                        _pos += 2;
                        auto op = std::string("&>");
                        if (peek(0) == '>')
                        {
                            op += '>';
                            ++_pos;
                        }
                        beginRedirect(std::move(op));
                    }
                    else
                    {
                        endSegment();
                        _pos += peek(1) == '&' ? 2 : 1;
                    }
                    break;
                case '|':
                    endSegment();
                    _pos += (peek(1) == '|' || peek(1) == '&') ? 2 : 1;
                    break;
                case '>':
                case '<': lexRedirect(); break;
                case '(':
                case ')':
                    flushWord();
                    _segment.opaque = true;
                    ++_pos;
                    break;
                case '`':
                    _segment.opaque = true;
                    appendUntilBacktick();
                    break;
                case '$': lexDollar(); break;
                case '\'': lexSingleQuoted(); break;
                case '"': lexDoubleQuoted(); break;
                case '\\':
                    _inWord = true;
                    if (_pos + 1 < _in.size())
                    {
                        if (_in[_pos + 1] != '\n')
                        {
                            _word.push_back(_in[_pos + 1]);
                            _wordQuoted = true;
                        }
                        _pos += 2;
                    }
                    else
                    {
                        _word.push_back('\\');
                        ++_pos;
                    }
                    break;
                case '#':
                    if (!_inWord)
                    {
                        while (_pos < _in.size() && _in[_pos] != '\n')
                            ++_pos;
                        break;
                    }
                    [[fallthrough]];
                default:
                    _inWord = true;
                    _word.push_back(c);
                    ++_pos;
                    break;
            }
        }
        endSegment();
        return std::move(_segments);
    }

  private:
    [[nodiscard]] auto peek(std::size_t offset) const -> char
    {
        return _pos + offset < _in.size() ? _in[_pos + offset] : '\0';
    }

    void flushWord()
    {
        if (!_inWord)
            return;
        if (_pendingRedirect)
        {
            _segment.redirects.push_back({ std::move(*_pendingRedirect), std::move(_word) });
            _pendingRedirect.reset();
        }
        else
        {
            _segment.words.push_back({ std::move(_word), _wordQuoted });
        }
        _word.clear();
        _inWord = false;
        _wordQuoted = false;
    }

    void beginRedirect(std::string op)
    {
        if (_pendingRedirect)
            _segment.redirects.push_back({ std::move(*_pendingRedirect), {} });
        _pendingRedirect = std::move(op);
    }

    void endSegment()
    {
        flushWord();
        if (_pendingRedirect)
        {
            _segment.redirects.push_back({ std::move(*_pendingRedirect), {} });
            _pendingRedirect.reset();
        }
        if (!_segment.words.empty() || !_segment.redirects.empty() || _segment.opaque)
            _segments.push_back(std::move(_segment));
        _segment = RawSegment {};
    }

    void lexRedirect()
    {
        // A bare run of digits immediately before the operator is a file
        // descriptor, not a word.
        if (_inWord && !_wordQuoted && !_word.empty()
            && std::all_of(_word.begin(), _word.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
        {
            _word.clear();
            _inWord = false;
        }
        else
        {
            flushWord();
        }

        auto const first = _in[_pos];
        if (peek(1) == '(')
        {
            // process substitution <( ) / >( )
            _segment.opaque = true;
            _pos += 1;
            return;
        }

        auto op = std::string(1, first);
        ++_pos;
        if (first == '>')
        {
            if (peek(0) == '>' || peek(0) == '&' || peek(0) == '|')
                op.push_back(_in[_pos++]);
        }
        else
        {
            if (peek(0) == '<')
            {
                op.push_back(_in[_pos++]);
                if (peek(0) == '<')
                    op.push_back(_in[_pos++]);
            }
            else if (peek(0) == '&' || peek(0) == '>')
            {
                op.push_back(_in[_pos++]);
            }
        }
        beginRedirect(std::move(op));
    }

    void appendUntilBacktick()
    {
        _inWord = true;
        auto const start = _pos;
        ++_pos;
        while (_pos < _in.size() && _in[_pos] != '`')
        {
            if (_in[_pos] == '\\')
                ++_pos;
            ++_pos;
        }
        if (_pos >= _in.size())
            throw LexError("unbalanced backquote");
        ++_pos;
        _word.append(_in.substr(start, _pos - start));
    }

    void appendSubstitution()
    {
        // at "$(": consume through the matching ')'
        auto const start = _pos;
        _pos += 2;
        auto depth = 1;
        auto quote = '\0';
        while (_pos < _in.size() && depth > 0)
        {
            auto const ch = _in[_pos];
            if (quote)
            {
                if (ch == '\\' && quote == '"')
                    ++_pos;
                else if (ch == quote)
                    quote = '\0';
            }
            else if (ch == '\'' || ch == '"')
                quote = ch;
            else if (ch == '\\')
                ++_pos;
            else if (ch == '(')
                ++depth;
            else if (ch == ')')
                --depth;
            ++_pos;
        }
        if (depth != 0)
            throw LexError("unbalanced $( substitution");
        _word.append(_in.substr(start, _pos - start));
    }

    void lexDollar()
    {
        _inWord = true;
        if (peek(1) == '(')
        {
            _segment.opaque = true;
            appendSubstitution();
            return;
        }
        if (peek(1) == '{')
        {
            auto const close = _in.find('}', _pos + 2);
            if (close == std::string_view::npos)
                throw LexError("unbalanced ${ expansion");
            _word.append(_in.substr(_pos, close + 1 - _pos));
            _pos = close + 1;
            return;
        }
        _word.push_back('$');
        ++_pos;
    }

    void lexSingleQuoted()
    {
        auto const close = _in.find('\'', _pos + 1);
        if (close == std::string_view::npos)
            throw LexError("unbalanced single quote");
        _inWord = true;
        _wordQuoted = true;
        _word.append(_in.substr(_pos + 1, close - _pos - 1));
        _pos = close + 1;
    }

    void lexDoubleQuoted()
    {
        _inWord = true;
        _wordQuoted = true;
        ++_pos;
        while (_pos < _in.size())
        {
            auto const ch = _in[_pos];
            if (ch == '"')
            {
                ++_pos;
                return;
            }
            if (ch == '\\' && _pos + 1 < _in.size())
            {
                auto const next = _in[_pos + 1];
                if (next == '$' || next == '`' || next == '"' || next == '\\')
                    _word.push_back(next);
                else if (next != '\n')
                {
                    _word.push_back('\\');
                    _word.push_back(next);
                }
                _pos += 2;
                continue;
            }
            if (ch == '$' && peek(1) == '(')
            {
                _segment.opaque = true;
                appendSubstitution();
                continue;
            }
            if (ch == '`')
            {
                _segment.opaque = true;
                appendUntilBacktick();
                continue;
            }
            _word.push_back(ch);
            ++_pos;
        }
        throw LexError("unbalanced double quote");
    }

    std::string_view _in;
    std::size_t _pos = 0;
    std::string _word;
    bool _inWord = false;
    bool _wordQuoted = false;
    std::optional<std::string> _pendingRedirect;
    RawSegment _segment;
    std::vector<RawSegment> _segments;
};

using Args = std::span<const Word>;

auto basename(std::string_view path) -> std::string
{
    auto const slash = path.rfind('/');
    if (slash == std::string_view::npos || slash + 1 == path.size())
        return std::string(path);
    return std::string(path.substr(slash + 1));
}

auto is_assignment(const Word& w) -> bool
{
    if (w.text.empty() || !(std::isalpha(static_cast<unsigned char>(w.text[0])) || w.text[0] == '_'))
        return false;
    auto const eq = w.text.find('=');
    if (eq == std::string::npos)
        return false;
    return std::all_of(w.text.begin(), w.text.begin() + static_cast<std::ptrdiff_t>(eq), [](char ch) {
        return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_';
    });
}

auto is_short_cluster(std::string_view arg) -> bool
{
    return arg.size() >= 2 && arg[0] == '-' && arg[1] != '-';
}

auto starts_with(std::string_view text, std::string_view prefix) -> bool
{
    return text.substr(0, prefix.size()) == prefix;
}

auto numeric_like(std::string_view arg) -> bool
{
    if (arg.empty() || !std::isdigit(static_cast<unsigned char>(arg[0])))
        return false;
    return std::all_of(arg.begin(), arg.end(), [](char ch) {
        return std::isdigit(static_cast<unsigned char>(ch)) || ch == '.' || ch == 's' || ch == 'm' || ch == 'h'
               || ch == 'd';
    });
}

const auto kReadOnly = std::unordered_set<std::string> {
    "cat",    "ls",       "grep",     "egrep",  "fgrep",     "rg",        "head",   "tail",   "wc",
    "echo",   "printf",   "pwd",      "true",   "false",     "test",      "[",      "stat",   "file",
    "diff",   "cmp",      "sort",     "uniq",   "cut",       "tr",        "which",  "whoami", "date",
    "tree",   "less",     "more",     "du",     "df",        "basename",  "dirname", "realpath", "readlink",
    "sha256sum", "sha1sum", "md5sum", "uname",  "hostname",  "id",        "printenv", "ps",   "jq",
    "nl",     "column",   "od",       "xxd",    "hexdump",   "strings",   "type",   "ag",     "fd",
};

const auto kWriters = std::unordered_set<std::string> {
    "mv", "cp", "touch", "mkdir", "ln", "chmod", "chown", "chgrp", "tee", "install", "truncate", "patch", "tar", "unzip",
};

const auto kDeleters = std::unordered_set<std::string> { "rm", "rmdir", "unlink", "shred" };

const auto kWrappers = std::unordered_set<std::string> {
    "nohup", "time", "command", "exec", "nice", "env", "xargs", "timeout", "stdbuf", "ionice", "builtin", "sudo", "doas",
};

const auto kGitReadOnly = std::unordered_set<std::string> {
    "status",  "log",      "diff",     "show",  "blame",   "grep",         "ls-files", "ls-tree", "ls-remote",
    "rev-parse", "rev-list", "describe", "shortlog", "cat-file", "help",  "version",  "whatchanged", "reflog",
    "count-objects",
};

const auto kGitWriters = std::unordered_set<std::string> {
    "add",    "commit", "checkout", "switch", "restore", "reset",    "merge", "rebase",    "stash",
    "cherry-pick", "revert", "tag", "branch", "init",    "mv",       "apply", "am",        "config",
    "remote", "worktree", "submodule", "notes", "pull",  "fetch",    "clone", "gc",        "bisect",
};

auto classify_words(Args words, int depth, std::string& unwrapped) -> CapabilitySet;

auto join_words(Args words) -> std::string
{
    auto out = std::string {};
    for (auto i = std::size_t { 0 }; i < words.size(); ++i)
    {
        if (i > 0)
            out.push_back(' ');
        out += i == 0 ? basename(words[i].text) : words[i].text;
    }
    return out;
}

auto classify_git(Args args) -> CapabilitySet
{
    auto i = std::size_t { 0 };
    while (i < args.size())
    {
        auto const& a = args[i].text;
        if (a == "-C" || a == "-c" || a == "--git-dir" || a == "--work-tree" || a == "--namespace")
            i += 2;
        else if (starts_with(a, "-"))
            ++i;
        else
            break;
    }
    if (i >= args.size())
        return { Capability::FsRead };

    auto const& sub = args[i].text;
    auto const rest = args.subspan(i + 1);

    if (sub == "push")
    {
        auto const forced = std::any_of(rest.begin(), rest.end(), [](const Word& w) {
            auto const& a = w.text;
            if (a == "--force" || a == "--delete" || a == "--mirror" || a == "--prune" || a == "--force-if-includes"
                || starts_with(a, "--force-with-lease"))
                return true;
            if (starts_with(a, "+") || (starts_with(a, ":") && a.size() > 1))
                return true;
            return is_short_cluster(a) && (a.find('f') != std::string::npos || a.find('d') != std::string::npos);
        });
        return forced ? CapabilitySet { Capability::GitPushForce } : CapabilitySet { Capability::NetworkWrite };
    }
    if (sub == "clean" || sub == "rm")
        return { Capability::FsDelete };
    if (sub == "reset"
        && std::any_of(rest.begin(), rest.end(), [](const Word& w) { return w.text == "--hard"; }))
        return { Capability::FsDelete };
    if (kGitReadOnly.contains(sub))
        return { Capability::FsRead };
    if (kGitWriters.contains(sub))
        return { Capability::FsWrite };
    return { Capability::Exec, Capability::Unknown };
}

auto classify_transfer(const std::string& program, Args args) -> CapabilitySet
{
    auto caps = CapabilitySet { Capability::NetworkWrite };
    auto const curl = program == "curl";
    auto writesFile = !curl; // wget saves to disk unless told to write stdout

    for (auto i = std::size_t { 0 }; i < args.size(); ++i)
    {
        auto const& a = args[i].text;
        auto const next = i + 1 < args.size() ? std::string_view(args[i + 1].text) : std::string_view {};
        if (curl)
        {
            if (a == "-o" || a == "-O" || a == "--output" || a == "--remote-name" || a == "--remote-name-all"
                || starts_with(a, "--output="))
                writesFile = true;
            else if (is_short_cluster(a) && !starts_with(a, "-X")
                     && (a.find('o') != std::string::npos || a.find('O') != std::string::npos))
                writesFile = true;
        }
        else
        {
            auto const toStdout = [](std::string_view target) { return target == "-" || target == "/dev/null"; };
            if (a == "-O" || a == "--output-document")
                writesFile = !toStdout(next);
            else if (starts_with(a, "--output-document="))
                writesFile = !toStdout(std::string_view(a).substr(18));
            else if (is_short_cluster(a) && a.back() == 'O')
                writesFile = !toStdout(next);
            else if (is_short_cluster(a) && a.find('O') != std::string::npos)
                writesFile = !toStdout(std::string_view(a).substr(a.find('O') + 1));
            else if (a == "-o" || a == "--output-file" || a == "-a" || a == "--append-output")
                writesFile = true;
        }
    }
    if (writesFile)
        caps.insert(Capability::FsWrite);
    return caps;
}

auto classify_find(Args args, int depth) -> CapabilitySet
{
    auto caps = CapabilitySet { Capability::FsRead };
    for (auto i = std::size_t { 0 }; i < args.size(); ++i)
    {
        auto const& a = args[i].text;
        if (a == "-delete")
            caps.insert(Capability::FsDelete);
        else if (a == "-fprint" || a == "-fprint0" || a == "-fprintf" || a == "-fls")
            caps.insert(Capability::FsWrite);
        else if (a == "-exec" || a == "-execdir" || a == "-ok" || a == "-okdir")
        {
            auto end = i + 1;
            while (end < args.size() && args[end].text != ";" && args[end].text != "+")
                ++end;
            auto inner = std::string {};
            auto sub = args.subspan(i + 1, end - (i + 1));
            auto const innerCaps = sub.empty() ? CapabilitySet { Capability::Exec, Capability::Unknown }
                                               : classify_words(sub, depth + 1, inner);
            caps.insert(innerCaps.begin(), innerCaps.end());
            i = end;
        }
    }
    return caps;
}

auto classify_words(Args words, int depth, std::string& unwrapped) -> CapabilitySet
{
    while (!words.empty() && is_assignment(words.front()))
        words = words.subspan(1);
    unwrapped = join_words(words);
    if (words.empty())
        return { Capability::FsRead };
    if (depth > 8)
        return { Capability::Exec, Capability::Unknown };

    auto const program = basename(words[0].text);
    auto const args = words.subspan(1);

    if (kWrappers.contains(program))
    {
        auto i = std::size_t { 0 };
        while (i < args.size()
               && (starts_with(args[i].text, "-") || numeric_like(args[i].text) || is_assignment(args[i])))
            ++i;
        if (i >= args.size())
        {
            if (program == "env")
                return { Capability::FsRead };
            return { Capability::Exec, Capability::Unknown };
        }
        auto caps = classify_words(args.subspan(i), depth + 1, unwrapped);
        if (program == "sudo" || program == "doas")
        {
            caps.insert(Capability::Exec);
            caps.insert(Capability::Unknown);
        }
        return caps;
    }

    if (kDeleters.contains(program))
        return { Capability::FsDelete };
    if (program == "git")
        return classify_git(args);
    if (program == "curl" || program == "wget")
        return classify_transfer(program, args);
    if (program == "find")
        return classify_find(args, depth);
    if (program == "sed")
    {
        auto const inPlace = std::any_of(args.begin(), args.end(), [](const Word& w) {
            return starts_with(w.text, "--in-place") || (is_short_cluster(w.text) && w.text.find('i') != std::string::npos);
        });
        return inPlace ? CapabilitySet { Capability::FsWrite } : CapabilitySet { Capability::FsRead };
    }
    if (kReadOnly.contains(program))
        return { Capability::FsRead };
    if (kWriters.contains(program))
        return { Capability::FsWrite };
    return { Capability::Exec, Capability::Unknown };
}

auto writes_file(const Redirect& r) -> bool
{
    if (r.op == ">&" || r.op == "<&")
    {
        auto const dup = !r.target.empty()
                         && (r.target == "-" || std::all_of(r.target.begin(), r.target.end(), [](char ch) {
                                return std::isdigit(static_cast<unsigned char>(ch));
                            }));
        return r.op == ">&" && !dup;
    }
    auto const writing = r.op == ">" || r.op == ">>" || r.op == ">|" || r.op == "&>" || r.op == "&>>" || r.op == "<>";
    return writing && r.target != "/dev/null";
}

auto classify_segment(const RawSegment& raw) -> ShellSegment
{
    auto segment = ShellSegment {};
    segment.capabilities = classify_words(raw.words, 0, segment.unwrapped);

    auto words = Args(raw.words);
    while (!words.empty() && is_assignment(words.front()))
        words = words.subspan(1);
    segment.normalized = join_words(words);

    if (raw.words.empty() || words.empty())
    {
        // bare redirections or assignments
        segment.capabilities.clear();
    }
    for (auto const& r: raw.redirects)
    {
        if (!segment.normalized.empty())
            segment.normalized.push_back(' ');
        segment.normalized += r.op + r.target;
        if (writes_file(r))
            segment.capabilities.insert(Capability::FsWrite);
    }
    if (raw.opaque)
    {
        segment.capabilities.insert(Capability::Exec);
        segment.capabilities.insert(Capability::Unknown);
    }
    if (segment.capabilities.empty())
        segment.capabilities.insert(Capability::FsRead);
    if (segment.unwrapped.empty())
        segment.unwrapped = segment.normalized;
    return segment;
}

} // namespace

auto analyze_shell(std::string_view command) -> ShellAnalysis
{
    auto analysis = ShellAnalysis {};
    try
    {
        for (auto const& raw: Lexer(command).run())
        {
            auto segment = classify_segment(raw);
            analysis.capabilities.insert(segment.capabilities.begin(), segment.capabilities.end());
            analysis.segments.push_back(std::move(segment));
        }
        if (analysis.segments.empty())
            analysis.diagnostic = "empty command";
    }
    catch (const LexError& e)
    {
        analysis.diagnostic = fmt::format("unparseable command: {}", e.what());
        analysis.segments.clear();
    }

    if (!analysis.parsed())
    {
        analysis.capabilities = { Capability::Exec, Capability::Unknown };
        // Keep a single segment holding the raw text so blocklist patterns
        // still see something.
        analysis.segments.push_back(ShellSegment {
            .normalized = std::string(command),
            .unwrapped = std::string(command),
            .capabilities = analysis.capabilities,
        });
    }
    return analysis;
}

auto shell_reachable_capabilities() -> const CapabilitySet&
{
    static const auto caps = CapabilitySet {
        Capability::FsRead,       Capability::FsWrite, Capability::FsDelete, Capability::GitPushForce,
        Capability::NetworkWrite, Capability::Exec,    Capability::Unknown,
    };
    return caps;
}

} // namespace steward::safety
