#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace vtp::text {

std::string_view trim(std::string_view s);
std::string_view trim_left(std::string_view s);
std::string_view trim_right(std::string_view s);
std::string lower(std::string_view s);
bool is_blank(std::string_view s);

/// Collapses every whitespace run to one space and trims the ends.
std::string normalize_whitespace(std::string_view s);

struct Line {
    std::string_view text;  // without the terminating newline (and without a trailing '\r')
    std::size_t offset;     // byte offset of the first character in the source
    std::size_t end;        // byte offset one past the newline (or source end)
};

/// Splits on '\n'. A trailing newline does not produce an extra empty line.
std::vector<Line> lines(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with(std::string_view s, std::string_view prefix);

/// Replaces every `{{KEY}}` occurrence.
std::string replace_all(std::string s, std::string_view from, std::string_view to);

/// Prefixes each line with its 1-based number: "1: ...".
std::string number_lines(std::string_view s);

/// Rough subword count: each alphanumeric run counts ceil(len / 4), each other non-space
/// character counts one. Not a real tokenizer; used where only a magnitude is needed.
std::size_t approx_token_count(std::string_view s);

}  // namespace vtp::text
