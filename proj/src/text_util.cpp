#include "vtp/text_util.hpp"

#include <cctype>

namespace vtp::text {

namespace {
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
}  // namespace

std::string_view trim_left(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && is_space(s[i])) ++i;
    return s.substr(i);
}

std::string_view trim_right(std::string_view s) {
    std::size_t n = s.size();
    while (n > 0 && is_space(s[n - 1])) --n;
    return s.substr(0, n);
}

std::string_view trim(std::string_view s) { return trim_right(trim_left(s)); }

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

std::string normalize_whitespace(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (char c : trim(s)) {
        if (is_space(c)) {
            pending_space = true;
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

std::vector<Line> lines(std::string_view s) {
    std::vector<Line> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto nl = s.find('\n', pos);
        std::size_t stop = nl == std::string_view::npos ? s.size() : nl;
        auto text = s.substr(pos, stop - pos);
        if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
        std::size_t end = nl == std::string_view::npos ? s.size() : nl + 1;
        out.push_back({text, pos, end});
        pos = end;
    }
    return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto p = s.find(sep, start);
        if (p == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, p - start));
        start = p + 1;
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    if (from.empty()) return s;
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::string number_lines(std::string_view s) {
    std::string out;
    std::size_t n = 0;
    for (const auto& l : lines(s)) {
        out += std::to_string(++n);
        out += ": ";
        out += l.text;
        out += '\n';
    }
    return out;
}

std::size_t approx_token_count(std::string_view s) {
    std::size_t count = 0, run = 0;
    auto flush = [&] {
        count += (run + 3) / 4;
        run = 0;
    };
    for (unsigned char c : s) {
        if (std::isalnum(c) || c >= 0x80) {
            ++run;
            continue;
        }
        flush();
        if (!std::isspace(c)) ++count;
    }
    flush();
    return count;
}

}  // namespace vtp::text
