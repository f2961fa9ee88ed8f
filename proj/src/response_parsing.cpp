#include "vtp/response_parsing.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "vtp/text_util.hpp"

namespace vtp {

std::vector<CodeBlock> extract_code_blocks(std::string_view text) {
    std::vector<CodeBlock> blocks;
    const auto ls = text::lines(text);
    std::size_t i = 0;
    while (i < ls.size()) {
        auto opener = text::trim_left(ls[i].text);
        if (!text::starts_with(opener, "```")) {
            ++i;
            continue;
        }
        auto tag = text::trim(opener.substr(3));
        std::size_t j = i + 1;
        while (j < ls.size() && text::trim(ls[j].text) != "```") ++j;
        if (j == ls.size()) break;  // unterminated
        CodeBlock block;
        if (!tag.empty()) block.language_tag = std::string(tag);
        block.offset = ls[i].end;
        std::size_t body_end = ls[j].offset;
        if (body_end > block.offset && text[body_end - 1] == '\n') --body_end;
        if (body_end > block.offset && text[body_end - 1] == '\r') --body_end;
        block.body = std::string(text.substr(block.offset, body_end > block.offset ? body_end - block.offset : 0));
        blocks.push_back(std::move(block));
        i = j + 1;
    }
    return blocks;
}

std::string extract_final_code_block(std::string_view response) {
    auto blocks = extract_code_blocks(response);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
        if (!text::is_blank(it->body)) return it->body;
    }
    throw NoCodeBlock();
}

ParsedResponse segment_response(std::string_view response, std::string_view open_marker,
                                std::string_view close_marker) {
    if (open_marker.empty() || close_marker.empty()) throw ConfigError("think markers must be non-empty");
    ParsedResponse out;
    const auto open = response.find(open_marker);
    if (open != std::string_view::npos) {
        const auto think_begin = open + open_marker.size();
        const auto close = response.find(close_marker, think_begin);
        if (close == std::string_view::npos) {
            throw UnbalancedMarkers("'" + std::string(open_marker) + "' without matching '" +
                                    std::string(close_marker) + "'");
        }
        out.think_text = std::string(response.substr(think_begin, close - think_begin));
        out.answer_text = std::string(response.substr(0, open)) +
                          std::string(response.substr(close + close_marker.size()));
    } else if (auto close = response.find(close_marker); close != std::string_view::npos) {
        out.think_text = std::string(response.substr(0, close));
        out.answer_text = std::string(response.substr(close + close_marker.size()));
    } else {
        out.answer_text = std::string(response);
    }
    out.code_blocks = extract_code_blocks(out.answer_text);
    return out;
}

// ---------------------------------------------------------------------------

PatternSet::PatternSet(std::vector<std::pair<std::string, std::string>> id_and_regex) {
    for (auto& [id, src] : id_and_regex) {
        try {
            patterns_.push_back({id, src, std::regex(src, std::regex::ECMAScript | std::regex::icase)});
        } catch (const std::regex_error& e) {
            throw InvalidPattern("pattern '" + id + "' (" + src + "): " + e.what());
        }
    }
}

PatternSet PatternSet::defaults() {
    // Strictly corrective phrasing; bare discourse markers ("Hmm", "Actually", "Let me think")
    // are deliberately absent.
    return PatternSet({
        // "Wait, no" / "wait no"
        {"wait_no", R"(\bwait,?\s+no\b)"},
        // "Let me recalculate" / "let me re-calculate"
        {"recalculate", R"(\blet me re-?calculate\b)"},
        // "I made a mistake" / "I made an error"
        {"made_mistake", R"(\bi (?:made|make) (?:a|an) (?:mistake|error)\b)"},
        // "that's wrong", "this is incorrect"
        {"is_wrong", R"(\b(?:that|this|it)(?:'s|\s+is|\s+was)\s+(?:wrong|incorrect)\b)"},
        // "that's not right", "this is not correct"
        {"not_right", R"(\b(?:that|this)(?:'s|\s+is)\s+not\s+(?:right|correct)\b)"},
        // "there's a mistake", "there is an error"
        {"there_is_mistake", R"(\bthere(?:'s| is) (?:a|an) (?:mistake|error)\b)"},
        // "I was wrong"
        {"i_was_wrong", R"(\bi was wrong\b)"},
        // "Correction:"
        {"correction", R"(\bcorrection:)"},
        // "let me start over", "let me try again", "let me redo this"
        {"start_over", R"(\blet me (?:start over|try again|redo (?:this|that|it))\b)"},
        // "scratch that"
        {"scratch_that", R"(\bscratch that\b)"},
        // "I miscalculated", "I misread", "I messed up"
        {"miscalculated", R"(\bi (?:mis-?calculated|miscounted|misread|messed up)\b)"},
        // "actually, it should be", "actually that should have been"
        {"should_be", R"(\bactually,?\s+(?:it|that|this) should (?:be|have been)\b)"},
        // "I forgot a sign", "I dropped the factor"
        {"dropped_term", R"(\bi (?:forgot|missed|dropped) (?:a|the) (?:sign|factor|minus|term)\b)"},
    });
}

PatternSet PatternSet::from_text(std::string_view body) {
    std::vector<std::pair<std::string, std::string>> entries;
    for (const auto& line : text::lines(body)) {
        auto t = text::trim(line.text);
        if (t.empty() || t.front() == '#') continue;
        if (auto tab = t.find('\t'); tab != std::string_view::npos) {
            entries.emplace_back(std::string(text::trim(t.substr(0, tab))), std::string(text::trim(t.substr(tab + 1))));
        } else {
            entries.emplace_back("p" + std::to_string(entries.size() + 1), std::string(t));
        }
    }
    return PatternSet(std::move(entries));
}

PatternSet PatternSet::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read pattern file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

BacktrackReport count_backtracking(std::string_view input, const PatternSet& patterns) {
    std::vector<BacktrackMatch> candidates;
    const std::string s(input);
    for (const auto& p : patterns.patterns()) {
        for (auto it = std::sregex_iterator(s.begin(), s.end(), p.compiled); it != std::sregex_iterator(); ++it) {
            const auto pos = static_cast<std::size_t>(it->position());
            const auto len = static_cast<std::size_t>(it->length());
            if (len == 0) continue;
            candidates.push_back({p.id, pos, pos + len});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.begin != b.begin) return a.begin < b.begin;
        return a.end > b.end;
    });
    BacktrackReport report;
    std::size_t frontier = 0;
    for (auto& c : candidates) {
        if (!report.matches.empty() && c.begin < frontier) continue;
        frontier = c.end;
        report.matches.push_back(std::move(c));
    }
    report.count = report.matches.size();
    return report;
}

std::string SubsetViolation::describe() const {
    if (reason == Reason::NotFound) return "line " + std::to_string(candidate_line) + ": \"" + text + "\" not found";
    return "line " + std::to_string(candidate_line) + ": \"" + text + "\" out of order";
}

std::vector<SubsetViolation> verify_subset_preservation(std::string_view original, std::string_view candidate) {
    std::vector<std::string> orig;
    std::unordered_multimap<std::string, std::size_t> where;
    for (const auto& l : text::lines(original)) {
        orig.push_back(text::normalize_whitespace(l.text));
        where.emplace(orig.back(), orig.size() - 1);
    }
    std::vector<SubsetViolation> out;
    std::size_t cursor = 0;  // next original index eligible for matching
    std::size_t line_no = 0;
    for (const auto& l : text::lines(candidate)) {
        ++line_no;
        auto norm = text::normalize_whitespace(l.text);
        if (norm.empty()) continue;
        auto [b, e] = where.equal_range(norm);
        if (b == e) {
            out.push_back({line_no, norm, SubsetViolation::Reason::NotFound});
            continue;
        }
        std::size_t best = orig.size();
        for (auto it = b; it != e; ++it) {
            if (it->second >= cursor && it->second < best) best = it->second;
        }
        if (best == orig.size()) {
            out.push_back({line_no, norm, SubsetViolation::Reason::OutOfOrder});
            continue;
        }
        cursor = best + 1;
    }
    return out;
}

}  // namespace vtp
