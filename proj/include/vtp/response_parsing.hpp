#pragma once

#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "vtp/error.hpp"

namespace vtp {

struct CodeBlock {
    std::optional<std::string> language_tag;
    std::string body;
    std::size_t offset = 0;  // byte offset of the body in the source text
};

struct ParsedResponse {
    std::optional<std::string> think_text;
    std::string answer_text;
    std::vector<CodeBlock> code_blocks;
};

class NoCodeBlock : public Error {
public:
    NoCodeBlock() : Error("response contains no non-blank fenced code block") {}
};

class UnbalancedMarkers : public Error {
public:
    using Error::Error;
};

class InvalidPattern : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Delimiters of the reasoning segment.
struct ThinkMarkers {
    std::string open = "<think>";
    std::string close = "</think>";
};

/// All closed ``` fenced blocks in order of appearance. An unterminated fence is not a block.
std::vector<CodeBlock> extract_code_blocks(std::string_view text);

/// Body of the last fenced block containing a non-whitespace character. Throws NoCodeBlock.
std::string extract_final_code_block(std::string_view response);

/// Splits a response into the delimited reasoning segment and the remainder.
///  - open..close present: think = text between the first open and the next close; answer = the
///    text before open followed by the text after close.
///  - close without open (chat templates that pre-fill the opening marker): think = text before
///    close; answer = text after close.
///  - neither marker: no think text; answer = whole response.
/// Open without a following close throws UnbalancedMarkers.
ParsedResponse segment_response(std::string_view response, std::string_view open_marker = "<think>",
                                std::string_view close_marker = "</think>");

struct BacktrackPattern {
    std::string id;
    std::string source;
    std::regex compiled;
};

/// Compiled, case-insensitive corrective-phrase patterns.
class PatternSet {
public:
    /// Throws InvalidPattern when a pattern fails to compile.
    explicit PatternSet(std::vector<std::pair<std::string, std::string>> id_and_regex);

    /// The shipped 13-pattern set.
    static PatternSet defaults();

    /// One pattern per line, `#` comments and blank lines skipped. A line may be
    /// `id<TAB>regex`; otherwise the id is `p<N>` for the N-th pattern.
    static PatternSet from_text(std::string_view text);
    static PatternSet from_file(const std::filesystem::path& path);

    const std::vector<BacktrackPattern>& patterns() const { return patterns_; }
    std::size_t size() const { return patterns_.size(); }

private:
    std::vector<BacktrackPattern> patterns_;
};

struct BacktrackMatch {
    std::string pattern_id;
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct BacktrackReport {
    std::size_t count = 0;
    std::vector<BacktrackMatch> matches;  // non-overlapping, ascending
};

/// Counts non-overlapping matches over all patterns. Among overlapping candidates the earliest
/// start wins, ties broken by longer match.
BacktrackReport count_backtracking(std::string_view text, const PatternSet& patterns);

struct SubsetViolation {
    std::size_t candidate_line = 0;  // 1-based line number in the candidate
    std::string text;                // normalized candidate line
    enum class Reason { NotFound, OutOfOrder } reason = Reason::NotFound;

    std::string describe() const;
};

/// Checks that the candidate's non-blank lines (whitespace-normalized) form an order-preserving
/// subsequence of the original's lines. Reports every offending candidate line.
std::vector<SubsetViolation> verify_subset_preservation(std::string_view original, std::string_view candidate);

}  // namespace vtp
