#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtp/curation_pipeline.hpp"
#include "vtp/llm_gateway.hpp"
#include "vtp/response_parsing.hpp"
#include "vtp/rollout_eval.hpp"

namespace vtp::cot {

enum class ErrorCategory { Factual, Mathematical, Logical, Executional };
inline constexpr std::array<ErrorCategory, 4> kAllCategories = {ErrorCategory::Mathematical, ErrorCategory::Logical,
                                                                 ErrorCategory::Executional, ErrorCategory::Factual};
enum class Severity { Major, Minor };

std::string to_string(ErrorCategory);
std::string to_string(Severity);

class UnknownLabel : public Error {
public:
    explicit UnknownLabel(std::string raw) : Error("unknown error label '" + raw + "'"), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

/// Maps fine-grained labels onto the four categories (case and spacing insensitive).
ErrorCategory normalize_label(std::string_view raw);
/// "major", "minor" and "critical" (an alias of major). Throws UnknownLabel otherwise.
Severity normalize_severity(std::string_view raw);
/// The shipped label table, for inspection.
const std::map<std::string, ErrorCategory>& label_table();

// ---------------------------------------------------------------------------
// Step boundaries

struct Step {
    std::size_t index = 0;       // 1-based
    std::size_t first_line = 0;  // 1-based, inclusive
    std::size_t last_line = 0;
    std::string text;  // verbatim slice of the source, newlines included
};

struct StepSet {
    std::vector<Step> steps;
    std::string code;  // separated fenced code, empty when none
    std::size_t line_count = 0;
};

using GoldenSteps = StepSet;

struct DistilledTrace : StepSet {
    bool outside_target = false;  // step count outside 5-15
};

/// Empty when the boundaries are ascending, non-overlapping and within [1, line_count].
std::optional<std::string> boundary_problem(const std::vector<std::pair<std::size_t, std::size_t>>& bounds,
                                            std::size_t line_count);

/// Steps whose text is the exact source slice covering their line range.
std::vector<Step> reconstruct_steps(std::string_view source,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& bounds);

struct CodeSplit {
    std::string prose;  // source with fenced blocks removed
    std::string code;   // final non-blank fenced block body, or empty
};
CodeSplit separate_code(std::string_view text);

class AnalyzerFailure : public Error {
public:
    using Error::Error;
};

class DedupFailed : public Error {
public:
    explicit DedupFailed(std::vector<SubsetViolation> violations);
    const std::vector<SubsetViolation>& violations() const noexcept { return violations_; }

private:
    std::vector<SubsetViolation> violations_;
};

struct AnalyzerConfig {
    std::string model_tag = "analyzer";
    double temperature = 0.0;
    int max_tokens = llm::kDefaultMaxTokens;
};

/// Analyzer returns step boundaries over the line-numbered solution prose; the host slices the
/// text. Bad boundaries get one retry, then AnalyzerFailure.
GoldenSteps decompose_golden(std::string_view solution, llm::Gateway& analyzer, const curation::PromptLibrary& prompts,
                             const AnalyzerConfig& config = {});

inline constexpr std::size_t kDefaultDedupThreshold = 4000;

struct DedupResult {
    std::string text;
    bool changed = false;
    std::size_t tokens_before = 0;
};

/// Traces at or below `threshold_tokens` (approximate count) pass through. Longer traces are
/// condensed by the analyzer, accepted only when every kept line appears verbatim and in order in
/// the original; one retry, then DedupFailed.
DedupResult dedup_trace(std::string_view trace, llm::Gateway& analyzer, const curation::PromptLibrary& prompts,
                        const AnalyzerConfig& config = {}, std::size_t threshold_tokens = kDefaultDedupThreshold);

/// Step boundaries over the whole (deduplicated) trace, code separated. Empty text gives no steps
/// and makes no request.
DistilledTrace distill_steps(std::string_view deduped, llm::Gateway& analyzer, const curation::PromptLibrary& prompts,
                             const AnalyzerConfig& config = {});

struct ErrorFinding {
    ErrorCategory category = ErrorCategory::Mathematical;
    Severity severity = Severity::Major;
    std::string step_ref;  // step number or "code"
    std::string raw_label;
    std::string note;
    friend bool operator==(const ErrorFinding&, const ErrorFinding&) = default;
};

struct AttemptErrorReport {
    std::string problem_id;
    std::size_t attempt_idx = 0;
    std::vector<ErrorFinding> findings;
    std::optional<ErrorCategory> primary_category;  // present iff findings non-empty
    std::string prompt_version;

    /// Throws ConfigError when the primary is missing, extra, or not among the findings.
    void validate() const;
    std::size_t major_count(ErrorCategory c) const;
    friend bool operator==(const AttemptErrorReport&, const AttemptErrorReport&) = default;
};

/// The classification prompt: distilled steps, golden steps, and both programs side by side.
std::string classification_user_prompt(const DistilledTrace& distilled, const GoldenSteps& golden,
                                       std::string_view golden_code, std::string_view candidate_code);

/// Decodes `{"findings": [{"label", "severity", "step", "note"}], "primary": label}`.
AttemptErrorReport parse_classification(std::string_view text);

/// One retry on unparseable output, then AnalyzerFailure.
AttemptErrorReport classify_errors(const DistilledTrace& distilled, const GoldenSteps& golden,
                                   std::string_view golden_code, std::string_view candidate_code,
                                   llm::Gateway& analyzer, const curation::PromptLibrary& prompts,
                                   const std::string& problem_id, std::size_t attempt_idx,
                                   const AnalyzerConfig& config = {});

/// Whole pipeline for one incorrect rollout.
AttemptErrorReport analyze_rollout(const ProblemRecord& problem, const RolloutRecord& rollout,
                                   const GoldenSteps& golden, llm::Gateway& analyzer,
                                   const curation::PromptLibrary& prompts, const AnalyzerConfig& config = {},
                                   std::size_t dedup_threshold = kDefaultDedupThreshold);

// ---------------------------------------------------------------------------
// Aggregation

struct CategoryFrequency {
    std::size_t major_count = 0;
    double frequency = 0.0;
};

struct FrequencyTable {
    std::size_t incorrect_count = 0;
    std::map<ErrorCategory, CategoryFrequency> categories;  // all four present
};

/// Major findings per category divided by the number of incorrect rollouts. Throws ConfigError
/// when incorrect_count is 0 or smaller than the number of reports.
FrequencyTable aggregate_frequencies(const std::vector<AttemptErrorReport>& reports, std::size_t incorrect_count);

/// Sample product-moment correlation. Throws ConfigError on unequal or short input or zero variance.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct ConditionalMeans {
    std::size_t rollouts = 0;
    double mean_tokens = 0.0;
    double mean_backtracks = 0.0;
};

struct TraceStats {
    ConditionalMeans overall;
    std::optional<ConditionalMeans> correct;
    std::optional<ConditionalMeans> incorrect;
};

/// Throws ConfigError on empty input or a rollout without a backtrack count.
TraceStats trace_stats(const std::vector<RolloutRecord>& rollouts);

/// Fills backtrack_count from each response's reasoning segment (whole text when unsegmented).
void annotate_backtracking(std::vector<RolloutRecord>& rollouts, const PatternSet& patterns,
                           const ThinkMarkers& markers = {});

struct AgreementRow {
    std::map<ErrorCategory, std::size_t> counts;  // all four present
    std::size_t total = 0;
    std::map<ErrorCategory, double> shares;  // count / total, 0 when total is 0
};

struct AgreementTable {
    std::map<std::string, AgreementRow> rows;
    std::map<std::pair<std::string, std::string>, long> total_deltas;  // rows[a].total - rows[b].total, a < b
};

/// Counts every finding per category. Non-empty configurations must cover the same
/// (problem_id, attempt_idx) set. Throws ConfigError with fewer than two configurations.
AgreementTable analyzer_agreement(const std::map<std::string, std::vector<AttemptErrorReport>>& report_sets);

// ---------------------------------------------------------------------------
// IO

nlohmann::json to_json(const AttemptErrorReport&);
AttemptErrorReport report_from_json(const nlohmann::json&);
std::vector<AttemptErrorReport> load_reports(const std::filesystem::path& path);
void save_reports(const std::vector<AttemptErrorReport>& reports, const std::filesystem::path& path);

/// category,major_count,frequency
std::string frequency_csv(const FrequencyTable& table);
/// category,<config>,<config>%,...; last row "total".
std::string agreement_csv(const AgreementTable& table);

}  // namespace vtp::cot
