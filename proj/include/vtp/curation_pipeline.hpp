#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtp/llm_gateway.hpp"
#include "vtp/problem_model.hpp"
#include "vtp/rollout_eval.hpp"
#include "vtp/sandbox.hpp"

namespace vtp::curation {

// ---------------------------------------------------------------------------
// Topic catalog and sampling

struct ProblemType {
    std::string id;
    std::string title;
    std::string subgroup;
};

struct CatalogLevel {
    DomainLevel level = DomainLevel::AU;
    std::string name;
    std::vector<ProblemType> types;  // flattened over subgroups, in file order
};

class TopicCatalog {
public:
    /// Throws ConfigError on an empty level, duplicate ids or a repeated level.
    explicit TopicCatalog(std::vector<CatalogLevel> levels);
    static TopicCatalog from_json(const nlohmann::json& doc);
    static TopicCatalog load(const std::filesystem::path& path);

    const std::vector<CatalogLevel>& levels() const { return levels_; }
    bool empty() const { return levels_.empty(); }
    const ProblemType* find(std::string_view topic_id) const;
    const CatalogLevel* level_of(std::string_view topic_id) const;

private:
    std::vector<CatalogLevel> levels_;
};

/// SplitMix64-seeded xoshiro256** with an unbiased bounded draw; identical streams on every
/// platform for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    std::uint64_t next();
    /// Uniform in [0, n). Throws ConfigError when n == 0.
    std::size_t below(std::size_t n);

private:
    std::uint64_t s_[4];
};

struct SyntheticSeed {
    DomainLevel level = DomainLevel::AU;
    std::string level_name;
    ProblemType type;
};

/// Level uniformly, then a problem type uniformly within that level.
SyntheticSeed sample_seed(const TopicCatalog& catalog, Rng& rng);

// ---------------------------------------------------------------------------
// Summary registry

/// Append-only per-topic summaries. Safe for concurrent use.
class SummaryRegistry {
public:
    /// Throws ConfigError on a blank summary.
    void append(const std::string& topic_id, const std::string& summary);
    std::vector<std::string> summaries(const std::string& topic_id) const;
    std::size_t size(const std::string& topic_id) const;
    std::size_t total() const;

    nlohmann::json to_json() const;
    static SummaryRegistry from_json(const nlohmann::json& doc);
    static SummaryRegistry load(const std::filesystem::path& path);  // missing file = empty
    void save(const std::filesystem::path& path) const;

    SummaryRegistry() = default;
    SummaryRegistry(const SummaryRegistry& other);
    SummaryRegistry& operator=(const SummaryRegistry&) = delete;

private:
    mutable std::mutex mu_;
    std::map<std::string, std::vector<std::string>> entries_;
};

// ---------------------------------------------------------------------------
// Prompts

/// Versioned prompt assets. Every file starts with a `[role=<name> version=<n>]` header line that
/// stays in the system text.
class PromptLibrary {
public:
    static PromptLibrary load(const std::filesystem::path& dir);
    static std::filesystem::path default_dir();

    /// Throws ConfigError for an unknown template name.
    const std::string& get(const std::string& name) const;
    std::string version(const std::string& name) const;
    std::map<std::string, std::string> versions() const;
    void set(const std::string& name, std::string text);

private:
    std::map<std::string, std::string> templates_;
};

/// Role named in a system text's header line, or empty.
std::string prompt_role(std::string_view system_text);

std::string difficulty_template(DatasetTag tier);

/// Generator system prompt for `seed`: topic, the tier's difficulty block, every registered summary
/// for the topic, and an optional global conventions preamble.
std::string build_generation_prompt(const SyntheticSeed& seed, const SummaryRegistry& registry,
                                    const PromptLibrary& prompts, DatasetTag tier,
                                    const std::optional<std::string>& global_conventions = std::nullopt);

// ---------------------------------------------------------------------------
// Response decoding

/// Reads the "Task categories:" line of a Problem Description section.
std::vector<TaskCategory> parse_task_categories(std::string_view description);

/// Assembles a record from parsed sections; test cases are added separately.
ProblemRecord draft_to_record(const DraftProblem& draft, const std::string& id, const SyntheticSeed& seed,
                              DatasetTag tier);

/// Decodes the final fenced json block `{"test_cases": [[...], ...]}` and checks arity and kinds.
std::vector<TestCase> parse_test_case_response(std::string_view text, const FunctionSpec& spec);

/// Decodes the final fenced json block `{"scores": {...}, "numeric_score": n}`.
QualityReport parse_grader_response(std::string_view text, const std::string& grader_id);

/// Text shown to solvers: statement, conventions and the function skeleton.
std::string solver_user_prompt(const ProblemRecord& problem);
/// Text shown to graders and test-case writers: every section plus the current tests.
std::string review_user_prompt(const ProblemRecord& problem);

// ---------------------------------------------------------------------------
// Gates

enum class GateKind { Pass, RepairTests, Fail };
std::string to_string(GateKind);

struct GateDecision {
    GateKind kind = GateKind::Fail;
    std::vector<std::string> reasons;
};

class MissingMetric : public ConfigError {
public:
    using ConfigError::ConfigError;
};

struct GatePolicy {
    std::size_t hard_reports = 3;
    std::size_t default_reports = 1;
    std::size_t required_reports(DatasetTag tag) const { return tag == DatasetTag::Hard ? hard_reports : default_reports; }
};

/// Metrics a record of this tag must be graded on.
std::vector<QualityMetric> required_metrics(DatasetTag tag);

/// Pass iff every required metric of every report is Excellent; RepairTests iff test_case_quality is
/// the only sub-Excellent metric anywhere. Throws MissingMetric or ConfigError (too few reports).
GateDecision quality_gate(const std::vector<QualityReport>& reports, DatasetTag tag, const GatePolicy& policy = {});

struct FrontierPolicy {
    std::map<DatasetTag, std::size_t> attempts = {{DatasetTag::Easy, 1},
                                                  {DatasetTag::Medium, 1},
                                                  {DatasetTag::Hard, 3},
                                                  {DatasetTag::Pedagogy, 1},
                                                  {DatasetTag::Arxiv, 1}};
    /// Throws ConfigError for a missing tag or a zero budget.
    std::size_t budget(DatasetTag tag) const;
};

enum class FrontierStatus { Pass, Fail, Indeterminate };
std::string to_string(FrontierStatus);

struct FrontierResult {
    FrontierStatus status = FrontierStatus::Fail;
    std::vector<RolloutRecord> attempts;  // transcripts, in order
    std::string error;                    // gateway failure when Indeterminate
};

struct SolverConfig {
    std::string model_tag = "frontier-solver";
    double temperature = 1.0;
    int max_tokens = llm::kDefaultMaxTokens;
    ThinkMarkers markers;
};

/// Up to budget attempts, stopping at the first rewarded one. A gateway failure makes the result
/// Indeterminate; GoldenFailure propagates.
FrontierResult frontier_gate(const ProblemRecord& problem, llm::Gateway& solver, const FrontierPolicy& policy,
                             const ExecutionLimits& limits, Executor& executor, const PromptLibrary& prompts,
                             const SolverConfig& config = {});

// ---------------------------------------------------------------------------
// Rejection-sampling distillation

struct RejectionResult {
    std::string problem_id;
    std::vector<RolloutRecord> rollouts;  // every scored attempt
    std::vector<RolloutRecord> traces;    // reward-1 attempts only
    std::size_t failures = 0;             // gateway failures
};

/// k teacher samples, each scored; keeps the rewarded ones. Throws ConfigError when k == 0.
RejectionResult rejection_sample_traces(const ProblemRecord& problem, llm::Gateway& teacher, std::size_t k,
                                        const ExecutionLimits& limits, Executor& executor,
                                        const PromptLibrary& prompts, const SolverConfig& config);

struct DistillationSummary {
    std::size_t problems = 0;
    std::size_t solved = 0;      // at least one retained trace
    double solved_percent = 0.0; // one decimal
    std::size_t traces = 0;
    std::size_t failures = 0;
};

DistillationSummary summarize_distillation(const std::vector<RejectionResult>& results);

/// Builds a manifest, raising ManifestError on a non-monotone row.
DatasetManifest record_manifest(const std::map<DatasetTag, ManifestRow>& stage_counts);

// ---------------------------------------------------------------------------
// Orchestration

struct CurateOptions {
    DatasetTag tier = DatasetTag::Easy;
    std::size_t n = 10;
    std::uint64_t seed = 42;
    std::size_t workers = 1;
    std::string generator_model = "generator";
    std::vector<std::string> grader_models = {"grader-a", "grader-a", "grader-b"};
    SolverConfig solver;
    double generation_temperature = 1.0;
    ExecutionLimits limits;
    std::optional<std::string> global_conventions;
    GatePolicy gate;
    FrontierPolicy frontier;
};

struct CandidateOutcome {
    std::size_t index = 0;
    std::string id;
    std::string topic_id;
    std::string stage;  // last stage reached: generate, tests, golden, quality, frontier, kept
    std::vector<std::string> reasons;
    std::optional<GateKind> gate;
    bool repaired = false;
    std::optional<FrontierStatus> frontier;
    std::size_t frontier_attempts = 0;
};

nlohmann::json to_json(const CandidateOutcome&);

struct CurateResult {
    std::vector<ProblemRecord> kept;
    std::vector<ProblemRecord> indeterminate;  // retained for a later frontier re-run
    std::vector<CandidateOutcome> outcomes;
    ManifestRow row;
};

struct GeneratedCandidate {
    CandidateOutcome outcome;
    std::optional<ProblemRecord> record;  // absent when the draft could not be parsed
};

/// The sequential generation stage alone: options.n drafts, each summary appended to the registry.
std::vector<GeneratedCandidate> generate_candidates(const CurateOptions& options, const TopicCatalog& catalog,
                                                    const PromptLibrary& prompts, SummaryRegistry& registry,
                                                    llm::Gateway& gateway);

/// Grader reports for the tier's required count, restricted to required metrics. Throws ParseError
/// on unusable grader output.
std::vector<QualityReport> grade_problem(const ProblemRecord& problem, const std::vector<std::string>& grader_models,
                                         const GatePolicy& gate, const PromptLibrary& prompts, llm::Gateway& gateway);

/// Generates options.n candidates and pushes each through tests, golden self-check, quality gate
/// (with one test repair round) and the frontier gate. Generation is sequential because prompts
/// read the registry; later stages run on `workers` threads. Output order follows candidate index.
CurateResult curate(const CurateOptions& options, const TopicCatalog& catalog, const PromptLibrary& prompts,
                    SummaryRegistry& registry, llm::Gateway& gateway, Executor& executor);

}  // namespace vtp::curation
