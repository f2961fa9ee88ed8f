#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtp/problem_model.hpp"
#include "vtp/response_parsing.hpp"
#include "vtp/sandbox.hpp"

namespace vtp {

enum class StageTag { Base, Rl, Sft };
std::string to_string(StageTag);
StageTag stage_tag_from_string(std::string_view);

/// One scored model attempt.
struct RolloutRecord {
    std::string problem_id;
    std::size_t attempt_idx = 0;
    std::string response_text;
    std::optional<std::string> extracted_program;
    int reward = 0;
    std::size_t token_count = 0;
    std::string model_tag;
    StageTag stage_tag = StageTag::Base;
    std::string failure;                          // why the reward is 0; empty on success
    std::optional<std::size_t> backtrack_count;  // filled by trace analysis

    /// Throws ConfigError when reward is outside {0, 1} or a rewarded record has no program.
    void validate() const;
    friend bool operator==(const RolloutRecord&, const RolloutRecord&) = default;
};

struct RolloutMeta {
    std::size_t attempt_idx = 0;
    std::string model_tag;
    StageTag stage_tag = StageTag::Base;
    std::optional<std::size_t> token_count;  // from the provider when known
    ThinkMarkers markers;
};

/// Reward 1 iff the final fenced block of the answer segment passes every test case. Missing
/// code, unbalanced reasoning markers, candidate errors, mismatches and timeouts give 0.
/// GoldenFailure propagates.
RolloutRecord score_rollout(const ProblemRecord& problem, const std::string& response, const ExecutionLimits& limits,
                            Executor& executor, const RolloutMeta& meta = {});

// ---------------------------------------------------------------------------
// Aggregation

struct RowMeta {
    std::string problem_id;
    DomainLevel domain_level = DomainLevel::AU;
    DatasetTag dataset_tag = DatasetTag::Easy;
};

struct ProblemMetrics {
    std::string problem_id;
    double accuracy = 0.0;        // mean reward over attempts
    double bo_k = 0.0;            // 1 iff any of the first k attempts is rewarded
    std::optional<double> pass_at_k;  // unbiased estimator over all n attempts, when requested
};

struct GroupMetrics {
    std::size_t problems = 0;
    double accuracy = 0.0;  // mean of per-problem accuracies
    double bo_k = 0.0;
    std::optional<double> pass_at_k;
};

struct MetricsTable {
    std::size_t k = 0;
    std::size_t attempts = 0;
    std::vector<ProblemMetrics> problems;
    GroupMetrics overall;
    std::map<DomainLevel, GroupMetrics> by_level;
    std::map<DatasetTag, GroupMetrics> by_tag;
    std::size_t solved_count = 0;   // accuracy > 0
    std::size_t perfect_count = 0;  // accuracy == 1
};

struct AggregateOptions {
    std::size_t k = 5;
    bool unbiased_pass_at_k = false;
};

/// Rows are problems, columns attempts; entries must be 0 or 1. Throws ConfigError on a ragged
/// or empty matrix, k outside [1, n], non-binary entries or a metadata size mismatch.
MetricsTable aggregate_metrics(const std::vector<std::vector<int>>& rewards, const std::vector<RowMeta>& meta,
                               const AggregateOptions& options = {});

/// Any-correct over the first k entries of the row.
bool best_of_k(const std::vector<int>& row, std::size_t k);

/// 1 - C(n-c, k) / C(n, k): probability that k draws without replacement from n attempts with
/// c correct contain a correct one.
double unbiased_pass_at_k(std::size_t n, std::size_t c, std::size_t k);

/// Groups rollouts by problem (first-seen order) into a reward matrix ordered by attempt_idx.
/// Throws ConfigError when a problem has duplicate attempt indices.
std::vector<std::vector<int>> reward_matrix(const std::vector<RolloutRecord>& rollouts,
                                            std::vector<std::string>* problem_ids = nullptr);

/// 100 (before - after) / before rounded to one decimal. Throws ConfigError when before == 0.
double reduction_percent(std::size_t before, std::size_t after);

// ---------------------------------------------------------------------------
// IO

nlohmann::json to_json(const RolloutRecord&);
RolloutRecord rollout_from_json(const nlohmann::json&);
std::vector<RolloutRecord> load_rollouts(const std::filesystem::path& path);
void save_rollouts(const std::vector<RolloutRecord>& rollouts, const std::filesystem::path& path);

/// problem_id,domain_level,dataset_tag,Succ,Bo<k>[,pass@<k>]
std::string per_problem_csv(const MetricsTable& table, const std::vector<RowMeta>& meta);
/// group,problems,Succ,Bo<k>; rows for every level, then every tag, then "overall".
std::string summary_csv(const MetricsTable& table);

nlohmann::json to_json(const MetricsTable&);

}  // namespace vtp
