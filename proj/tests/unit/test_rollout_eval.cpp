#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "test_support.hpp"
#include "vtp/rollout_eval.hpp"
#include "vtp/text_util.hpp"

using namespace vtp;
using vtp::testing::make_problem;

namespace {

ProblemRecord quarter_problem() {
    return make_problem("p-quarter", "def f(x: float) -> float:\n    \"\"\"A quarter of x.\"\"\"\n",
                        "def f(x):\n    C = 1/4\n    return C * x\n",
                        {{1.0}, {2.0}, {-3.0}, {0.5}, {8.0}, {10.0}, {100.0}});
}

std::string fenced(const std::string& code) { return "```python\n" + code + "```\n"; }

std::vector<RowMeta> metas(std::size_t n, DomainLevel level = DomainLevel::GR) {
    std::vector<RowMeta> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = {"p" + std::to_string(i), level, DatasetTag::Easy};
    return m;
}

}  // namespace

TEST(ScoreRollout, GoldenVerbatimEarnsReward) {
    InProcessExecutor ex;
    auto p = quarter_problem();
    auto r = score_rollout(p, "Reasoning.\n" + fenced(p.golden_program), {}, ex, {2, "m", StageTag::Rl, 123});
    EXPECT_EQ(r.reward, 1);
    EXPECT_EQ(r.extracted_program, std::string(text::trim_right(p.golden_program)));
    EXPECT_EQ(r.attempt_idx, 2u);
    EXPECT_EQ(r.token_count, 123u);
    EXPECT_EQ(r.stage_tag, StageTag::Rl);
    EXPECT_TRUE(r.failure.empty());
}

TEST(ScoreRollout, NoCodeBlockGivesZero) {
    InProcessExecutor ex;
    auto r = score_rollout(quarter_problem(), "The answer is x/4.", {}, ex);
    EXPECT_EQ(r.reward, 0);
    EXPECT_FALSE(r.extracted_program);
    EXPECT_EQ(r.failure, "no code block");
    EXPECT_EQ(r.token_count, text::approx_token_count("The answer is x/4."));
}

TEST(ScoreRollout, SingleFailingTestGivesZero) {
    InProcessExecutor ex;
    // Wrong only for x == 100.
    auto r = score_rollout(quarter_problem(), fenced("def f(x):\n    return x / 4 if x != 100 else 0.0\n"), {}, ex);
    EXPECT_EQ(r.reward, 0);
    EXPECT_NE(r.failure.find("test 6"), std::string::npos);
}

TEST(ScoreRollout, UsesFinalBlockOfAnswerSegment) {
    InProcessExecutor ex;
    auto p = quarter_problem();
    const std::string wrong = fenced("def f(x):\n    return x / 3\n");
    EXPECT_EQ(score_rollout(p, fenced(p.golden_program) + wrong, {}, ex).reward, 0);
    EXPECT_EQ(score_rollout(p, wrong + fenced(p.golden_program), {}, ex).reward, 1);
    // Code inside the reasoning segment is not the answer.
    EXPECT_EQ(score_rollout(p, "<think>\n" + fenced(p.golden_program) + "</think>\nNo code.", {}, ex).reward, 0);
    EXPECT_EQ(score_rollout(p, "<think>\n" + wrong + "</think>\n" + fenced(p.golden_program), {}, ex).reward, 1);
    auto r = score_rollout(p, "<think>\n" + fenced(p.golden_program), {}, ex);
    EXPECT_EQ(r.reward, 0);
    EXPECT_NE(r.failure.find("unbalanced"), std::string::npos);
}

TEST(ScoreRollout, CustomReasoningMarkers) {
    InProcessExecutor ex;
    auto p = quarter_problem();
    const std::string response = fenced(p.golden_program) + "[[reason]]\n" + fenced("def f(x):\n    return x\n") +
                                 "[[/reason]]\n";
    EXPECT_EQ(score_rollout(p, response, {}, ex).reward, 0);
    RolloutMeta meta;
    meta.markers = {"[[reason]]", "[[/reason]]"};
    EXPECT_EQ(score_rollout(p, response, {}, ex, meta).reward, 1);
    meta.markers = {"", "</think>"};
    EXPECT_THROW(score_rollout(p, response, {}, ex, meta), ConfigError);
}

TEST(ScoreRollout, CandidateErrorAndTimeoutGiveZero) {
    InProcessExecutor ex;
    auto p = quarter_problem();
    EXPECT_EQ(score_rollout(p, fenced("def f(x):\n    raise ValueError('no')\n"), {}, ex).reward, 0);
    ExecutionLimits fast;
    fast.wall_time = 0.2;
    auto r = score_rollout(p, fenced("def f(x):\n    while True:\n        pass\n"), fast, ex);
    EXPECT_EQ(r.reward, 0);
    EXPECT_NE(r.failure.find("timeout"), std::string::npos);
}

TEST(ScoreRollout, GoldenFailurePropagates) {
    InProcessExecutor ex;
    auto p = make_problem("bad", "def f(x: float) -> float:\n    \"\"\"x\"\"\"\n", "def f(x):\n    return 1 / x\n", {{0.0}});
    EXPECT_THROW(score_rollout(p, fenced("def f(x):\n    return 0.0\n"), {}, ex), GoldenFailure);
}

TEST(RolloutRecord, Invariants) {
    RolloutRecord r;
    r.reward = 2;
    EXPECT_THROW(r.validate(), ConfigError);
    r.reward = 1;
    EXPECT_THROW(r.validate(), ConfigError);
    r.extracted_program = "x";
    EXPECT_NO_THROW(r.validate());
}

TEST(Aggregate, SingleRowExample) {
    auto t = aggregate_metrics({{0, 0, 1, 0, 0}}, metas(1));
    EXPECT_DOUBLE_EQ(t.problems[0].accuracy, 0.2);
    EXPECT_EQ(t.problems[0].bo_k, 1.0);
    EXPECT_EQ(t.solved_count, 1u);
    EXPECT_EQ(t.perfect_count, 0u);
}

TEST(Aggregate, AllZeroMatrix) {
    std::vector<std::vector<int>> m(80, std::vector<int>(5, 0));
    auto t = aggregate_metrics(m, metas(80));
    EXPECT_EQ(t.overall.accuracy, 0.0);
    EXPECT_EQ(t.overall.bo_k, 0.0);
    EXPECT_EQ(t.solved_count, 0u);
}

TEST(Aggregate, PerfectRowsCounted) {
    std::vector<std::vector<int>> m(80, std::vector<int>{0, 1, 0, 0, 1});
    for (std::size_t i = 0; i < 12; ++i) m[i * 6] = {1, 1, 1, 1, 1};
    auto t = aggregate_metrics(m, metas(80));
    EXPECT_EQ(t.perfect_count, 12u);
    EXPECT_EQ(t.solved_count, 80u);
}

TEST(Aggregate, RejectsBadInput) {
    EXPECT_THROW(aggregate_metrics({}, {}), ConfigError);
    EXPECT_THROW(aggregate_metrics({{1, 0}, {1}}, metas(2), {1}), ConfigError);
    EXPECT_THROW(aggregate_metrics({{1, 0}}, metas(1), {3}), ConfigError);
    EXPECT_THROW(aggregate_metrics({{1, 0}}, metas(1), {0}), ConfigError);
    EXPECT_THROW(aggregate_metrics({{1, 2}}, metas(1), {1}), ConfigError);
    EXPECT_THROW(aggregate_metrics({{1, 0}}, metas(2), {1}), ConfigError);
}

TEST(Aggregate, Identities) {
    std::mt19937_64 rng(11);
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<int> row(1 + trial % 8);
        for (auto& x : row) x = coin(rng) ? 1 : 0;
        const std::size_t n = row.size();
        auto t = aggregate_metrics({row}, metas(1), {n});
        bool prev = false;
        for (std::size_t k = 1; k <= n; ++k) {
            const bool b = best_of_k(row, k);
            EXPECT_TRUE(!prev || b);  // nondecreasing
            prev = b;
        }
        EXPECT_EQ(best_of_k(row, 1), row[0] == 1);
        const double acc = t.problems[0].accuracy;
        EXPECT_LE(acc, t.problems[0].bo_k);
        const bool constant = std::all_of(row.begin(), row.end(), [&](int x) { return x == row[0]; });
        EXPECT_EQ(acc == t.problems[0].bo_k, constant);
    }
}

TEST(Aggregate, PermutationInvariantAcrossProblems) {
    std::vector<std::vector<int>> m = {{1, 0, 1}, {0, 0, 0}, {1, 1, 1}, {0, 1, 0}};
    auto a = aggregate_metrics(m, metas(4), {3});
    std::reverse(m.begin(), m.end());
    auto b = aggregate_metrics(m, metas(4), {3});
    EXPECT_DOUBLE_EQ(a.overall.accuracy, b.overall.accuracy);
    EXPECT_DOUBLE_EQ(a.overall.bo_k, b.overall.bo_k);
}

TEST(Aggregate, Breakdowns) {
    std::vector<RowMeta> meta = {{"a", DomainLevel::AU, DatasetTag::Easy},
                                 {"b", DomainLevel::AU, DatasetTag::Hard},
                                 {"c", DomainLevel::PG, DatasetTag::Hard}};
    auto t = aggregate_metrics({{1, 1}, {0, 1}, {0, 0}}, meta, {1});
    EXPECT_DOUBLE_EQ(t.by_level.at(DomainLevel::AU).accuracy, 0.75);
    EXPECT_DOUBLE_EQ(t.by_level.at(DomainLevel::AU).bo_k, 0.5);
    EXPECT_DOUBLE_EQ(t.by_level.at(DomainLevel::PG).accuracy, 0.0);
    EXPECT_EQ(t.by_tag.at(DatasetTag::Hard).problems, 2u);
    EXPECT_DOUBLE_EQ(t.by_tag.at(DatasetTag::Hard).accuracy, 0.25);
    EXPECT_DOUBLE_EQ(t.overall.accuracy, 0.5);
    const auto csv = summary_csv(t);
    EXPECT_NE(csv.find("group,problems,Succ,Bo1\n"), std::string::npos);
    EXPECT_NE(csv.find("AU,2,0.7500,0.5000\n"), std::string::npos);
    EXPECT_NE(csv.find("overall,3,0.5000,0.3333\n"), std::string::npos);
    const auto rows = per_problem_csv(t, meta);
    EXPECT_EQ(rows.substr(0, rows.find('\n')), "problem_id,domain_level,dataset_tag,Succ,Bo1");
}

TEST(PassAtK, MatchesBruteForceOracle) {
    // Enumerate all k-subsets of n attempts with c correct.
    for (std::size_t n = 1; n <= 8; ++n)
        for (std::size_t c = 0; c <= n; ++c)
            for (std::size_t k = 1; k <= n; ++k) {
                std::size_t hit = 0, total = 0;
                for (std::size_t mask = 0; mask < (1u << n); ++mask) {
                    if (static_cast<std::size_t>(__builtin_popcountll(mask)) != k) continue;
                    ++total;
                    if (mask & ((1u << c) - 1)) ++hit;  // first c attempts are the correct ones
                }
                EXPECT_NEAR(unbiased_pass_at_k(n, c, k), static_cast<double>(hit) / total, 1e-12);
            }
    auto t = aggregate_metrics({{1, 0, 0, 0, 0}}, metas(1), {1, true});
    EXPECT_DOUBLE_EQ(*t.problems[0].pass_at_k, 0.2);
}

TEST(Reduction, Examples) {
    EXPECT_EQ(reduction_percent(721, 240), 66.7);
    EXPECT_EQ(reduction_percent(1378, 480), 65.2);
    EXPECT_EQ(reduction_percent(10, 10), 0.0);
    EXPECT_THROW(reduction_percent(0, 0), ConfigError);
}

TEST(RewardMatrix, GroupsByProblemAndAttempt) {
    auto rec = [](std::string id, std::size_t idx, int reward) {
        RolloutRecord r;
        r.problem_id = std::move(id);
        r.attempt_idx = idx;
        r.reward = reward;
        if (reward) r.extracted_program = "x";
        return r;
    };
    std::vector<std::string> ids;
    auto m = reward_matrix({rec("b", 1, 1), rec("a", 0, 0), rec("b", 0, 0), rec("a", 1, 1)}, &ids);
    EXPECT_EQ(ids, (std::vector<std::string>{"b", "a"}));
    EXPECT_EQ(m, (std::vector<std::vector<int>>{{0, 1}, {0, 1}}));
    EXPECT_THROW(reward_matrix({rec("a", 0, 0), rec("a", 0, 1)}), ConfigError);
}

TEST(RolloutIo, RoundTrip) {
    RolloutRecord r;
    r.problem_id = "p1";
    r.attempt_idx = 3;
    r.response_text = "text\nwith \"quotes\"";
    r.extracted_program = "def f():\n    return 1\n";
    r.reward = 1;
    r.token_count = 42;
    r.model_tag = "model-x";
    r.stage_tag = StageTag::Sft;
    r.backtrack_count = 2;
    RolloutRecord z;
    z.problem_id = "p2";
    z.failure = "no code block";
    const auto path = std::filesystem::temp_directory_path() / "vtp_rollouts_test.jsonl";
    save_rollouts({r, z}, path);
    auto back = load_rollouts(path);
    std::filesystem::remove(path);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0], r);
    EXPECT_EQ(back[1], z);
    EXPECT_THROW(rollout_from_json({{"problem_id", "p"}, {"reward", 1}}), ConfigError);
}

TEST(ApproxTokens, Counts) {
    EXPECT_EQ(text::approx_token_count(""), 0u);
    EXPECT_EQ(text::approx_token_count("abcd efgh"), 2u);
    EXPECT_EQ(text::approx_token_count("abcde"), 2u);
    EXPECT_EQ(text::approx_token_count("x = 1/4"), 5u);
}
