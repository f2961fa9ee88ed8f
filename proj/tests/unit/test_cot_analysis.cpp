#include <gtest/gtest.h>

#include <deque>
#include <filesystem>
#include <random>

#include "test_support.hpp"
#include "vtp/cot_analysis.hpp"
#include "vtp/text_util.hpp"

using namespace vtp;
using namespace vtp::cot;

namespace {

/// Replies from a per-role queue; records every request it saw.
struct Script {
    std::map<std::string, std::deque<std::string>> replies;
    std::vector<llm::CompletionRequest> seen;

    std::shared_ptr<llm::Gateway> gateway() {
        auto t = std::make_shared<llm::MockTransport>([this](const llm::CompletionRequest& r, const std::string&) {
            seen.push_back(r);
            auto& q = replies[curation::prompt_role(r.system_text)];
            if (q.empty()) throw Error("script exhausted for " + curation::prompt_role(r.system_text));
            auto s = q.front();
            q.pop_front();
            return s;
        });
        return std::make_shared<llm::Gateway>(t);
    }
};

curation::PromptLibrary prompts() { return curation::PromptLibrary::load(curation::PromptLibrary::default_dir()); }

std::string bounds_json(const std::string& arr) { return "```json\n{\"steps\": " + arr + "}\n```"; }

AttemptErrorReport report(const std::string& id, std::size_t idx,
                          std::vector<std::pair<ErrorCategory, Severity>> fs) {
    AttemptErrorReport r;
    r.problem_id = id;
    r.attempt_idx = idx;
    for (auto [c, s] : fs) r.findings.push_back({c, s, "1", to_string(c), ""});
    if (!r.findings.empty()) r.primary_category = r.findings.front().category;
    return r;
}

}  // namespace

TEST(Labels, FineGrainedAndCanonical) {
    EXPECT_EQ(normalize_label("sign error"), ErrorCategory::Mathematical);
    EXPECT_EQ(normalize_label("Sign_Error"), ErrorCategory::Mathematical);
    EXPECT_EQ(normalize_label("code bug"), ErrorCategory::Executional);
    EXPECT_EQ(normalize_label("  Code-Bug "), ErrorCategory::Executional);
    EXPECT_EQ(normalize_label("wrong identity"), ErrorCategory::Factual);
    EXPECT_EQ(normalize_label("unjustified assumption"), ErrorCategory::Logical);
    for (auto c : kAllCategories) EXPECT_EQ(normalize_label(to_string(c)), c);
    EXPECT_THROW(normalize_label("vibes"), UnknownLabel);
    EXPECT_THROW(normalize_label(""), UnknownLabel);
}

TEST(Labels, EveryTableEntryIsCanonicalised) {
    for (const auto& [label, cat] : label_table()) EXPECT_EQ(normalize_label(text::lower(label)), cat) << label;
}

TEST(Labels, Severity) {
    EXPECT_EQ(normalize_severity("Major"), Severity::Major);
    EXPECT_EQ(normalize_severity("critical"), Severity::Major);
    EXPECT_EQ(normalize_severity("minor"), Severity::Minor);
    EXPECT_THROW(normalize_severity("moderate"), UnknownLabel);
}

TEST(Steps, BoundaryValidation) {
    EXPECT_FALSE(boundary_problem({{1, 2}, {3, 5}}, 5));
    EXPECT_FALSE(boundary_problem({{2, 2}, {4, 5}}, 5));  // gaps allowed
    EXPECT_FALSE(boundary_problem({}, 0));
    EXPECT_TRUE(boundary_problem({{0, 2}}, 5));
    EXPECT_TRUE(boundary_problem({{3, 2}}, 5));
    EXPECT_TRUE(boundary_problem({{1, 6}}, 5));
    EXPECT_TRUE(boundary_problem({{1, 3}, {3, 4}}, 5));
    EXPECT_TRUE(boundary_problem({{3, 4}, {1, 2}}, 5));
}

TEST(Steps, ReconstructionIsVerbatim) {
    const std::string src = "alpha\nbeta  \n\ngamma\r\ndelta";
    auto steps = reconstruct_steps(src, {{1, 2}, {3, 5}});
    ASSERT_EQ(steps.size(), 2u);
    EXPECT_EQ(steps[0].text, "alpha\nbeta  \n");
    EXPECT_EQ(steps[1].text, "\ngamma\r\ndelta");
    EXPECT_EQ(steps[0].text + steps[1].text, src);
    EXPECT_EQ(steps[1].index, 2u);
    EXPECT_THROW(reconstruct_steps(src, {{1, 9}}), ConfigError);
}

TEST(Steps, SeparateCode) {
    const std::string src = "Start.\n```python\nx = 1\n```\nMiddle.\n```python\ndef f():\n    return 2\n```\nEnd.\n";
    auto split = separate_code(src);
    EXPECT_EQ(split.prose, "Start.\nMiddle.\nEnd.\n");
    EXPECT_EQ(split.code, "def f():\n    return 2");
    auto none = separate_code("no code here\n```\nunterminated\n");
    EXPECT_EQ(none.prose, "no code here\n```\nunterminated\n");
    EXPECT_EQ(none.code, "");
}

TEST(Decompose, SlicesOnHostAndRetriesOnce) {
    Script s;
    s.replies["decompose"] = {bounds_json("[[1, 3], [2, 4]]"), bounds_json("[[1, 2], [3, 4]]")};
    auto gw = s.gateway();
    auto g = decompose_golden("a\nb\nc\nd\n```python\ndef f():\n    return 1\n```\n", *gw, prompts());
    ASSERT_EQ(g.steps.size(), 2u);
    EXPECT_EQ(g.steps[1].text, "c\nd\n");
    EXPECT_EQ(g.code, "def f():\n    return 1");
    ASSERT_EQ(s.seen.size(), 2u);
    EXPECT_NE(s.seen[1].user_text.find("rejected"), std::string::npos);
    EXPECT_NE(s.seen[0].user_text.find("4: d"), std::string::npos);
}

TEST(Decompose, TwoBadRepliesFail) {
    Script s;
    s.replies["decompose"] = {"no json", bounds_json("[[1, 99]]")};
    auto gw = s.gateway();
    EXPECT_THROW(decompose_golden("a\nb\n", *gw, prompts()), AnalyzerFailure);
}

TEST(Dedup, ShortTracePassesWithoutRequest) {
    Script s;
    auto gw = s.gateway();
    auto r = dedup_trace("short trace", *gw, prompts(), {}, 100);
    EXPECT_FALSE(r.changed);
    EXPECT_EQ(r.text, "short trace");
    EXPECT_TRUE(s.seen.empty());
}

TEST(Dedup, SubsetEnforced) {
    std::string trace;
    for (int i = 0; i < 20; ++i) trace += "line number " + std::to_string(i) + " restating things\n";
    ASSERT_GT(text::approx_token_count(trace), 50u);

    Script ok;
    ok.replies["dedup"] = {"line number 3 restating things\nline number 7 restating things\n"};
    auto gw = ok.gateway();
    auto r = dedup_trace(trace, *gw, prompts(), {}, 50);
    EXPECT_TRUE(r.changed);
    EXPECT_TRUE(verify_subset_preservation(trace, r.text).empty());

    Script retry;
    retry.replies["dedup"] = {"line number 3 paraphrased\n", "line number 5 restating things\n"};
    auto gw2 = retry.gateway();
    EXPECT_EQ(dedup_trace(trace, *gw2, prompts(), {}, 50).text, "line number 5 restating things\n");
    EXPECT_NE(retry.seen[1].user_text.find("copy lines exactly"), std::string::npos);

    Script bad;
    bad.replies["dedup"] = {"made up\n", "line number 9 restating things\nline number 2 restating things\n"};
    auto gw3 = bad.gateway();
    try {
        dedup_trace(trace, *gw3, prompts(), {}, 50);
        FAIL() << "expected DedupFailed";
    } catch (const DedupFailed& e) {
        EXPECT_FALSE(e.violations().empty());
    }
}

TEST(Distill, TargetRangeIsSoft) {
    Script s;
    s.replies["distill"] = {bounds_json("[[1, 1], [2, 2]]")};
    auto gw = s.gateway();
    auto d = distill_steps("one\ntwo\n```python\ndef f():\n    return 0\n```\n", *gw, prompts());
    EXPECT_EQ(d.steps.size(), 2u);
    EXPECT_TRUE(d.outside_target);
    EXPECT_EQ(d.code, "def f():\n    return 0");

    Script none;
    auto gw2 = none.gateway();
    auto empty = distill_steps("", *gw2, prompts());
    EXPECT_TRUE(empty.steps.empty());
    EXPECT_TRUE(none.seen.empty());
}

TEST(Classification, ParseAndValidate) {
    auto r = parse_classification(
        "analysis...\n```json\n{\"findings\": [{\"label\": \"sign error\", \"severity\": \"critical\", \"step\": 3},"
        " {\"label\": \"code bug\", \"severity\": \"minor\", \"step\": \"code\", \"note\": \"C = 1/3\"}],"
        " \"primary\": \"mathematical\"}\n```");
    ASSERT_EQ(r.findings.size(), 2u);
    EXPECT_EQ(r.findings[0].category, ErrorCategory::Mathematical);
    EXPECT_EQ(r.findings[0].severity, Severity::Major);
    EXPECT_EQ(r.findings[0].step_ref, "3");
    EXPECT_EQ(r.findings[1].raw_label, "code bug");
    EXPECT_EQ(r.major_count(ErrorCategory::Executional), 0u);
    EXPECT_EQ(*r.primary_category, ErrorCategory::Mathematical);

    EXPECT_THROW(parse_classification(R"({"findings": [{"label": "code bug"}], "primary": "factual"})"), ParseError);
    EXPECT_THROW(parse_classification(R"({"findings": [{"label": "code bug"}]})"), ParseError);
    EXPECT_THROW(parse_classification(R"({"findings": [{"label": "gremlins"}], "primary": "gremlins"})"), UnknownLabel);
    auto clean = parse_classification(R"({"findings": [], "primary": null})");
    EXPECT_TRUE(clean.findings.empty());
}

TEST(Classification, PromptCarriesBothPrograms) {
    DistilledTrace d;
    d.steps = {{1, 1, 1, "Set C = 1/3.\n"}};
    GoldenSteps g;
    g.steps = {{1, 1, 1, "The constant is C = 1/4.\n"}};
    auto p = classification_user_prompt(d, g, "def f():\n    return 0.25\n", "");
    EXPECT_NE(p.find("[Step 1]\nSet C = 1/3."), std::string::npos);
    EXPECT_NE(p.find("C = 1/4"), std::string::npos);
    EXPECT_NE(p.find("return 0.25\n```"), std::string::npos);
    EXPECT_NE(p.find("# no code produced"), std::string::npos);
}

TEST(Classification, RetryThenFailure) {
    Script s;
    s.replies["classify"] = {"{\"findings\": [{\"label\": \"gremlins\"}], \"primary\": \"gremlins\"}",
                             R"({"findings": [{"label": "wrong identity", "step": 2}], "primary": "factual"})"};
    auto gw = s.gateway();
    auto r = classify_errors({}, {}, "", "", *gw, prompts(), "p16", 3);
    EXPECT_EQ(r.problem_id, "p16");
    EXPECT_EQ(r.attempt_idx, 3u);
    EXPECT_EQ(r.prompt_version, "1");
    EXPECT_EQ(r.findings[0].category, ErrorCategory::Factual);

    Script bad;
    bad.replies["classify"] = {"nope", "still nope"};
    auto gw2 = bad.gateway();
    EXPECT_THROW(classify_errors({}, {}, "", "", *gw2, prompts(), "p16", 0), AnalyzerFailure);
}

TEST(Pipeline, AnalyzeIncorrectRollout) {
    auto problem = vtp::testing::make_problem("p48", "def f(x: float) -> float:\n    pass\n",
                                              "def f(x):\n    return x / 4\n", {{Value(1.0)}});
    RolloutRecord r;
    r.problem_id = "p48";
    r.attempt_idx = 2;
    r.response_text = "<think>C is 1/3.\nSo f = x/3.</think>\nWe use C = 1/3.\n```python\ndef f(x):\n    return x / 3\n```\n";
    r.extracted_program = "def f(x):\n    return x / 3";
    r.reward = 0;

    Script s;
    s.replies["distill"] = {bounds_json("[[1, 2], [3, 3]]")};
    s.replies["classify"] = {R"({"findings": [{"label": "hardcoded value", "step": "code"}], "primary": "executional"})"};
    auto gw = s.gateway();
    GoldenSteps golden;
    auto rep = analyze_rollout(problem, r, golden, *gw, prompts());
    EXPECT_EQ(rep.problem_id, "p48");
    EXPECT_EQ(rep.attempt_idx, 2u);
    EXPECT_EQ(rep.major_count(ErrorCategory::Executional), 1u);
    EXPECT_NE(s.seen.back().user_text.find("return x / 3"), std::string::npos);
    EXPECT_NE(s.seen.back().user_text.find("return x / 4"), std::string::npos);

    r.reward = 1;
    EXPECT_THROW(analyze_rollout(problem, r, golden, *gw, prompts()), ConfigError);
}

TEST(Frequencies, RatioAndAdditivity) {
    std::vector<AttemptErrorReport> reports;
    for (int i = 0; i < 55; ++i)
        reports.push_back(report("p", i, {{ErrorCategory::Mathematical, Severity::Major}}));
    for (int i = 55; i < 70; ++i)
        reports.push_back(report("p", i, {{ErrorCategory::Logical, Severity::Major},
                                          {ErrorCategory::Mathematical, Severity::Minor},
                                          {ErrorCategory::Factual, Severity::Major}}));
    auto t = aggregate_frequencies(reports, 100);
    EXPECT_DOUBLE_EQ(t.categories[ErrorCategory::Mathematical].frequency, 0.55);
    EXPECT_DOUBLE_EQ(t.categories[ErrorCategory::Logical].frequency, 0.15);
    EXPECT_EQ(t.categories[ErrorCategory::Executional].major_count, 0u);
    std::size_t sum = 0, majors = 0;
    for (const auto& [c, f] : t.categories) sum += f.major_count;
    for (const auto& r : reports)
        for (const auto& f : r.findings) majors += f.severity == Severity::Major;
    EXPECT_EQ(sum, majors);
    EXPECT_THROW(aggregate_frequencies(reports, 0), ConfigError);
    EXPECT_THROW(aggregate_frequencies(reports, 10), ConfigError);
    EXPECT_EQ(frequency_csv(t).substr(0, 58), "category,major_count,frequency\nmathematical,55,0.5500\nlogi");
}

TEST(Pearson, ExactAndIndependent) {
    EXPECT_EQ(pearson({1, 2, 3}, {2, 4, 6}), 1.0);
    EXPECT_EQ(pearson({1, 2, 3}, {6, 4, 2}), -1.0);
    EXPECT_NEAR(pearson({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, 1e-12);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n01;
    std::vector<double> xs, ys;
    for (int i = 0; i < 1000; ++i) {
        xs.push_back(n01(rng));
        ys.push_back(n01(rng));
    }
    EXPECT_LT(std::abs(pearson(xs, ys)), 0.1);
    EXPECT_THROW(pearson({1, 1, 1}, {1, 2, 3}), ConfigError);
    EXPECT_THROW(pearson({1}, {1}), ConfigError);
    EXPECT_THROW(pearson({1, 2}, {1, 2, 3}), ConfigError);
}

TEST(TraceStats, ConditionalMeans) {
    std::vector<RolloutRecord> rs(4);
    const int rewards[] = {1, 1, 0, 0};
    const std::size_t tokens[] = {100, 300, 1000, 2000};
    for (int i = 0; i < 4; ++i) {
        rs[i].problem_id = "p";
        rs[i].attempt_idx = i;
        rs[i].reward = rewards[i];
        rs[i].token_count = tokens[i];
        rs[i].response_text = i < 2 ? "<think>fine</think>ok" : "<think>Wait, no. That is wrong.</think>ok";
    }
    EXPECT_THROW(trace_stats(rs), ConfigError);
    annotate_backtracking(rs, PatternSet::defaults());
    auto s = trace_stats(rs);
    EXPECT_DOUBLE_EQ(s.overall.mean_tokens, 850.0);
    EXPECT_DOUBLE_EQ(s.correct->mean_tokens, 200.0);
    EXPECT_DOUBLE_EQ(s.incorrect->mean_tokens, 1500.0);
    EXPECT_EQ(s.correct->mean_backtracks, 0.0);
    EXPECT_GT(s.incorrect->mean_backtracks, 0.0);
}

TEST(Agreement, CountsAllFindings) {
    std::map<std::string, std::vector<AttemptErrorReport>> sets;
    sets["A"] = {report("p1", 0, {{ErrorCategory::Mathematical, Severity::Major}, {ErrorCategory::Logical, Severity::Minor}}),
                 report("p1", 1, {{ErrorCategory::Factual, Severity::Major}})};
    sets["B"] = {report("p1", 0, {{ErrorCategory::Mathematical, Severity::Minor}}), report("p1", 1, {})};
    sets["C"] = {};
    auto t = analyzer_agreement(sets);
    EXPECT_EQ(t.rows["A"].total, 3u);
    EXPECT_EQ(t.rows["B"].total, 1u);
    EXPECT_EQ(t.rows["C"].total, 0u);
    EXPECT_DOUBLE_EQ(t.rows["A"].shares[ErrorCategory::Logical], 1.0 / 3.0);
    EXPECT_EQ((t.total_deltas[{"A", "B"}]), 2);
    auto csv = agreement_csv(t);
    EXPECT_NE(csv.find("total,3,100.0,1,100.0,0,0.0"), std::string::npos) << csv;

    sets["B"].pop_back();
    EXPECT_THROW(analyzer_agreement(sets), ConfigError);
    EXPECT_THROW(analyzer_agreement({{"A", {}}}), ConfigError);
}

TEST(ReportIo, Roundtrip) {
    auto r = report("p722", 4, {{ErrorCategory::Executional, Severity::Major}, {ErrorCategory::Factual, Severity::Minor}});
    r.findings[0].raw_label = "code bug";
    r.prompt_version = "1";
    EXPECT_EQ(report_from_json(to_json(r)), r);
    auto path = std::filesystem::temp_directory_path() / "vtp_reports.jsonl";
    save_reports({r, report("p1", 0, {})}, path);
    auto back = load_reports(path);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0], r);
    EXPECT_FALSE(back[1].primary_category);
}

TEST(Agreement, ShippedFixtureTotals) {
    std::map<std::string, std::vector<AttemptErrorReport>> sets;
    for (const char* name : {"A", "B", "C"})
        sets[name] = load_reports(vtp::testing::fixture(std::string("agreement/config_") + name + ".jsonl"));
    const auto t = analyzer_agreement(sets);
    const std::map<std::string, std::array<std::size_t, 4>> counts = {
        {"A", {70, 41, 35, 17}}, {"B", {83, 32, 36, 16}}, {"C", {80, 26, 23, 26}}};
    const std::map<std::string, std::array<long, 4>> percents = {
        {"A", {43, 25, 21, 10}}, {"B", {50, 19, 22, 10}}, {"C", {52, 17, 15, 17}}};
    const std::map<std::string, std::size_t> totals = {{"A", 163}, {"B", 167}, {"C", 155}};
    for (const auto& [name, row] : t.rows) {
        EXPECT_EQ(sets[name].size(), 52u);
        EXPECT_EQ(row.total, totals.at(name));
        for (std::size_t i = 0; i < 4; ++i) {
            EXPECT_EQ(row.counts.at(kAllCategories[i]), counts.at(name)[i]) << name << i;
            EXPECT_EQ(std::lround(100.0 * row.shares.at(kAllCategories[i])), percents.at(name)[i]) << name << i;
        }
    }
}
