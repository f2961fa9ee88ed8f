#include <gtest/gtest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "vtp/response_parsing.hpp"

using namespace vtp;

TEST(Extraction, Corpus) {
    std::ifstream in(vtp::testing::fixture("extraction_corpus.json"));
    const auto corpus = nlohmann::json::parse(in);
    ASSERT_EQ(corpus.size(), 30u);
    for (const auto& c : corpus) {
        const auto response = c["response"].get<std::string>();
        SCOPED_TRACE(c["name"].get<std::string>());
        if (c["expected_code"].is_null()) {
            EXPECT_THROW(extract_final_code_block(response), NoCodeBlock);
        } else {
            EXPECT_EQ(extract_final_code_block(response), c["expected_code"].get<std::string>());
        }
        if (c["unbalanced"].get<bool>()) {
            EXPECT_THROW(segment_response(response), UnbalancedMarkers);
            continue;
        }
        const auto seg = segment_response(response);
        if (c["expected_think"].is_null()) {
            EXPECT_FALSE(seg.think_text.has_value());
        } else {
            ASSERT_TRUE(seg.think_text.has_value());
            EXPECT_EQ(*seg.think_text, c["expected_think"].get<std::string>());
        }
    }
}

TEST(Extraction, BlocksCarryTagsAndOffsets) {
    const std::string text = "a\n```python\nx = 1\n```\n```\ny\n```\n";
    const auto blocks = extract_code_blocks(text);
    ASSERT_EQ(blocks.size(), 2u);
    EXPECT_EQ(*blocks[0].language_tag, "python");
    EXPECT_FALSE(blocks[1].language_tag.has_value());
    EXPECT_EQ(text.substr(blocks[0].offset, 5), "x = 1");
}

TEST(Segmentation, AnswerJoinsOutsideText) {
    const auto seg = segment_response("before <think>inner</think> after");
    EXPECT_EQ(*seg.think_text, "inner");
    EXPECT_EQ(seg.answer_text, "before  after");
    const auto custom = segment_response("[[r]]x[[/r]]y", "[[r]]", "[[/r]]");
    EXPECT_EQ(*custom.think_text, "x");
    EXPECT_EQ(custom.answer_text, "y");
}

TEST(Backtracking, DefaultsCountCorrectivePhrases) {
    const auto p = PatternSet::defaults();
    EXPECT_EQ(p.size(), 13u);
    EXPECT_EQ(count_backtracking("Hmm. Actually, let me think about it.", p).count, 0u);
    EXPECT_EQ(count_backtracking("Wait, no. Let me recalculate. I made a mistake.", p).count, 3u);
    EXPECT_EQ(count_backtracking("WAIT NO", p).count, 1u);
    EXPECT_EQ(count_backtracking("", p).count, 0u);
}

TEST(Backtracking, OverlapsResolvedByEarliestLongest) {
    PatternSet p({{"short", "wait"}, {"long", "wait,? no"}, {"later", "no"}});
    const auto r = count_backtracking("wait, no", p);
    ASSERT_EQ(r.count, 1u);
    EXPECT_EQ(r.matches[0].pattern_id, "long");
    EXPECT_EQ(r.matches[0].end, 8u);
}

TEST(Backtracking, FromText) {
    const auto p = PatternSet::from_text("# comment\n\nfix\tfix(ed)?\noops\n");
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p.patterns()[0].id, "fix");
    EXPECT_EQ(p.patterns()[1].id, "p2");
    EXPECT_THROW(PatternSet::from_text("bad(\n"), InvalidPattern);
}

TEST(Subset, PreservationChecks) {
    const std::string original = "alpha  one\nbeta\ngamma\ndelta\n";
    EXPECT_TRUE(verify_subset_preservation(original, "alpha one\n\ndelta\n").empty());
    EXPECT_TRUE(verify_subset_preservation(original, "").empty());
    auto v = verify_subset_preservation(original, "delta\nbeta\n");
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].reason, SubsetViolation::Reason::OutOfOrder);
    EXPECT_EQ(v[0].candidate_line, 2u);
    v = verify_subset_preservation(original, "beta\nepsilon\ngamma\n");
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].reason, SubsetViolation::Reason::NotFound);
    EXPECT_FALSE(v[0].describe().empty());
    EXPECT_EQ(verify_subset_preservation(original, "beta\nbeta\n").size(), 1u);
}
