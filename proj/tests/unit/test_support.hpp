#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtp/problem_model.hpp"
#include "vtp/text_util.hpp"

namespace vtp::testing {

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(VTP_FIXTURE_DIR) / rel; }

/// Minimal valid easy-tier record around a skeleton and golden program.
inline ProblemRecord make_problem(const std::string& id, const std::string& skeleton, const std::string& golden,
                                  const std::vector<std::vector<Value>>& inputs) {
    ProblemRecord r;
    r.id = id;
    r.dataset_tag = DatasetTag::Easy;
    r.domain_level = DomainLevel::GR;
    r.topic_id = "GR-1";
    r.task_types = {TaskCategory::DirectCalculation};
    r.statement = "Compute the quantity.";
    r.description = "Test problem.";
    r.answer_requirements = parse_function_spec(skeleton);
    r.solution = "By direct evaluation.";
    r.answer = "See code.";
    r.golden_program = golden;
    for (const auto& in : inputs) r.test_cases.push_back(TestCase{in, {}, std::nullopt});
    return r;
}

/// A hand-authored problem plus values computed by CPython from its golden program.
struct FixtureProblem {
    ProblemRecord record;
    std::vector<Value> oracle;
    std::optional<std::pair<std::string, std::string>> mutation;  // golden substring -> replacement

    std::string mutated_program() const {
        return text::replace_all(record.golden_program, mutation->first, mutation->second);
    }
};

inline std::vector<FixtureProblem> golden_fixture() {
    std::ifstream in(fixture("golden_problems.jsonl"));
    std::vector<FixtureProblem> out;
    std::string line;
    while (std::getline(in, line)) {
        if (text::is_blank(line)) continue;
        const auto j = nlohmann::json::parse(line);
        FixtureProblem f;
        auto& r = f.record;
        r.id = j["id"];
        r.dataset_tag = dataset_tag_from_string(j["dataset_tag"].get<std::string>());
        r.domain_level = domain_level_from_string(j["domain_level"].get<std::string>());
        r.topic_id = j["topic_id"];
        for (const auto& t : j["task_types"]) r.task_types.push_back(task_category_from_string(t.get<std::string>()));
        r.statement = j["statement"];
        r.description = r.statement;
        r.answer_requirements = parse_function_spec(j["skeleton"].get<std::string>());
        r.solution = "See statement.";
        r.answer = "See code.";
        r.golden_program = j["golden_program"];
        const auto& kinds = r.answer_requirements.params;
        for (const auto& args : j["inputs"]) {
            TestCase tc;
            for (std::size_t k = 0; k < args.size(); ++k) {
                auto v = value_from_json(args[k]);
                if (kinds[k].kind.tag == ValueKind::Tag::Real && v.is_int()) v = Value(v.to_double());
                tc.inputs.push_back(std::move(v));
            }
            r.test_cases.push_back(std::move(tc));
        }
        for (const auto& o : j["oracle"]) f.oracle.push_back(value_from_json(o));
        if (!j["mutation"].is_null()) f.mutation = {{j["mutation"]["from"], j["mutation"]["to"]}};
        out.push_back(std::move(f));
    }
    return out;
}

}  // namespace vtp::testing
