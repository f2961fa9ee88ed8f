#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtp/error.hpp"
#include "vtp/value.hpp"

namespace vtp {

enum class DatasetTag { Easy, Medium, Hard, Pedagogy, Arxiv };
enum class DomainLevel { AU, GR, AG, PG };

enum class TaskCategory {
    DirectCalculation,
    HiddenCoefficient,
    RatioComparison,
    CategoricalClassification,
    LogicalConsistency,
};
inline constexpr std::array<TaskCategory, 5> kAllTaskCategories = {
    TaskCategory::DirectCalculation, TaskCategory::HiddenCoefficient, TaskCategory::RatioComparison,
    TaskCategory::CategoricalClassification, TaskCategory::LogicalConsistency};

enum class QualityMetric {
    SeedCorrespondence,
    ProblemDefinition,
    SolutionCompleteness,
    ExplanatoryQuality,
    TestCaseQuality,
};
inline constexpr std::array<QualityMetric, 5> kAllQualityMetrics = {
    QualityMetric::SeedCorrespondence, QualityMetric::ProblemDefinition, QualityMetric::SolutionCompleteness,
    QualityMetric::ExplanatoryQuality, QualityMetric::TestCaseQuality};

enum class Ordinal { VeryPoor, Poor, Fair, Good, Excellent };

std::string to_string(DatasetTag);
std::string to_string(DomainLevel);
std::string to_string(TaskCategory);
std::string to_string(QualityMetric);
std::string to_string(Ordinal);
DatasetTag dataset_tag_from_string(std::string_view);
DomainLevel domain_level_from_string(std::string_view);
TaskCategory task_category_from_string(std::string_view);
QualityMetric quality_metric_from_string(std::string_view);
/// Accepts "VeryPoor", "Very Poor", "very_poor", ... case-insensitively.
Ordinal ordinal_from_string(std::string_view);

/// Human-adapted datasets come from collected seeds rather than synthetic topics.
inline bool is_human_adapted(DatasetTag t) { return t == DatasetTag::Pedagogy || t == DatasetTag::Arxiv; }

struct Param {
    std::string name;
    ValueKind kind;
    friend bool operator==(const Param&, const Param&) = default;
};

/// Guest-language function signature the golden program and candidates implement.
struct FunctionSpec {
    std::string name;
    std::vector<Param> params;
    ReturnSpec returns;
    std::string docstring;
    std::string skeleton;  // verbatim Answer Requirements text shown to solvers
    friend bool operator==(const FunctionSpec&, const FunctionSpec&) = default;
};

/// Parses a guest-language skeleton (`def f(x: float, n: int) -> tuple[float, bool]:` plus
/// docstring). Categorical options for `str` values are read from the first `{...}`/`[...]`
/// set of quoted strings on a docstring line that mentions the parameter (or the return value).
FunctionSpec parse_function_spec(std::string_view skeleton);

struct ComparisonPolicy {
    enum class StringMode { ExactTrimmed };
    double rel_tol = 1e-6;
    double abs_tol = 1e-9;
    StringMode string_mode = StringMode::ExactTrimmed;
    /// Integers compare against reals under tolerance when the declared kind is real/complex.
    bool promote_integers = true;
    friend bool operator==(const ComparisonPolicy&, const ComparisonPolicy&) = default;
};

struct TestCase {
    std::vector<Value> inputs;
    ComparisonPolicy comparison;
    std::optional<Value> expected;
    friend bool operator==(const TestCase&, const TestCase&) = default;
};

struct QualityReport {
    std::string grader_id;
    std::map<QualityMetric, Ordinal> scores;
    std::optional<double> numeric_score;  // 0-100 when the grader reports one
    friend bool operator==(const QualityReport&, const QualityReport&) = default;
};

struct ProblemRecord {
    std::string id;
    DatasetTag dataset_tag = DatasetTag::Easy;
    DomainLevel domain_level = DomainLevel::AU;
    std::string topic_id;
    std::vector<TaskCategory> task_types;
    std::string statement;
    std::string description;
    FunctionSpec answer_requirements;
    std::string solution;
    std::string answer;
    std::string golden_program;
    std::vector<TestCase> test_cases;
    std::optional<std::string> conventions;
    std::vector<QualityReport> quality_reports;
    friend bool operator==(const ProblemRecord&, const ProblemRecord&) = default;
};

/// Per-dataset stage counts.
struct ManifestRow {
    std::size_t initial_count = 0;
    std::size_t passed_qc = 0;
    std::size_t passed_qc_frontier = 0;
    friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

class ManifestError : public Error {
public:
    using Error::Error;
};

struct DatasetManifest {
    std::map<DatasetTag, ManifestRow> rows;

    /// Throws ManifestError unless initial >= qc >= qc+frontier.
    void set(DatasetTag tag, const ManifestRow& row);
    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// ---------------------------------------------------------------------------
// Generator output parsing

inline constexpr std::array<std::string_view, 6> kSectionNames = {
    "Problem", "Problem Description", "Answer Requirements", "Solution", "Answer", "Code"};

class MissingSection : public ParseError {
public:
    explicit MissingSection(std::string name) : ParseError("missing section '" + name + "'"), name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class DuplicateSection : public ParseError {
public:
    explicit DuplicateSection(std::string name)
        : ParseError("duplicate section '" + name + "'"), name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class EmptyCodeSection : public ParseError {
public:
    EmptyCodeSection() : ParseError("Code section has no non-blank fenced block") {}
};

struct Section {
    std::string name;
    std::size_t marker_offset = 0;  // byte offset of the marker line in raw
    std::string body;               // verbatim slice following the marker line
};

/// Six-section generator output.
struct DraftProblem {
    std::vector<Section> sections;  // in order of appearance
    std::string golden_program;

    const std::string& body(std::string_view name) const;
    const std::string& statement() const { return body("Problem"); }
    const std::string& description() const { return body("Problem Description"); }
    const std::string& answer_requirements() const { return body("Answer Requirements"); }
    const std::string& solution() const { return body("Solution"); }
    const std::string& answer() const { return body("Answer"); }
    const std::string& code() const { return body("Code"); }
};

/// Splits generator output on `\section{Name}` lines (exact, at line start, case-sensitive).
DraftProblem parse_generated_sections(std::string_view raw);

// ---------------------------------------------------------------------------
// Validation

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

ValidationReport validate_problem(const ProblemRecord& record);

// ---------------------------------------------------------------------------
// Serialization and dataset IO

nlohmann::json to_json(const FunctionSpec&);
FunctionSpec function_spec_from_json(const nlohmann::json&);
nlohmann::json to_json(const ComparisonPolicy&);
ComparisonPolicy comparison_policy_from_json(const nlohmann::json&);
nlohmann::json to_json(const TestCase&);
TestCase test_case_from_json(const nlohmann::json&);
nlohmann::json to_json(const QualityReport&);
QualityReport quality_report_from_json(const nlohmann::json&);
nlohmann::json to_json(const ProblemRecord&);
ProblemRecord problem_from_json(const nlohmann::json&);
nlohmann::json to_json(const DatasetManifest&);
DatasetManifest manifest_from_json(const nlohmann::json&);

/// Adapter for externally published record layouts: maps a foreign document to the native
/// field layout before decoding. Identity by default.
using ImportAdapter = std::function<nlohmann::json(const nlohmann::json&)>;

struct Dataset {
    std::vector<ProblemRecord> records;
    DatasetManifest manifest;
};

/// Sidecar manifest path for a dataset file: `<path>.manifest.json`.
std::filesystem::path manifest_path_for(const std::filesystem::path& dataset);

/// Reads one record per line. Blank lines are skipped. Errors carry the 1-based line number;
/// duplicate ids raise. The sidecar manifest is loaded when present.
Dataset load_dataset(const std::filesystem::path& path, const ImportAdapter& adapter = {});
void save_dataset(const std::vector<ProblemRecord>& records, const std::filesystem::path& path,
                  const std::optional<DatasetManifest>& manifest = std::nullopt);

}  // namespace vtp
