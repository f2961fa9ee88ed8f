#include "vtp/problem_model.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "vtp/response_parsing.hpp"
#include "vtp/text_util.hpp"

namespace vtp {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Enumerations

namespace {

template <typename E, std::size_t N>
E enum_from(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table, const char* what) {
    for (const auto& [e, name] : table) {
        if (name == s) return e;
    }
    throw ParseError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string enum_to(E e, const std::array<std::pair<E, std::string_view>, N>& table) {
    for (const auto& [v, name] : table) {
        if (v == e) return std::string(name);
    }
    return "?";
}

constexpr std::array<std::pair<DatasetTag, std::string_view>, 5> kDatasetTags{{
    {DatasetTag::Easy, "easy"},
    {DatasetTag::Medium, "medium"},
    {DatasetTag::Hard, "hard"},
    {DatasetTag::Pedagogy, "pedagogy"},
    {DatasetTag::Arxiv, "arxiv"},
}};
constexpr std::array<std::pair<DomainLevel, std::string_view>, 4> kDomainLevels{{
    {DomainLevel::AU, "AU"},
    {DomainLevel::GR, "GR"},
    {DomainLevel::AG, "AG"},
    {DomainLevel::PG, "PG"},
}};
constexpr std::array<std::pair<TaskCategory, std::string_view>, 5> kTaskCategories{{
    {TaskCategory::DirectCalculation, "direct_calculation"},
    {TaskCategory::HiddenCoefficient, "hidden_coefficient"},
    {TaskCategory::RatioComparison, "ratio_comparison"},
    {TaskCategory::CategoricalClassification, "categorical_classification"},
    {TaskCategory::LogicalConsistency, "logical_consistency"},
}};
constexpr std::array<std::pair<QualityMetric, std::string_view>, 5> kQualityMetrics{{
    {QualityMetric::SeedCorrespondence, "seed_correspondence"},
    {QualityMetric::ProblemDefinition, "problem_definition"},
    {QualityMetric::SolutionCompleteness, "solution_completeness"},
    {QualityMetric::ExplanatoryQuality, "explanatory_quality"},
    {QualityMetric::TestCaseQuality, "test_case_quality"},
}};
constexpr std::array<std::pair<Ordinal, std::string_view>, 5> kOrdinals{{
    {Ordinal::VeryPoor, "VeryPoor"},
    {Ordinal::Poor, "Poor"},
    {Ordinal::Fair, "Fair"},
    {Ordinal::Good, "Good"},
    {Ordinal::Excellent, "Excellent"},
}};

}  // namespace

std::string to_string(DatasetTag t) { return enum_to(t, kDatasetTags); }
std::string to_string(DomainLevel l) { return enum_to(l, kDomainLevels); }
std::string to_string(TaskCategory c) { return enum_to(c, kTaskCategories); }
std::string to_string(QualityMetric m) { return enum_to(m, kQualityMetrics); }
std::string to_string(Ordinal o) { return enum_to(o, kOrdinals); }

DatasetTag dataset_tag_from_string(std::string_view s) { return enum_from(s, kDatasetTags, "dataset tag"); }
DomainLevel domain_level_from_string(std::string_view s) { return enum_from(s, kDomainLevels, "domain level"); }
TaskCategory task_category_from_string(std::string_view s) { return enum_from(s, kTaskCategories, "task category"); }
QualityMetric quality_metric_from_string(std::string_view s) { return enum_from(s, kQualityMetrics, "quality metric"); }

Ordinal ordinal_from_string(std::string_view s) {
    std::string key;
    for (char c : s) {
        if (c == ' ' || c == '_' || c == '-') continue;
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    for (const auto& [o, name] : kOrdinals) {
        if (text::lower(name) == key) return o;
    }
    throw ParseError("unknown quality ordinal '" + std::string(s) + "'");
}

void DatasetManifest::set(DatasetTag tag, const ManifestRow& row) {
    if (!(row.initial_count >= row.passed_qc && row.passed_qc >= row.passed_qc_frontier)) {
        throw ManifestError("manifest counts for " + to_string(tag) + " are not monotone: " +
                            std::to_string(row.initial_count) + "/" + std::to_string(row.passed_qc) + "/" +
                            std::to_string(row.passed_qc_frontier));
    }
    rows[tag] = row;
}

// ---------------------------------------------------------------------------
// Function skeleton parsing

namespace {

/// Splits on commas that are not nested inside brackets or quotes.
std::vector<std::string> split_top_level(std::string_view s) {
    std::vector<std::string> out;
    int depth = 0;
    char quote = 0;
    std::string cur;
    for (char c : s) {
        if (quote) {
            cur.push_back(c);
            if (c == quote) quote = 0;
            continue;
        }
        if (c == '"' || c == '\'') quote = c;
        if (c == '[' || c == '(' || c == '{') ++depth;
        if (c == ']' || c == ')' || c == '}') --depth;
        if (c == ',' && depth == 0) {
            out.push_back(cur);
            cur.clear();
            continue;
        }
        cur.push_back(c);
    }
    if (!text::is_blank(cur)) out.push_back(cur);
    return out;
}

std::vector<std::string> quoted_set_on_line(std::string_view line) {
    static const std::regex set_re(R"re([\{\[]\s*((?:"[^"]*"|'[^']*')(?:\s*,\s*(?:"[^"]*"|'[^']*'))*)\s*,?\s*[\}\]])re");
    static const std::regex item_re(R"re("([^"]*)"|'([^']*)')re");
    std::string l(line);
    std::smatch m;
    if (!std::regex_search(l, m, set_re)) return {};
    std::vector<std::string> items;
    const std::string inner = m[1].str();
    for (auto it = std::sregex_iterator(inner.begin(), inner.end(), item_re); it != std::sregex_iterator(); ++it) {
        items.push_back((*it)[1].matched ? (*it)[1].str() : (*it)[2].str());
    }
    return items;
}

std::vector<std::string> options_for(std::string_view docstring, const std::function<bool(std::string_view)>& pick) {
    for (const auto& l : text::lines(docstring)) {
        if (!pick(l.text)) continue;
        auto opts = quoted_set_on_line(l.text);
        if (!opts.empty()) return opts;
    }
    return {};
}

bool mentions_word(std::string_view line, std::string_view word) {
    std::size_t pos = 0;
    auto is_ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    while ((pos = line.find(word, pos)) != std::string_view::npos) {
        bool left = pos == 0 || !is_ident(line[pos - 1]);
        bool right = pos + word.size() >= line.size() || !is_ident(line[pos + word.size()]);
        if (left && right) return true;
        pos += word.size();
    }
    return false;
}

ValueKind kind_from_annotation(std::string_view ann, const std::vector<std::string>& categorical_options) {
    auto a = std::string(text::trim(ann));
    a.erase(std::remove(a.begin(), a.end(), ' '), a.end());
    if (a.empty() || a == "float" || a == "np.float64" || a == "numpy.float64") return ValueKind::real();
    if (a == "complex" || a == "np.complex128") return ValueKind::complex();
    if (a == "int" || a == "np.int64") return ValueKind::integer();
    if (a == "bool") return ValueKind::boolean();
    if (a == "str") return ValueKind::categorical(categorical_options);
    for (std::string_view prefix : {"tuple[", "Tuple[", "typing.Tuple["}) {
        if (text::starts_with(a, prefix) && a.back() == ']') {
            auto inner = std::string_view(a).substr(prefix.size(), a.size() - prefix.size() - 1);
            std::vector<ValueKind> elems;
            for (const auto& part : split_top_level(inner)) {
                elems.push_back(kind_from_annotation(part, categorical_options));
            }
            return ValueKind::tuple(std::move(elems));
        }
    }
    throw ParseError("unsupported type annotation '" + std::string(ann) + "'");
}

}  // namespace

FunctionSpec parse_function_spec(std::string_view skeleton) {
    static const std::regex def_re(R"(def\s+([A-Za-z_][A-Za-z0-9_]*)\s*\()");
    const std::string src(skeleton);
    std::smatch m;
    if (!std::regex_search(src, m, def_re)) throw ParseError("no function definition found in skeleton");

    FunctionSpec spec;
    spec.name = m[1].str();
    spec.skeleton = std::string(text::trim(skeleton));

    // Balanced parameter list.
    std::size_t pos = static_cast<std::size_t>(m.position(0) + m.length(0));
    int depth = 1;
    std::size_t start = pos;
    while (pos < src.size() && depth > 0) {
        if (src[pos] == '(' || src[pos] == '[') ++depth;
        if (src[pos] == ')' || src[pos] == ']') --depth;
        ++pos;
    }
    if (depth != 0) throw ParseError("unterminated parameter list in skeleton");
    const std::string params_text = src.substr(start, pos - 1 - start);

    const auto colon = src.find(':', pos);
    if (colon == std::string::npos) throw ParseError("function header lacks ':'");
    std::string ret_ann;
    if (auto arrow = src.find("->", pos); arrow != std::string::npos && arrow < colon) {
        ret_ann = src.substr(arrow + 2, colon - arrow - 2);
    }

    // Docstring: first triple-quoted string after the header.
    for (std::string_view q : {"\"\"\"", "'''"}) {
        auto b = src.find(q, colon);
        if (b == std::string::npos) continue;
        auto e = src.find(q, b + 3);
        if (e == std::string::npos) continue;
        spec.docstring = std::string(text::trim(std::string_view(src).substr(b + 3, e - b - 3)));
        break;
    }

    std::set<std::string> seen;
    for (const auto& raw : split_top_level(params_text)) {
        auto p = std::string(text::trim(raw));
        if (p.empty() || p == "self" || p.front() == '*') continue;
        if (auto eq = p.find('='); eq != std::string::npos) p = std::string(text::trim(std::string_view(p).substr(0, eq)));
        std::string name = p, ann;
        if (auto c = p.find(':'); c != std::string::npos) {
            name = std::string(text::trim(std::string_view(p).substr(0, c)));
            ann = p.substr(c + 1);
        }
        auto opts = options_for(spec.docstring, [&](std::string_view l) { return mentions_word(l, name); });
        spec.params.push_back({name, kind_from_annotation(ann, opts)});
        seen.insert(name);
    }
    auto ret_opts = options_for(spec.docstring, [](std::string_view l) {
        auto low = text::lower(l);
        return low.find("return") != std::string::npos || low.find("output") != std::string::npos;
    });
    spec.returns = kind_from_annotation(ret_ann, ret_opts);
    return spec;
}

// ---------------------------------------------------------------------------
// Generator output

const std::string& DraftProblem::body(std::string_view name) const {
    for (const auto& s : sections) {
        if (s.name == name) return s.body;
    }
    throw MissingSection(std::string(name));
}

DraftProblem parse_generated_sections(std::string_view raw) {
    struct Marker {
        std::string name;
        std::size_t line_offset;
        std::size_t body_offset;
    };
    std::vector<Marker> markers;
    for (const auto& line : text::lines(raw)) {
        auto t = text::trim_right(line.text);
        if (!text::starts_with(t, "\\section{") || t.back() != '}') continue;
        auto name = t.substr(9, t.size() - 10);
        if (std::find(kSectionNames.begin(), kSectionNames.end(), name) == kSectionNames.end()) continue;
        markers.push_back({std::string(name), line.offset, line.end});
    }

    DraftProblem draft;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < markers.size(); ++i) {
        if (!seen.insert(markers[i].name).second) throw DuplicateSection(markers[i].name);
        std::size_t end = i + 1 < markers.size() ? markers[i + 1].line_offset : raw.size();
        draft.sections.push_back(
            {markers[i].name, markers[i].line_offset, std::string(raw.substr(markers[i].body_offset, end - markers[i].body_offset))});
    }
    for (auto name : kSectionNames) {
        if (!seen.count(std::string(name))) throw MissingSection(std::string(name));
    }
    try {
        draft.golden_program = extract_final_code_block(draft.code());
    } catch (const NoCodeBlock&) {
        throw EmptyCodeSection();
    }
    return draft;
}

// ---------------------------------------------------------------------------
// Validation

ValidationReport validate_problem(const ProblemRecord& r) {
    ValidationReport rep;
    auto add = [&](std::string v) { rep.violations.push_back(std::move(v)); };

    if (text::is_blank(r.id)) add("id blank");
    if (text::is_blank(r.statement)) add("statement blank");
    if (text::is_blank(r.golden_program)) add("golden_program blank");
    if (r.test_cases.empty()) add("test_cases empty");

    if (r.task_types.empty()) {
        add("task_types empty");
    } else if (r.dataset_tag == DatasetTag::Hard) {
        if (r.task_types.size() > 5) add("task count exceeds 5");
    } else if ((r.dataset_tag == DatasetTag::Easy || r.dataset_tag == DatasetTag::Medium) && r.task_types.size() != 1) {
        add("task count must be 1 for " + to_string(r.dataset_tag));
    }

    const auto& fs = r.answer_requirements;
    if (text::is_blank(fs.name)) add("answer_requirements.name blank");
    std::set<std::string> names;
    for (const auto& p : fs.params) {
        if (!names.insert(p.name).second) add("duplicate parameter '" + p.name + "'");
        if (auto v = kind_violation(p.kind); !v.empty()) add("parameter '" + p.name + "': " + v);
    }
    if (auto v = kind_violation(fs.returns); !v.empty()) add("returns: " + v);

    for (std::size_t i = 0; i < r.test_cases.size(); ++i) {
        const auto& tc = r.test_cases[i];
        const auto label = "test_cases[" + std::to_string(i) + "]";
        if (tc.inputs.size() != fs.params.size()) {
            add(label + ": arity " + std::to_string(tc.inputs.size()) + " != " + std::to_string(fs.params.size()));
            continue;
        }
        for (std::size_t k = 0; k < tc.inputs.size(); ++k) {
            if (!matches_kind(tc.inputs[k], fs.params[k].kind)) {
                add(label + ": input '" + fs.params[k].name + "' = " + to_display(tc.inputs[k]) + " does not match " +
                    describe(fs.params[k].kind));
            }
        }
        if (tc.comparison.rel_tol < 0 || tc.comparison.abs_tol < 0) add(label + ": negative tolerance");
        if (tc.expected && !matches_kind(*tc.expected, fs.returns)) add(label + ": expected value does not match returns");
    }

    const bool human = is_human_adapted(r.dataset_tag);
    for (std::size_t i = 0; i < r.quality_reports.size(); ++i) {
        const auto& q = r.quality_reports[i];
        const bool has_seed = q.scores.count(QualityMetric::SeedCorrespondence) > 0;
        if (human && !has_seed) add("quality_reports[" + std::to_string(i) + "]: seed_correspondence missing");
        if (!human && has_seed) add("quality_reports[" + std::to_string(i) + "]: seed_correspondence on synthetic record");
        if (q.numeric_score && (*q.numeric_score < 0 || *q.numeric_score > 100)) {
            add("quality_reports[" + std::to_string(i) + "]: numeric_score outside 0-100");
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const FunctionSpec& f) {
    json params = json::array();
    for (const auto& p : f.params) params.push_back({{"name", p.name}, {"kind", kind_to_json(p.kind)}});
    return {{"name", f.name},
            {"params", params},
            {"returns", kind_to_json(f.returns)},
            {"docstring", f.docstring},
            {"skeleton", f.skeleton}};
}

FunctionSpec function_spec_from_json(const json& j) {
    FunctionSpec f;
    f.name = j.at("name").get<std::string>();
    for (const auto& p : j.at("params")) f.params.push_back({p.at("name").get<std::string>(), kind_from_json(p.at("kind"))});
    f.returns = kind_from_json(j.at("returns"));
    f.docstring = j.value("docstring", "");
    f.skeleton = j.value("skeleton", "");
    return f;
}

json to_json(const ComparisonPolicy& c) {
    return {{"rel_tol", c.rel_tol}, {"abs_tol", c.abs_tol}, {"string_mode", "exact_trimmed"},
            {"promote_integers", c.promote_integers}};
}

ComparisonPolicy comparison_policy_from_json(const json& j) {
    ComparisonPolicy c;
    c.rel_tol = j.value("rel_tol", c.rel_tol);
    c.abs_tol = j.value("abs_tol", c.abs_tol);
    if (j.value("string_mode", std::string("exact_trimmed")) != "exact_trimmed") {
        throw ParseError("unknown string_mode " + j.at("string_mode").dump());
    }
    c.promote_integers = j.value("promote_integers", true);
    return c;
}

json to_json(const TestCase& t) {
    json inputs = json::array();
    for (const auto& v : t.inputs) inputs.push_back(value_to_json(v));
    json j{{"inputs", inputs}, {"comparison", to_json(t.comparison)}};
    j["expected"] = t.expected ? value_to_json(*t.expected) : json(nullptr);
    return j;
}

TestCase test_case_from_json(const json& j) {
    TestCase t;
    for (const auto& v : j.at("inputs")) t.inputs.push_back(value_from_json(v));
    if (j.contains("comparison")) t.comparison = comparison_policy_from_json(j.at("comparison"));
    if (j.contains("expected") && !j.at("expected").is_null()) t.expected = value_from_json(j.at("expected"));
    return t;
}

json to_json(const QualityReport& q) {
    json scores = json::object();
    for (const auto& [m, o] : q.scores) scores[to_string(m)] = to_string(o);
    json j{{"grader_id", q.grader_id}, {"scores", scores}};
    j["numeric_score"] = q.numeric_score ? json(*q.numeric_score) : json(nullptr);
    return j;
}

QualityReport quality_report_from_json(const json& j) {
    QualityReport q;
    q.grader_id = j.value("grader_id", "");
    for (const auto& [k, v] : j.at("scores").items()) {
        q.scores[quality_metric_from_string(k)] = ordinal_from_string(v.get<std::string>());
    }
    if (j.contains("numeric_score") && !j.at("numeric_score").is_null()) q.numeric_score = j.at("numeric_score").get<double>();
    return q;
}

json to_json(const ProblemRecord& r) {
    json tasks = json::array();
    for (auto t : r.task_types) tasks.push_back(to_string(t));
    json tests = json::array();
    for (const auto& t : r.test_cases) tests.push_back(to_json(t));
    json reports = json::array();
    for (const auto& q : r.quality_reports) reports.push_back(to_json(q));
    json j{{"id", r.id},
           {"dataset_tag", to_string(r.dataset_tag)},
           {"domain_level", to_string(r.domain_level)},
           {"topic_id", r.topic_id},
           {"task_types", tasks},
           {"statement", r.statement},
           {"description", r.description},
           {"answer_requirements", to_json(r.answer_requirements)},
           {"solution", r.solution},
           {"answer", r.answer},
           {"golden_program", r.golden_program},
           {"test_cases", tests},
           {"quality_reports", reports}};
    j["conventions"] = r.conventions ? json(*r.conventions) : json(nullptr);
    return j;
}

ProblemRecord problem_from_json(const json& j) {
    ProblemRecord r;
    r.id = j.at("id").get<std::string>();
    r.dataset_tag = dataset_tag_from_string(j.at("dataset_tag").get<std::string>());
    r.domain_level = domain_level_from_string(j.at("domain_level").get<std::string>());
    r.topic_id = j.value("topic_id", "");
    for (const auto& t : j.at("task_types")) r.task_types.push_back(task_category_from_string(t.get<std::string>()));
    r.statement = j.at("statement").get<std::string>();
    r.description = j.value("description", "");
    r.answer_requirements = function_spec_from_json(j.at("answer_requirements"));
    r.solution = j.value("solution", "");
    r.answer = j.value("answer", "");
    r.golden_program = j.at("golden_program").get<std::string>();
    for (const auto& t : j.at("test_cases")) r.test_cases.push_back(test_case_from_json(t));
    if (j.contains("conventions") && !j.at("conventions").is_null()) r.conventions = j.at("conventions").get<std::string>();
    if (j.contains("quality_reports")) {
        for (const auto& q : j.at("quality_reports")) r.quality_reports.push_back(quality_report_from_json(q));
    }
    return r;
}

json to_json(const DatasetManifest& m) {
    json j = json::object();
    for (const auto& [tag, row] : m.rows) {
        j[to_string(tag)] = {{"initial_count", row.initial_count},
                             {"passed_qc", row.passed_qc},
                             {"passed_qc_frontier", row.passed_qc_frontier}};
    }
    return j;
}

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    for (const auto& [k, v] : j.items()) {
        m.set(dataset_tag_from_string(k), {v.at("initial_count").get<std::size_t>(), v.at("passed_qc").get<std::size_t>(),
                                           v.at("passed_qc_frontier").get<std::size_t>()});
    }
    return m;
}

// ---------------------------------------------------------------------------
// Dataset IO

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset) {
    return dataset.string() + ".manifest.json";
}

Dataset load_dataset(const std::filesystem::path& path, const ImportAdapter& adapter) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset " + path.string());
    Dataset ds;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::is_blank(line)) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("invalid document: ") + e.what(), line_no);
        }
        ProblemRecord rec;
        try {
            rec = problem_from_json(adapter ? adapter(doc) : doc);
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed record: ") + e.what(), line_no);
        }
        if (!ids.insert(rec.id).second) throw ParseError("duplicate id '" + rec.id + "'", line_no);
        ds.records.push_back(std::move(rec));
    }
    const auto mpath = manifest_path_for(path);
    if (std::filesystem::exists(mpath)) {
        std::ifstream min(mpath);
        try {
            ds.manifest = manifest_from_json(json::parse(min));
        } catch (const json::exception& e) {
            throw ParseError(std::string("invalid manifest ") + mpath.string() + ": " + e.what());
        }
    }
    return ds;
}

void save_dataset(const std::vector<ProblemRecord>& records, const std::filesystem::path& path,
                  const std::optional<DatasetManifest>& manifest) {
    std::set<std::string> ids;
    for (const auto& r : records) {
        if (!ids.insert(r.id).second) throw Error("duplicate id '" + r.id + "' in dataset");
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write dataset " + path.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
    if (manifest) {
        std::ofstream mout(manifest_path_for(path), std::ios::trunc);
        mout << to_json(*manifest).dump(2) << '\n';
    }
}

}  // namespace vtp
