#include "vtp/curation_pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "vtp/response_parsing.hpp"
#include "vtp/text_util.hpp"

namespace vtp::curation {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Catalog

TopicCatalog::TopicCatalog(std::vector<CatalogLevel> levels) : levels_(std::move(levels)) {
    std::set<std::string> ids;
    std::set<DomainLevel> seen;
    for (const auto& l : levels_) {
        if (!seen.insert(l.level).second) throw ConfigError("catalog lists level " + to_string(l.level) + " twice");
        if (l.types.empty()) throw ConfigError("catalog level " + to_string(l.level) + " has no problem types");
        for (const auto& t : l.types) {
            if (text::is_blank(t.id)) throw ConfigError("catalog entry without id");
            if (!ids.insert(t.id).second) throw ConfigError("duplicate topic id '" + t.id + "'");
        }
    }
}

TopicCatalog TopicCatalog::from_json(const json& doc) {
    std::vector<CatalogLevel> levels;
    try {
        for (const auto& l : doc.at("levels")) {
            CatalogLevel cl;
            cl.level = domain_level_from_string(l.at("level").get<std::string>());
            cl.name = l.value("name", to_string(cl.level));
            for (const auto& s : l.at("subgroups")) {
                const auto sub = s.value("name", std::string{});
                for (const auto& t : s.at("types"))
                    cl.types.push_back({t.at("id").get<std::string>(), t.value("title", std::string{}), sub});
            }
            levels.push_back(std::move(cl));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed topic catalog: ") + e.what());
    }
    return TopicCatalog(std::move(levels));
}

TopicCatalog TopicCatalog::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open topic catalog " + path.string());
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ConfigError("topic catalog " + path.string() + ": " + e.what());
    }
}

const ProblemType* TopicCatalog::find(std::string_view topic_id) const {
    for (const auto& l : levels_)
        for (const auto& t : l.types)
            if (t.id == topic_id) return &t;
    return nullptr;
}

const CatalogLevel* TopicCatalog::level_of(std::string_view topic_id) const {
    for (const auto& l : levels_)
        for (const auto& t : l.types)
            if (t.id == topic_id) return &l;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Rng

namespace {

std::uint64_t splitmix(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
    for (auto& s : s_) s = splitmix(seed);
}

std::uint64_t Rng::next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

std::size_t Rng::below(std::size_t n) {
    if (n == 0) throw ConfigError("cannot draw from an empty range");
    const std::uint64_t bound = n;
    const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod n
    for (;;) {
        const std::uint64_t r = next();
        if (r >= threshold) return static_cast<std::size_t>(r % bound);
    }
}

SyntheticSeed sample_seed(const TopicCatalog& catalog, Rng& rng) {
    if (catalog.empty()) throw ConfigError("topic catalog is empty");
    const auto& level = catalog.levels()[rng.below(catalog.levels().size())];
    return {level.level, level.name, level.types[rng.below(level.types.size())]};
}

// ---------------------------------------------------------------------------
// Registry

SummaryRegistry::SummaryRegistry(const SummaryRegistry& other) {
    std::lock_guard lock(other.mu_);
    entries_ = other.entries_;
}

void SummaryRegistry::append(const std::string& topic_id, const std::string& summary) {
    if (text::is_blank(summary)) throw ConfigError("registry summaries must be non-blank");
    std::lock_guard lock(mu_);
    entries_[topic_id].push_back(std::string(text::trim(summary)));
}

std::vector<std::string> SummaryRegistry::summaries(const std::string& topic_id) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(topic_id);
    return it == entries_.end() ? std::vector<std::string>{} : it->second;
}

std::size_t SummaryRegistry::size(const std::string& topic_id) const { return summaries(topic_id).size(); }

std::size_t SummaryRegistry::total() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [k, v] : entries_) n += v.size();
    return n;
}

json SummaryRegistry::to_json() const {
    std::lock_guard lock(mu_);
    return json(entries_);
}

SummaryRegistry SummaryRegistry::from_json(const json& doc) {
    SummaryRegistry r;
    for (const auto& [topic, list] : doc.items())
        for (const auto& s : list) r.append(topic, s.get<std::string>());
    return r;
}

SummaryRegistry SummaryRegistry::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return {};
    std::ifstream in(path);
    try {
        return from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw ConfigError("summary registry " + path.string() + ": " + e.what());
    }
}

void SummaryRegistry::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << to_json().dump(1) << '\n';
    if (!out) throw Error("cannot write registry " + path.string());
}

// ---------------------------------------------------------------------------
// Prompts

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("prompt directory " + dir.string() + " not found");
    PromptLibrary lib;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        lib.templates_[entry.path().stem().string()] = ss.str();
    }
    return lib;
}

std::filesystem::path PromptLibrary::default_dir() {
    if (const char* env = std::getenv("VTP_ASSET_DIR"); env && *env) return std::filesystem::path(env) / "prompts";
    return std::filesystem::path(VTP_DEFAULT_ASSET_DIR) / "prompts";
}

const std::string& PromptLibrary::get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw ConfigError("unknown prompt template '" + name + "'");
    return it->second;
}

namespace {

const std::regex kHeader(R"(^\[role=(\S+) version=(\S+)\])");

}  // namespace

std::string PromptLibrary::version(const std::string& name) const {
    std::smatch m;
    const auto& t = get(name);
    const std::string first = t.substr(0, t.find('\n'));
    return std::regex_search(first, m, kHeader) ? m[2].str() : std::string{};
}

std::map<std::string, std::string> PromptLibrary::versions() const {
    std::map<std::string, std::string> out;
    for (const auto& [name, text] : templates_) out[name] = version(name);
    return out;
}

void PromptLibrary::set(const std::string& name, std::string text) { templates_[name] = std::move(text); }

std::string prompt_role(std::string_view system_text) {
    std::smatch m;
    const std::string first(system_text.substr(0, system_text.find('\n')));
    return std::regex_search(first, m, kHeader) ? m[1].str() : std::string{};
}

std::string difficulty_template(DatasetTag tier) {
    switch (tier) {
        case DatasetTag::Easy: return "difficulty_easy";
        case DatasetTag::Medium: return "difficulty_medium";
        case DatasetTag::Hard: return "difficulty_hard";
        default: throw ConfigError("no generation template for tier '" + to_string(tier) + "'");
    }
}

std::string build_generation_prompt(const SyntheticSeed& seed, const SummaryRegistry& registry,
                                    const PromptLibrary& prompts, DatasetTag tier,
                                    const std::optional<std::string>& global_conventions) {
    std::string prior;
    for (const auto& s : registry.summaries(seed.type.id)) prior += "- " + s + "\n";
    std::string conventions;
    if (global_conventions && !text::is_blank(*global_conventions))
        conventions = "- Use these conventions throughout:\n" + std::string(text::trim(*global_conventions)) + "\n";
    std::string out = prompts.get("generator");
    out = text::replace_all(out, "{{LEVEL_NAME}}", seed.level_name);
    out = text::replace_all(out, "{{TOPIC_ID}}", seed.type.id);
    out = text::replace_all(out, "{{TOPIC_TITLE}}", seed.type.title);
    out = text::replace_all(out, "{{DIFFICULTY}}", std::string(text::trim(prompts.get(difficulty_template(tier)))));
    out = text::replace_all(out, "{{CONVENTIONS}}", conventions);
    out = text::replace_all(out, "{{PRIOR_SUMMARIES}}", prior);
    return out;
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

const std::regex kCategoriesLine(R"(^\s*task categor(?:y|ies)\s*:\s*(.*)$)", std::regex::icase);

/// Description text without the task-categories line.
std::string summary_text(std::string_view description) {
    std::string out;
    for (const auto& l : text::lines(description)) {
        std::string s(l.text);
        if (std::regex_match(s, kCategoriesLine)) continue;
        out += s;
        out += '\n';
    }
    return text::normalize_whitespace(out);
}

json final_json_block(std::string_view text, const char* key) {
    const auto blocks = extract_code_blocks(text);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
        try {
            auto doc = json::parse(it->body);
            if (doc.is_object() && doc.contains(key)) return doc;
        } catch (const json::parse_error&) {
        }
    }
    try {
        auto doc = json::parse(text);
        if (doc.is_object() && doc.contains(key)) return doc;
    } catch (const json::parse_error&) {
    }
    throw ParseError(std::string("no json block with '") + key + "'");
}

Value coerce_input(Value v, const ValueKind& kind) {
    if (kind.tag == ValueKind::Tag::Real && v.is_int()) return Value(static_cast<double>(v.as_int()));
    if (kind.tag == ValueKind::Tag::Complex && (v.is_number()))
        return Value(std::complex<double>(v.to_double(), 0.0));
    if (kind.tag == ValueKind::Tag::Tuple && v.is_tuple() && v.as_tuple().size() == kind.elements.size()) {
        Tuple t = v.as_tuple();
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = coerce_input(t[i], kind.elements[i]);
        return Value(std::move(t));
    }
    return v;
}

}  // namespace

std::vector<TaskCategory> parse_task_categories(std::string_view description) {
    for (const auto& l : text::lines(description)) {
        std::smatch m;
        const std::string s(l.text);
        if (!std::regex_match(s, m, kCategoriesLine)) continue;
        std::vector<TaskCategory> out;
        for (const auto& part : text::split(m[1].str(), ',')) {
            const auto name = text::lower(text::trim(part));
            if (!name.empty()) out.push_back(task_category_from_string(name));
        }
        if (out.empty()) throw ParseError("task categories line is empty");
        return out;
    }
    throw ParseError("problem description has no task categories line");
}

ProblemRecord draft_to_record(const DraftProblem& draft, const std::string& id, const SyntheticSeed& seed,
                              DatasetTag tier) {
    ProblemRecord r;
    r.id = id;
    r.dataset_tag = tier;
    r.domain_level = seed.level;
    r.topic_id = seed.type.id;
    r.task_types = parse_task_categories(draft.description());
    r.statement = std::string(text::trim(draft.statement()));
    r.description = summary_text(draft.description());
    const auto blocks = extract_code_blocks(draft.answer_requirements());
    r.answer_requirements = parse_function_spec(blocks.empty() ? draft.answer_requirements() : blocks.back().body);
    r.solution = std::string(text::trim(draft.solution()));
    r.answer = std::string(text::trim(draft.answer()));
    r.golden_program = draft.golden_program;
    return r;
}

std::vector<TestCase> parse_test_case_response(std::string_view text, const FunctionSpec& spec) {
    const auto doc = final_json_block(text, "test_cases");
    const auto& cases = doc["test_cases"];
    if (!cases.is_array() || cases.empty()) throw ParseError("test_cases must be a non-empty array");
    std::vector<TestCase> out;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& c = cases[i];
        if (!c.is_array() || c.size() != spec.params.size())
            throw ParseError(fmt::format("test case {} must list {} arguments", i, spec.params.size()));
        TestCase tc;
        for (std::size_t k = 0; k < c.size(); ++k) {
            auto v = coerce_input(value_from_json(c[k]), spec.params[k].kind);
            if (!matches_kind(v, spec.params[k].kind))
                throw ParseError(fmt::format("test case {}: argument '{}' = {} is not {}", i, spec.params[k].name,
                                             to_display(v), describe(spec.params[k].kind)));
            tc.inputs.push_back(std::move(v));
        }
        out.push_back(std::move(tc));
    }
    return out;
}

QualityReport parse_grader_response(std::string_view text, const std::string& grader_id) {
    const auto doc = final_json_block(text, "scores");
    QualityReport q;
    q.grader_id = grader_id;
    try {
        for (const auto& [k, v] : doc["scores"].items())
            q.scores[quality_metric_from_string(k)] = ordinal_from_string(v.get<std::string>());
        if (doc.contains("numeric_score") && doc["numeric_score"].is_number())
            q.numeric_score = doc["numeric_score"].get<double>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed grader scores: ") + e.what());
    }
    return q;
}

std::string solver_user_prompt(const ProblemRecord& p) {
    std::string out = p.statement + "\n\n";
    if (p.conventions && !text::is_blank(*p.conventions)) out += "Conventions:\n" + *p.conventions + "\n\n";
    out += "Implement this function:\n```python\n" + p.answer_requirements.skeleton + "\n```\n";
    return out;
}

std::string review_user_prompt(const ProblemRecord& p) {
    std::string out;
    out += "\\section{Problem}\n" + p.statement + "\n\n";
    out += "\\section{Problem Description}\n" + p.description + "\n\n";
    out += "\\section{Answer Requirements}\n```python\n" + p.answer_requirements.skeleton + "\n```\n\n";
    out += "\\section{Solution}\n" + p.solution + "\n\n";
    out += "\\section{Answer}\n" + p.answer + "\n\n";
    out += "\\section{Code}\n```python\n" + p.golden_program + "\n```\n";
    if (!p.test_cases.empty()) {
        out += "\nCurrent test inputs:\n";
        for (const auto& tc : p.test_cases) {
            json args = json::array();
            for (const auto& v : tc.inputs) args.push_back(value_to_json(v));
            out += args.dump() + "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gates

std::string to_string(GateKind k) {
    switch (k) {
        case GateKind::Pass: return "pass";
        case GateKind::RepairTests: return "repair_tests";
        case GateKind::Fail: return "fail";
    }
    return "fail";
}

std::string to_string(FrontierStatus s) {
    switch (s) {
        case FrontierStatus::Pass: return "pass";
        case FrontierStatus::Fail: return "fail";
        case FrontierStatus::Indeterminate: return "indeterminate";
    }
    return "fail";
}

std::vector<QualityMetric> required_metrics(DatasetTag tag) {
    std::vector<QualityMetric> out;
    for (auto m : kAllQualityMetrics)
        if (m != QualityMetric::SeedCorrespondence || is_human_adapted(tag)) out.push_back(m);
    return out;
}

GateDecision quality_gate(const std::vector<QualityReport>& reports, DatasetTag tag, const GatePolicy& policy) {
    const auto need = policy.required_reports(tag);
    if (reports.size() < need)
        throw ConfigError(fmt::format("{} records need {} quality reports, got {}", to_string(tag), need, reports.size()));
    GateDecision d;
    bool only_tests = true;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        for (auto m : required_metrics(tag)) {
            auto it = reports[i].scores.find(m);
            if (it == reports[i].scores.end())
                throw MissingMetric(fmt::format("report {} ({}) lacks {}", i, reports[i].grader_id, to_string(m)));
            if (it->second == Ordinal::Excellent) continue;
            d.reasons.push_back(fmt::format("{}: {} rated {}", reports[i].grader_id, to_string(m), to_string(it->second)));
            only_tests = only_tests && m == QualityMetric::TestCaseQuality;
        }
    }
    d.kind = d.reasons.empty() ? GateKind::Pass : only_tests ? GateKind::RepairTests : GateKind::Fail;
    return d;
}

std::size_t FrontierPolicy::budget(DatasetTag tag) const {
    auto it = attempts.find(tag);
    if (it == attempts.end()) throw ConfigError("no frontier budget for tier '" + to_string(tag) + "'");
    if (it->second == 0) throw ConfigError("frontier budget must be at least 1");
    return it->second;
}

namespace {

llm::CompletionRequest solve_request(const ProblemRecord& p, const PromptLibrary& prompts, const SolverConfig& c,
                                     std::size_t sample) {
    llm::CompletionRequest r;
    r.model_tag = c.model_tag;
    r.system_text = prompts.get("solver");
    r.user_text = solver_user_prompt(p);
    r.temperature = c.temperature;
    r.max_tokens = c.max_tokens;
    r.sample_index = sample;
    return r;
}

RolloutMeta meta_for(std::size_t attempt, const SolverConfig& c, const llm::CompletionResponse& resp) {
    RolloutMeta m;
    m.attempt_idx = attempt;
    m.model_tag = c.model_tag;
    m.markers = c.markers;
    if (resp.usage.completion_tokens > 0) m.token_count = resp.usage.completion_tokens;
    return m;
}

}  // namespace

FrontierResult frontier_gate(const ProblemRecord& problem, llm::Gateway& solver, const FrontierPolicy& policy,
                             const ExecutionLimits& limits, Executor& executor, const PromptLibrary& prompts,
                             const SolverConfig& config) {
    const auto budget = policy.budget(problem.dataset_tag);
    FrontierResult out;
    for (std::size_t attempt = 0; attempt < budget; ++attempt) {
        llm::CompletionResponse resp;
        try {
            resp = solver.complete(solve_request(problem, prompts, config, attempt));
        } catch (const llm::TransportError& e) {
            out.status = FrontierStatus::Indeterminate;
            out.error = e.what();
            return out;
        }
        out.attempts.push_back(score_rollout(problem, resp.text, limits, executor, meta_for(attempt, config, resp)));
        if (out.attempts.back().reward == 1) {
            out.status = FrontierStatus::Pass;
            return out;
        }
    }
    out.status = FrontierStatus::Fail;
    return out;
}

RejectionResult rejection_sample_traces(const ProblemRecord& problem, llm::Gateway& teacher, std::size_t k,
                                        const ExecutionLimits& limits, Executor& executor,
                                        const PromptLibrary& prompts, const SolverConfig& config) {
    if (k == 0) throw ConfigError("rejection sampling needs k >= 1");
    RejectionResult out;
    out.problem_id = problem.id;
    for (std::size_t i = 0; i < k; ++i) {
        llm::CompletionResponse resp;
        try {
            resp = teacher.complete(solve_request(problem, prompts, config, i));
        } catch (const llm::TransportError&) {
            ++out.failures;
            continue;
        }
        auto r = score_rollout(problem, resp.text, limits, executor, meta_for(i, config, resp));
        if (r.reward == 1) out.traces.push_back(r);
        out.rollouts.push_back(std::move(r));
    }
    return out;
}

DistillationSummary summarize_distillation(const std::vector<RejectionResult>& results) {
    DistillationSummary s;
    s.problems = results.size();
    for (const auto& r : results) {
        if (!r.traces.empty()) ++s.solved;
        s.traces += r.traces.size();
        s.failures += r.failures;
    }
    if (s.problems > 0)
        s.solved_percent = std::round(1000.0 * static_cast<double>(s.solved) / static_cast<double>(s.problems)) / 10.0;
    return s;
}

DatasetManifest record_manifest(const std::map<DatasetTag, ManifestRow>& stage_counts) {
    DatasetManifest m;
    for (const auto& [tag, row] : stage_counts) m.set(tag, row);
    return m;
}

// ---------------------------------------------------------------------------
// Orchestration

json to_json(const CandidateOutcome& o) {
    json j = {{"index", o.index},
              {"id", o.id},
              {"topic_id", o.topic_id},
              {"stage", o.stage},
              {"reasons", o.reasons},
              {"repaired", o.repaired},
              {"frontier_attempts", o.frontier_attempts}};
    j["gate"] = o.gate ? json(to_string(*o.gate)) : json(nullptr);
    j["frontier"] = o.frontier ? json(to_string(*o.frontier)) : json(nullptr);
    return j;
}

namespace {

struct Candidate {
    std::optional<ProblemRecord> record;
    CandidateOutcome outcome;
    bool passed_qc = false;
    bool indeterminate = false;
};

llm::CompletionRequest review_request(const std::string& model, const std::string& system, const ProblemRecord& p,
                                      std::size_t sample) {
    llm::CompletionRequest r;
    r.model_tag = model;
    r.system_text = system;
    r.user_text = review_user_prompt(p);
    r.temperature = 0.0;
    r.sample_index = sample;
    return r;
}

/// Fills expected values from the golden program; returns the failure text if it cannot.
std::optional<std::string> run_golden(ProblemRecord& p, const ExecutionLimits& limits, Executor& executor) {
    if (auto v = validate_problem(p); !v.ok()) return "invalid record: " + text::join(v.violations, "; ");
    try {
        const auto report = run_verification(p, p.golden_program, limits, executor);
        if (!report.all_pass()) return "golden program is not self-consistent (timeout or nondeterminism)";
        for (std::size_t i = 0; i < p.test_cases.size(); ++i) p.test_cases[i].expected = report.golden_values[i];
    } catch (const GoldenFailure& e) {
        return e.what();
    }
    return std::nullopt;
}

void process(Candidate& c, const CurateOptions& o, const PromptLibrary& prompts, llm::Gateway& gw, Executor& ex) {
    auto& p = *c.record;
    auto& out = c.outcome;
    auto fail = [&](std::string stage, std::string reason) {
        out.stage = std::move(stage);
        out.reasons.push_back(std::move(reason));
    };
    try {
        out.stage = "tests";
        const auto& tc_model = o.generator_model;
        try {
            p.test_cases = parse_test_case_response(
                gw.complete(review_request(tc_model, prompts.get("test_cases"), p, 0)).text, p.answer_requirements);
        } catch (const ParseError& e) {
            return fail("tests", std::string("test cases: ") + e.what());
        }
        if (auto err = run_golden(p, o.limits, ex)) return fail("golden", *err);

        out.stage = "quality";
        std::vector<QualityReport> reports;
        try {
            reports = grade_problem(p, o.grader_models, o.gate, prompts, gw);
        } catch (const ParseError& e) {
            return fail("quality", std::string("grader output: ") + e.what());
        }
        GateDecision d;
        try {
            d = quality_gate(reports, p.dataset_tag, o.gate);
        } catch (const MissingMetric& e) {
            return fail("quality", e.what());
        }
        if (d.kind == GateKind::RepairTests) {
            out.repaired = true;
            try {
                p.test_cases = parse_test_case_response(
                    gw.complete(review_request(tc_model, prompts.get("repair_tests"), p, 0)).text,
                    p.answer_requirements);
            } catch (const ParseError& e) {
                return fail("quality", std::string("repaired test cases: ") + e.what());
            }
            if (auto err = run_golden(p, o.limits, ex)) return fail("golden", "after repair: " + *err);
            for (std::size_t j = 0; j < reports.size(); ++j) {
                auto it = reports[j].scores.find(QualityMetric::TestCaseQuality);
                if (it->second == Ordinal::Excellent) continue;
                const auto& model = o.grader_models[j % o.grader_models.size()];
                try {
                    const auto q = parse_grader_response(
                        gw.complete(review_request(model, prompts.get("regrade_tests"), p, j)).text, model);
                    auto s = q.scores.find(QualityMetric::TestCaseQuality);
                    if (s == q.scores.end()) return fail("quality", "regrade lacks test_case_quality");
                    it->second = s->second;
                } catch (const ParseError& e) {
                    return fail("quality", std::string("regrade output: ") + e.what());
                }
            }
            d = quality_gate(reports, p.dataset_tag, o.gate);
        }
        out.gate = d.kind;
        p.quality_reports = reports;
        if (d.kind != GateKind::Pass) {
            out.reasons = d.reasons;
            return;
        }
        c.passed_qc = true;

        out.stage = "frontier";
        const auto fr = frontier_gate(p, gw, o.frontier, o.limits, ex, prompts, o.solver);
        out.frontier = fr.status;
        out.frontier_attempts = fr.attempts.size();
        if (fr.status == FrontierStatus::Indeterminate) {
            c.indeterminate = true;
            out.reasons.push_back("solver unavailable: " + fr.error);
            return;
        }
        if (fr.status == FrontierStatus::Fail) {
            out.reasons.push_back(fmt::format("unsolved in {} attempt(s)", fr.attempts.size()));
            return;
        }
        out.stage = "kept";
    } catch (const llm::TransportError& e) {
        fail(out.stage, std::string("gateway: ") + e.what());
    }
}

}  // namespace

std::vector<QualityReport> grade_problem(const ProblemRecord& p, const std::vector<std::string>& grader_models,
                                         const GatePolicy& gate, const PromptLibrary& prompts, llm::Gateway& gw) {
    if (grader_models.empty()) throw ConfigError("no grader models configured");
    const auto metrics = required_metrics(p.dataset_tag);
    std::vector<QualityReport> reports;
    for (std::size_t j = 0; j < gate.required_reports(p.dataset_tag); ++j) {
        const auto& model = grader_models[j % grader_models.size()];
        auto q = parse_grader_response(gw.complete(review_request(model, prompts.get("grader"), p, j)).text,
                                       fmt::format("{}#{}", model, j));
        for (auto it = q.scores.begin(); it != q.scores.end();)
            it = std::find(metrics.begin(), metrics.end(), it->first) == metrics.end() ? q.scores.erase(it)
                                                                                        : std::next(it);
        reports.push_back(std::move(q));
    }
    return reports;
}

std::vector<GeneratedCandidate> generate_candidates(const CurateOptions& o, const TopicCatalog& catalog,
                                                    const PromptLibrary& prompts, SummaryRegistry& registry,
                                                    llm::Gateway& gateway) {
    if (o.n == 0) throw ConfigError("generation needs n >= 1");
    difficulty_template(o.tier);
    Rng rng(o.seed);
    std::vector<GeneratedCandidate> out(o.n);
    for (std::size_t i = 0; i < o.n; ++i) {
        auto& c = out[i];
        const auto seed = sample_seed(catalog, rng);
        c.outcome.index = i;
        c.outcome.id = fmt::format("{}-s{}-{:04d}", to_string(o.tier), o.seed, i);
        c.outcome.topic_id = seed.type.id;
        c.outcome.stage = "generate";
        llm::CompletionRequest req;
        req.model_tag = o.generator_model;
        req.system_text = build_generation_prompt(seed, registry, prompts, o.tier, o.global_conventions);
        req.user_text = "Write a new exercise on " + seed.type.id + " " + seed.type.title + ".";
        req.temperature = o.generation_temperature;
        req.sample_index = i;
        try {
            const auto draft = parse_generated_sections(gateway.complete(req).text);
            auto rec = draft_to_record(draft, c.outcome.id, seed, o.tier);
            rec.conventions = o.global_conventions;
            registry.append(seed.type.id, rec.description.empty() ? rec.statement : rec.description);
            c.record = std::move(rec);
        } catch (const ParseError& e) {
            c.outcome.reasons.push_back(std::string("generator output: ") + e.what());
        } catch (const llm::TransportError& e) {
            c.outcome.reasons.push_back(std::string("gateway: ") + e.what());
        }
    }
    return out;
}

CurateResult curate(const CurateOptions& o, const TopicCatalog& catalog, const PromptLibrary& prompts,
                    SummaryRegistry& registry, llm::Gateway& gateway, Executor& executor) {
    if (o.n == 0) throw ConfigError("curate needs n >= 1");
    o.limits.validate();
    difficulty_template(o.tier);
    auto generated = generate_candidates(o, catalog, prompts, registry, gateway);
    std::vector<Candidate> cands(o.n);
    for (std::size_t i = 0; i < o.n; ++i) {
        cands[i].outcome = std::move(generated[i].outcome);
        cands[i].record = std::move(generated[i].record);
    }

    VerificationPool pool(std::max<std::size_t>(1, o.workers));
    pool.for_each(o.n, [&](std::size_t i) {
        if (cands[i].record) process(cands[i], o, prompts, gateway, executor);
    });

    CurateResult res;
    for (auto& c : cands) {
        if (c.record) ++res.row.initial_count;
        if (c.passed_qc) ++res.row.passed_qc;
        if (c.outcome.stage == "kept") {
            ++res.row.passed_qc_frontier;
            res.kept.push_back(*c.record);
        } else if (c.indeterminate) {
            res.indeterminate.push_back(*c.record);
        }
        res.outcomes.push_back(std::move(c.outcome));
    }
    return res;
}

}  // namespace vtp::curation
