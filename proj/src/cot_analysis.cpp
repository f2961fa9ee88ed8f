#include "vtp/cot_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "vtp/jsonl.hpp"
#include "vtp/text_util.hpp"

namespace vtp::cot {

using nlohmann::json;

std::string to_string(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::Factual: return "factual";
        case ErrorCategory::Mathematical: return "mathematical";
        case ErrorCategory::Logical: return "logical";
        case ErrorCategory::Executional: return "executional";
    }
    return "?";
}

std::string to_string(Severity s) { return s == Severity::Major ? "major" : "minor"; }

namespace {

std::string label_key(std::string_view raw) {
    std::string s = text::lower(raw);
    for (char& c : s)
        if (c == '_' || c == '-') c = ' ';
    return text::normalize_whitespace(s);
}

}  // namespace

const std::map<std::string, ErrorCategory>& label_table() {
    using C = ErrorCategory;
    static const std::map<std::string, ErrorCategory> table = {
        {"factual", C::Factual},
        {"factual error", C::Factual},
        {"incorrect fact", C::Factual},
        {"wrong formula", C::Factual},
        {"wrong identity", C::Factual},
        {"misremembered identity", C::Factual},
        {"wrong constant", C::Factual},
        {"recall error", C::Factual},
        {"incorrect physics", C::Factual},
        {"physics error", C::Factual},
        {"convention error", C::Factual},
        {"mathematical", C::Mathematical},
        {"mathematical error", C::Mathematical},
        {"math error", C::Mathematical},
        {"sign error", C::Mathematical},
        {"algebra error", C::Mathematical},
        {"algebraic error", C::Mathematical},
        {"arithmetic error", C::Mathematical},
        {"calculation error", C::Mathematical},
        {"computational error", C::Mathematical},
        {"integration error", C::Mathematical},
        {"factor error", C::Mathematical},
        {"missing factor", C::Mathematical},
        {"factor of 2 error", C::Mathematical},
        {"index error", C::Mathematical},
        {"derivation error", C::Mathematical},
        {"logical", C::Logical},
        {"logical error", C::Logical},
        {"logic error", C::Logical},
        {"reasoning error", C::Logical},
        {"inconsistent reasoning", C::Logical},
        {"unjustified assumption", C::Logical},
        {"invalid inference", C::Logical},
        {"non sequitur", C::Logical},
        {"contradiction", C::Logical},
        {"circular reasoning", C::Logical},
        {"wrong conclusion", C::Logical},
        {"executional", C::Executional},
        {"executional error", C::Executional},
        {"execution error", C::Executional},
        {"code bug", C::Executional},
        {"code error", C::Executional},
        {"coding error", C::Executional},
        {"programming error", C::Executional},
        {"implementation error", C::Executional},
        {"hardcoded value", C::Executional},
        {"hardcoded values", C::Executional},
        {"missing parameter", C::Executional},
        {"missing parameters", C::Executional},
        {"wrong return type", C::Executional},
        {"transcription error", C::Executional},
    };
    return table;
}

ErrorCategory normalize_label(std::string_view raw) {
    const auto& t = label_table();
    auto it = t.find(label_key(raw));
    if (it == t.end()) throw UnknownLabel(std::string(raw));
    return it->second;
}

Severity normalize_severity(std::string_view raw) {
    const auto k = label_key(raw);
    if (k == "major" || k == "critical") return Severity::Major;
    if (k == "minor") return Severity::Minor;
    throw UnknownLabel(std::string(raw));
}

// ---------------------------------------------------------------------------
// Steps

std::optional<std::string> boundary_problem(const std::vector<std::pair<std::size_t, std::size_t>>& bounds,
                                            std::size_t line_count) {
    std::size_t prev_end = 0;
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        const auto [a, b] = bounds[i];
        if (a == 0 || b < a) return fmt::format("step {} has invalid range ({}, {})", i + 1, a, b);
        if (b > line_count) return fmt::format("step {} ends at line {} past the last line {}", i + 1, b, line_count);
        if (a <= prev_end) return fmt::format("step {} starting at line {} overlaps or precedes the previous step", i + 1, a);
        prev_end = b;
    }
    return std::nullopt;
}

std::vector<Step> reconstruct_steps(std::string_view source,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& bounds) {
    const auto ls = text::lines(source);
    if (auto p = boundary_problem(bounds, ls.size())) throw ConfigError(*p);
    std::vector<Step> out;
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        const auto [a, b] = bounds[i];
        const auto begin = ls[a - 1].offset;
        out.push_back({i + 1, a, b, std::string(source.substr(begin, ls[b - 1].end - begin))});
    }
    return out;
}

CodeSplit separate_code(std::string_view src) {
    CodeSplit out;
    const auto ls = text::lines(src);
    std::size_t i = 0;
    while (i < ls.size()) {
        if (text::starts_with(text::trim_left(ls[i].text), "```")) {
            std::size_t j = i + 1;
            while (j < ls.size() && !text::starts_with(text::trim_left(ls[j].text), "```")) ++j;
            if (j < ls.size()) {
                i = j + 1;
                continue;
            }
        }
        out.prose += src.substr(ls[i].offset, ls[i].end - ls[i].offset);
        ++i;
    }
    try {
        out.code = extract_final_code_block(src);
    } catch (const NoCodeBlock&) {
    }
    return out;
}

DedupFailed::DedupFailed(std::vector<SubsetViolation> violations)
    : Error([&] {
          std::string msg = "condensed trace is not a verbatim subset of the original";
          for (std::size_t i = 0; i < violations.size() && i < 3; ++i) msg += "; " + violations[i].describe();
          return msg;
      }()),
      violations_(std::move(violations)) {}

namespace {

json final_json(std::string_view text, const char* key) {
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
    throw ParseError(std::string("analyzer reply has no json object with '") + key + "'");
}

std::vector<std::pair<std::size_t, std::size_t>> parse_bounds(std::string_view text) {
    const auto doc = final_json(text, "steps");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    try {
        for (const auto& s : doc["steps"]) {
            if (s.is_array() && s.size() == 2)
                out.emplace_back(s[0].get<std::size_t>(), s[1].get<std::size_t>());
            else
                out.emplace_back(s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>());
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed step boundaries: ") + e.what());
    }
    return out;
}

llm::CompletionRequest analyzer_request(const AnalyzerConfig& c, const std::string& system, std::string user) {
    llm::CompletionRequest r;
    r.model_tag = c.model_tag;
    r.system_text = system;
    r.user_text = std::move(user);
    r.temperature = c.temperature;
    r.max_tokens = c.max_tokens;
    return r;
}

/// Asks for boundaries over `prose`; one retry with the rejection reason appended.
std::vector<Step> request_steps(std::string_view prose, const std::string& role, llm::Gateway& gw,
                                const curation::PromptLibrary& prompts, const AnalyzerConfig& c) {
    const auto numbered = text::number_lines(prose);
    const auto n = text::lines(prose).size();
    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string user = numbered;
        if (attempt > 0) user += "\nYour previous boundaries were rejected: " + problem + "\n";
        try {
            const auto bounds = parse_bounds(gw.complete(analyzer_request(c, prompts.get(role), user)).text);
            if (auto p = boundary_problem(bounds, n)) {
                problem = *p;
                continue;
            }
            return reconstruct_steps(prose, bounds);
        } catch (const ParseError& e) {
            problem = e.what();
        }
    }
    throw AnalyzerFailure(role + " boundaries rejected twice: " + problem);
}

}  // namespace

GoldenSteps decompose_golden(std::string_view solution, llm::Gateway& analyzer, const curation::PromptLibrary& prompts,
                             const AnalyzerConfig& config) {
    if (text::is_blank(solution)) throw ConfigError("golden solution is empty");
    auto split = separate_code(solution);
    GoldenSteps g;
    g.code = std::move(split.code);
    g.line_count = text::lines(split.prose).size();
    g.steps = request_steps(split.prose, "decompose", analyzer, prompts, config);
    return g;
}

DedupResult dedup_trace(std::string_view trace, llm::Gateway& analyzer, const curation::PromptLibrary& prompts,
                        const AnalyzerConfig& config, std::size_t threshold_tokens) {
    DedupResult out;
    out.tokens_before = text::approx_token_count(trace);
    if (out.tokens_before <= threshold_tokens) {
        out.text = std::string(trace);
        return out;
    }
    std::vector<SubsetViolation> violations;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string user(trace);
        if (attempt > 0) {
            user += "\n\nYour previous reply changed these lines; copy lines exactly:\n";
            for (const auto& v : violations) user += v.describe() + "\n";
        }
        auto reply = analyzer.complete(analyzer_request(config, prompts.get("dedup"), user)).text;
        violations = verify_subset_preservation(trace, reply);
        if (violations.empty()) {
            out.text = std::move(reply);
            out.changed = out.text != trace;
            return out;
        }
    }
    throw DedupFailed(std::move(violations));
}

DistilledTrace distill_steps(std::string_view deduped, llm::Gateway& analyzer, const curation::PromptLibrary& prompts,
                             const AnalyzerConfig& config) {
    DistilledTrace d;
    auto split = separate_code(deduped);
    d.code = std::move(split.code);
    d.line_count = text::lines(split.prose).size();
    if (text::is_blank(split.prose)) return d;
    d.steps = request_steps(split.prose, "distill", analyzer, prompts, config);
    d.outside_target = d.steps.size() < 5 || d.steps.size() > 15;
    return d;
}

// ---------------------------------------------------------------------------
// Classification

void AttemptErrorReport::validate() const {
    if (findings.empty()) {
        if (primary_category) throw ConfigError("report without findings has a primary category");
        return;
    }
    if (!primary_category) throw ConfigError("report with findings lacks a primary category");
    const bool present = std::any_of(findings.begin(), findings.end(),
                                     [&](const ErrorFinding& f) { return f.category == *primary_category; });
    if (!present) throw ConfigError("primary category " + to_string(*primary_category) + " is not among the findings");
}

std::size_t AttemptErrorReport::major_count(ErrorCategory c) const {
    return static_cast<std::size_t>(std::count_if(findings.begin(), findings.end(), [&](const ErrorFinding& f) {
        return f.category == c && f.severity == Severity::Major;
    }));
}

namespace {

std::string render_steps(const StepSet& s) {
    std::string out;
    for (const auto& st : s.steps) {
        out += fmt::format("[Step {}]\n{}", st.index, st.text);
        if (!st.text.empty() && st.text.back() != '\n') out += '\n';
    }
    return out.empty() ? "(no steps)\n" : out;
}

}  // namespace

std::string classification_user_prompt(const DistilledTrace& distilled, const GoldenSteps& golden,
                                       std::string_view golden_code, std::string_view candidate_code) {
    std::string out = "Incorrect attempt, distilled steps:\n" + render_steps(distilled);
    out += "\nReference solution steps:\n" + render_steps(golden);
    out += "\nCode comparison\n";
    out += "Reference implementation:\n```python\n" + std::string(text::trim_right(golden_code)) + "\n```\n";
    out += "Attempt implementation:\n```python\n" +
           (text::is_blank(candidate_code) ? std::string("# no code produced") : std::string(text::trim_right(candidate_code))) +
           "\n```\n";
    return out;
}

AttemptErrorReport parse_classification(std::string_view text) {
    const auto doc = final_json(text, "findings");
    AttemptErrorReport r;
    try {
        for (const auto& f : doc["findings"]) {
            ErrorFinding e;
            e.raw_label = f.at("label").get<std::string>();
            e.category = normalize_label(e.raw_label);
            e.severity = normalize_severity(f.value("severity", std::string("major")));
            if (f.contains("step")) e.step_ref = f["step"].is_string() ? f["step"].get<std::string>() : f["step"].dump();
            e.note = f.value("note", std::string{});
            r.findings.push_back(std::move(e));
        }
        if (doc.contains("primary") && !doc["primary"].is_null())
            r.primary_category = normalize_label(doc["primary"].get<std::string>());
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed findings: ") + e.what());
    }
    try {
        r.validate();
    } catch (const ConfigError& e) {
        throw ParseError(e.what());
    }
    return r;
}

AttemptErrorReport classify_errors(const DistilledTrace& distilled, const GoldenSteps& golden,
                                   std::string_view golden_code, std::string_view candidate_code,
                                   llm::Gateway& analyzer, const curation::PromptLibrary& prompts,
                                   const std::string& problem_id, std::size_t attempt_idx,
                                   const AnalyzerConfig& config) {
    const auto base = classification_user_prompt(distilled, golden, golden_code, candidate_code);
    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string user = base;
        if (attempt > 0) user += "\nYour previous reply could not be used: " + problem + "\n";
        try {
            auto r = parse_classification(analyzer.complete(analyzer_request(config, prompts.get("classify"), user)).text);
            r.problem_id = problem_id;
            r.attempt_idx = attempt_idx;
            r.prompt_version = prompts.version("classify");
            return r;
        } catch (const ParseError& e) {
            problem = e.what();
        } catch (const UnknownLabel& e) {
            problem = e.what();
        }
    }
    throw AnalyzerFailure("classification unusable twice: " + problem);
}

AttemptErrorReport analyze_rollout(const ProblemRecord& problem, const RolloutRecord& rollout,
                                   const GoldenSteps& golden, llm::Gateway& analyzer,
                                   const curation::PromptLibrary& prompts, const AnalyzerConfig& config,
                                   std::size_t dedup_threshold) {
    if (rollout.reward != 0) throw ConfigError("error analysis applies to incorrect rollouts only");
    const auto deduped = dedup_trace(rollout.response_text, analyzer, prompts, config, dedup_threshold);
    const auto distilled = distill_steps(deduped.text, analyzer, prompts, config);
    return classify_errors(distilled, golden, problem.golden_program, rollout.extracted_program.value_or(""),
                           analyzer, prompts, rollout.problem_id, rollout.attempt_idx, config);
}

// ---------------------------------------------------------------------------
// Aggregation

FrequencyTable aggregate_frequencies(const std::vector<AttemptErrorReport>& reports, std::size_t incorrect_count) {
    if (incorrect_count == 0) throw ConfigError("frequencies need at least one incorrect rollout");
    if (reports.size() > incorrect_count)
        throw ConfigError(fmt::format("{} reports exceed {} incorrect rollouts", reports.size(), incorrect_count));
    FrequencyTable t;
    t.incorrect_count = incorrect_count;
    for (auto c : kAllCategories) t.categories[c] = {};
    for (const auto& r : reports)
        for (auto c : kAllCategories) t.categories[c].major_count += r.major_count(c);
    for (auto& [c, f] : t.categories)
        f.frequency = static_cast<double>(f.major_count) / static_cast<double>(incorrect_count);
    return t;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ConfigError("pearson needs equal-length inputs");
    if (xs.size() < 2) throw ConfigError("pearson needs at least two points");
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw ConfigError("pearson is undefined for a constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

TraceStats trace_stats(const std::vector<RolloutRecord>& rollouts) {
    if (rollouts.empty()) throw ConfigError("trace statistics need at least one rollout");
    struct Acc {
        std::size_t n = 0;
        double tokens = 0, bt = 0;
        ConditionalMeans finish() const {
            return {n, tokens / static_cast<double>(n), bt / static_cast<double>(n)};
        }
    } all, ok, bad;
    for (const auto& r : rollouts) {
        if (!r.backtrack_count)
            throw ConfigError(fmt::format("rollout {}#{} has no backtrack count", r.problem_id, r.attempt_idx));
        for (Acc* a : {&all, r.reward == 1 ? &ok : &bad}) {
            ++a->n;
            a->tokens += static_cast<double>(r.token_count);
            a->bt += static_cast<double>(*r.backtrack_count);
        }
    }
    TraceStats s;
    s.overall = all.finish();
    if (ok.n) s.correct = ok.finish();
    if (bad.n) s.incorrect = bad.finish();
    return s;
}

void annotate_backtracking(std::vector<RolloutRecord>& rollouts, const PatternSet& patterns,
                           const ThinkMarkers& markers) {
    for (auto& r : rollouts) {
        std::string scope = r.response_text;
        try {
            const auto seg = segment_response(r.response_text, markers.open, markers.close);
            if (seg.think_text) scope = *seg.think_text;
        } catch (const UnbalancedMarkers&) {
        }
        r.backtrack_count = count_backtracking(scope, patterns).count;
    }
}

AgreementTable analyzer_agreement(const std::map<std::string, std::vector<AttemptErrorReport>>& report_sets) {
    if (report_sets.size() < 2) throw ConfigError("agreement needs at least two configurations");
    using Key = std::pair<std::string, std::size_t>;
    std::optional<std::set<Key>> reference;
    std::string reference_name;
    AgreementTable t;
    for (const auto& [name, reports] : report_sets) {
        std::set<Key> keys;
        AgreementRow row;
        for (auto c : kAllCategories) row.counts[c] = 0;
        for (const auto& r : reports) {
            if (!keys.emplace(r.problem_id, r.attempt_idx).second)
                throw ConfigError(fmt::format("configuration '{}' has two reports for {}#{}", name, r.problem_id, r.attempt_idx));
            for (const auto& f : r.findings) ++row.counts[f.category];
        }
        if (!keys.empty()) {
            if (!reference) {
                reference = keys;
                reference_name = name;
            } else if (*reference != keys) {
                throw ConfigError("configurations '" + reference_name + "' and '" + name + "' cover different attempts");
            }
        }
        for (const auto& [c, n] : row.counts) row.total += n;
        for (const auto& [c, n] : row.counts)
            row.shares[c] = row.total ? static_cast<double>(n) / static_cast<double>(row.total) : 0.0;
        t.rows[name] = std::move(row);
    }
    for (auto a = t.rows.begin(); a != t.rows.end(); ++a)
        for (auto b = std::next(a); b != t.rows.end(); ++b)
            t.total_deltas[{a->first, b->first}] =
                static_cast<long>(a->second.total) - static_cast<long>(b->second.total);
    return t;
}

// ---------------------------------------------------------------------------
// IO

json to_json(const AttemptErrorReport& r) {
    json findings = json::array();
    for (const auto& f : r.findings)
        findings.push_back({{"category", to_string(f.category)},
                            {"severity", to_string(f.severity)},
                            {"step", f.step_ref},
                            {"label", f.raw_label},
                            {"note", f.note}});
    return {{"problem_id", r.problem_id},
            {"attempt_idx", r.attempt_idx},
            {"findings", std::move(findings)},
            {"primary_category", r.primary_category ? json(to_string(*r.primary_category)) : json(nullptr)},
            {"prompt_version", r.prompt_version}};
}

AttemptErrorReport report_from_json(const json& j) {
    AttemptErrorReport r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.attempt_idx = j.at("attempt_idx").get<std::size_t>();
    try {
        for (const auto& f : j.at("findings")) {
            ErrorFinding e;
            e.raw_label = f.value("label", std::string{});
            e.category = normalize_label(f.contains("category") ? f["category"].get<std::string>() : e.raw_label);
            e.severity = normalize_severity(f.value("severity", std::string("major")));
            e.step_ref = f.value("step", std::string{});
            e.note = f.value("note", std::string{});
            r.findings.push_back(std::move(e));
        }
        if (j.contains("primary_category") && !j["primary_category"].is_null())
            r.primary_category = normalize_label(j["primary_category"].get<std::string>());
    } catch (const UnknownLabel& e) {
        throw ParseError(e.what());
    }
    r.prompt_version = j.value("prompt_version", std::string{});
    r.validate();
    return r;
}

std::vector<AttemptErrorReport> load_reports(const std::filesystem::path& path) {
    return jsonl::read<AttemptErrorReport>(path, report_from_json);
}

void save_reports(const std::vector<AttemptErrorReport>& reports, const std::filesystem::path& path) {
    jsonl::write(reports, path, [](const AttemptErrorReport& r) { return to_json(r); });
}

std::string frequency_csv(const FrequencyTable& t) {
    std::string out = "category,major_count,frequency\n";
    for (auto c : kAllCategories) {
        const auto& f = t.categories.at(c);
        out += fmt::format("{},{},{:.4f}\n", to_string(c), f.major_count, f.frequency);
    }
    return out;
}

std::string agreement_csv(const AgreementTable& t) {
    std::string out = "category";
    for (const auto& [name, row] : t.rows) out += fmt::format(",{},{}_percent", name, name);
    out += '\n';
    for (auto c : kAllCategories) {
        out += to_string(c);
        for (const auto& [name, row] : t.rows)
            out += fmt::format(",{},{:.1f}", row.counts.at(c), 100.0 * row.shares.at(c));
        out += '\n';
    }
    out += "total";
    for (const auto& [name, row] : t.rows) out += fmt::format(",{},{:.1f}", row.total, row.total ? 100.0 : 0.0);
    out += '\n';
    return out;
}

}  // namespace vtp::cot
