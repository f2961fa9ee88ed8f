#include "vtp/mock_responder.hpp"

#include <cmath>
#include <regex>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "vtp/curation_pipeline.hpp"
#include "vtp/problem_model.hpp"
#include "vtp/response_parsing.hpp"
#include "vtp/text_util.hpp"

namespace vtp::mock {

using nlohmann::json;

namespace {

struct Archetype {
    std::string key;
    std::string category;
    std::string function;
    std::string params;  // annotated parameter list
    std::string returns;
    std::vector<std::pair<std::string, std::vector<long>>> choices;  // parameter name -> allowed values
    std::string task;
};

const std::vector<Archetype>& archetypes() {
    static const std::vector<Archetype> table = {
        {"dc", "direct_calculation", "decay_width", "m: float, g: float", "float",
         {{"dc_a", {8, 16, 32}}},
         "Determine the tree-level width of a scalar of mass m decaying through a cubic coupling g."},
        {"hc", "hidden_coefficient", "surviving_coefficient", "n: int", "float",
         {{"hc_a", {1, 2, 3}}, {"hc_b", {4, 5, 6, 7}}},
         "Find the coefficient C that survives the cancellation, multiplied by the multiplicity n."},
        {"rc", "ratio_comparison", "rate_ratio", "m1: float, m2: float", "float",
         {{"rc_a", {2, 3, 4, 5}}},
         "Find the ratio of the two rates as a function of the masses m1 and m2."},
        {"cat", "categorical_classification", "power_counting", "d: int", "str",
         {{"cat_a", {4, 6}}},
         "Identify the power-counting class of a coupling multiplying an operator of mass dimension d."},
        {"lc", "logical_consistency", "unitarity_allowed", "s: float, lam: float", "bool",
         {{"lc_a", {2, 3, 4, 5, 6}}},
         "Determine whether the partial-wave bound is respected at energy squared s and coupling lam."},
    };
    return table;
}

const Archetype& archetype(const std::string& key) {
    for (const auto& a : archetypes())
        if (a.key == key) return a;
    throw ParseError("unknown mock archetype '" + key + "'");
}

std::string key_of(const std::string& param) { return param.substr(0, param.find('_')); }

long param(const MockParams& ps, const std::string& name) {
    for (const auto& [k, v] : ps)
        if (k == name) return v;
    throw ParseError("mock parameter '" + name + "' missing");
}

/// The value-producing expression of a numeric archetype.
std::string expression(const std::string& key, const MockParams& ps) {
    if (key == "dc") return fmt::format("g**2 * m / ({} * math.pi)", param(ps, "dc_a"));
    if (key == "hc") return fmt::format("n * {} / {}", param(ps, "hc_a"), param(ps, "hc_b"));
    if (key == "rc") return fmt::format("(m1 / m2) ** {}", param(ps, "rc_a"));
    if (key == "lc") return fmt::format("lam * s <= {} * math.pi", param(ps, "lc_a"));
    throw ParseError("archetype '" + key + "' has no single expression");
}

std::vector<std::string> keys_in(const MockParams& ps) {
    std::vector<std::string> keys;
    for (const auto& [k, v] : ps)
        if (std::find(keys.begin(), keys.end(), key_of(k)) == keys.end()) keys.push_back(key_of(k));
    if (keys.empty()) throw ParseError("no mock parameters");
    return keys;
}

std::string signature(const std::vector<std::string>& keys) {
    if (keys.size() == 1) {
        const auto& a = archetype(keys[0]);
        return fmt::format("def {}({}) -> {}:", a.function, a.params, a.returns);
    }
    std::vector<std::string> params, rets;
    for (const auto& k : keys) {
        params.push_back(archetype(k).params);
        rets.push_back(archetype(k).returns);
    }
    return fmt::format("def combined({}) -> tuple[{}]:", text::join(params, ", "), text::join(rets, ", "));
}

std::string docstring(const std::vector<std::string>& keys) {
    if (keys.size() > 1) return "    \"\"\"Returns a tuple with one entry per task, in task order.\"\"\"\n";
    if (keys[0] == "cat")
        return "    \"\"\"Returns one of {\"super-renormalizable\", \"renormalizable\", \"non-renormalizable\"}.\"\"\"\n";
    return "    \"\"\"Returns a " + archetype(keys[0]).returns + ".\"\"\"\n";
}

std::string to_hex_seed(std::string_view digest) { return std::string(digest.substr(0, 16)); }

struct Draw {
    curation::Rng rng;
    explicit Draw(std::string_view digest) : rng(std::stoull(to_hex_seed(digest), nullptr, 16)) {}
    double uniform() { return static_cast<double>(rng.next() >> 11) * 0x1.0p-53; }
    std::size_t below(std::size_t n) { return rng.below(n); }
    bool chance(double p) { return uniform() < p; }
    template <class T>
    const T& pick(const std::vector<T>& xs) { return xs[below(xs.size())]; }
};

std::string mock_line(const MockParams& ps) {
    std::vector<std::string> parts;
    for (const auto& [k, v] : ps) parts.push_back(fmt::format("{}={}", k, v));
    return "(mock parameters: " + text::join(parts, " ") + ")";
}

std::string code_block(const std::string& body) { return "```python\n" + body + "```\n"; }

std::string extract_section(std::string_view text, std::string_view name) {
    const std::string marker = "\\section{" + std::string(name) + "}\n";
    auto at = text.find(marker);
    if (at == std::string_view::npos) return {};
    auto rest = text.substr(at + marker.size());
    return std::string(rest.substr(0, rest.find("\\section{")));
}

// ---------------------------------------------------------------------------
// Roles

std::string generator_reply(const llm::CompletionRequest& r, Draw& d, const MockProfile& profile) {
    const bool hard = r.system_text.find("two to five linked tasks") != std::string::npos;
    std::string topic = "topic";
    std::smatch m;
    static const std::regex topic_re(R"(Topic: (\S+))");
    if (std::regex_search(r.system_text, m, topic_re)) topic = m[1].str();

    std::vector<std::string> keys;
    if (hard) {
        const std::vector<std::string> numeric = {"dc", "hc", "rc"};
        const auto first = d.below(3);
        keys = {numeric[first], numeric[(first + 1 + d.below(2)) % 3]};
    } else {
        keys = {archetypes()[d.below(archetypes().size())].key};
    }
    MockParams ps;
    std::vector<std::string> cats, tasks;
    for (const auto& k : keys) {
        const auto& a = archetype(k);
        for (const auto& [name, values] : a.choices) ps.emplace_back(name, d.pick(values));
        cats.push_back(a.category);
        tasks.push_back(a.task);
    }

    std::string statement = fmt::format("An exercise on {} (variant {}).\n", topic, d.below(100000));
    for (std::size_t i = 0; i < tasks.size(); ++i) statement += fmt::format("{}. {}\n", i + 1, tasks[i]);
    statement += mock_line(ps) + "\n";

    std::string answer;
    for (const auto& [k, v] : ps) answer += fmt::format("{} = {}; ", k, v);

    std::string out;
    out += "\\section{Problem}\n" + statement + "\n";
    out += "\\section{Problem Description}\n";
    out += fmt::format("{} exercise on {} with {}.\n", text::join(cats, " and "), topic, text::trim(answer));
    out += "Task categories: " + text::join(cats, ", ") + "\n\n";
    out += "\\section{Answer Requirements}\n" +
           code_block(signature(keys) + "\n" + docstring(keys) + "    pass\n") + "\n";
    out += "\\section{Solution}\nThe result follows by direct evaluation with the stated conventions.\n";
    out += "Each task reduces to a closed form in the inputs.\n\n";
    out += "\\section{Answer}\n" + std::string(text::trim(answer)) + "\n\n";
    if (!d.chance(profile.malformed_rate)) out += "\\section{Code}\n" + code_block(mock_program(ps));
    return out;
}

std::string test_case_reply(const llm::CompletionRequest& r, Draw& d) {
    const auto req_block = extract_code_blocks(extract_section(r.user_text, "Answer Requirements"));
    if (req_block.empty()) return "I could not find the function.";
    const auto spec = parse_function_spec(req_block.back().body);
    const auto ps = parse_mock_parameters(r.user_text);
    json cases = json::array();
    if (spec.name == "power_counting") {
        for (int dim = 1; dim <= 8; ++dim) cases.push_back(json::array({dim}));
    } else {
        const std::size_t n = 5 + d.below(4);
        for (std::size_t i = 0; i < n; ++i) {
            json args = json::array();
            double lam = 0.0;
            for (const auto& p : spec.params) {
                const double real = std::round((0.5 + 4.5 * d.uniform()) * 1000.0) / 1000.0;
                if (p.name == "lam") {
                    lam = real;
                    args.push_back(real);
                } else if (p.name == "s" && spec.name == "unitarity_allowed") {
                    args.push_back(nullptr);  // filled once lam is known
                } else if (p.kind.tag == ValueKind::Tag::Integer) {
                    args.push_back(1 + static_cast<long>(d.below(8)));
                } else if (p.kind.tag == ValueKind::Tag::Boolean) {
                    args.push_back(d.chance(0.5));
                } else if (p.kind.tag == ValueKind::Tag::Categorical && !p.kind.options.empty()) {
                    args.push_back(d.pick(p.kind.options));
                } else if (p.kind.tag == ValueKind::Tag::Complex) {
                    args.push_back(value_to_json(Value(std::complex<double>(real, 1.0))));
                } else {
                    args.push_back(real);
                }
            }
            if (spec.name == "unitarity_allowed") {
                // Straddle the bound so that a shifted threshold is visible.
                const double t = 0.5 + d.uniform();
                args[0] = std::round(t * param(ps, "lc_a") * M_PI / lam * 1000.0) / 1000.0;
            }
            cases.push_back(std::move(args));
        }
    }
    return "Chosen inputs:\n```json\n" + json{{"test_cases", cases}}.dump() + "\n```\n";
}

std::string grader_reply(Draw& d, const MockProfile& profile) {
    json scores = {{"seed_correspondence", "Excellent"},      {"problem_definition", "Excellent"},
                   {"solution_completeness", "Excellent"},    {"explanatory_quality", "Excellent"},
                   {"test_case_quality", "Excellent"}};
    const double u = d.uniform();
    if (u < profile.definition_fair_rate)
        scores["problem_definition"] = "Fair";
    else if (u < profile.definition_fair_rate + profile.tests_good_rate)
        scores["test_case_quality"] = "Good";
    return "Assessment follows.\n```json\n" + json{{"scores", scores}, {"numeric_score", 9}}.dump() + "\n```\n";
}

std::string regrade_reply(Draw& d, const MockProfile& profile) {
    const char* rating = d.chance(profile.regrade_excellent_rate) ? "Excellent" : "Good";
    return "```json\n" + json{{"scores", {{"test_case_quality", rating}}}}.dump() + "\n```\n";
}

std::string solver_reply(const llm::CompletionRequest& r, Draw& d, const MockProfile& profile) {
    MockParams ps;
    try {
        ps = parse_mock_parameters(r.user_text);
    } catch (const ParseError&) {
        return "<think>\nThe statement does not give enough information.\n</think>\nI cannot solve this.";
    }
    const bool correct = d.chance(profile.solver_correct_rate);
    auto used = ps;
    if (!correct) {
        auto& target = used[d.below(used.size())];
        target.second += d.chance(0.5) || target.second <= 1 ? 1 : -1;
    }
    std::string think = "<think>\n";
    think += "Identify the quantities the function receives.\n";
    think += "Fix the conventions stated in the problem.\n";
    const std::size_t extra = d.below(4) + (correct ? 0 : 3);
    for (std::size_t i = 0; i < extra; ++i) think += fmt::format("Expand term {} and collect powers.\n", i + 1);
    if (!correct || d.chance(0.2)) think += "Wait, no. Let me recalculate the prefactor.\n";
    if (!correct && d.chance(0.5)) think += "I made a mistake in the sign, redo it.\n";
    for (const auto& [k, v] : used) think += fmt::format("The coefficient {} comes out as {}.\n", k, v);
    think += "Write the implementation.\n</think>\n";
    if (!correct && d.chance(0.05)) return think + "The answer is given above in words.\n";
    return think + "The implementation follows.\n" + code_block(mock_program(used));
}

std::vector<std::pair<std::size_t, std::size_t>> even_bounds(std::size_t lines, std::size_t steps) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    steps = std::max<std::size_t>(1, std::min(steps, lines));
    std::size_t start = 1;
    for (std::size_t i = 0; i < steps; ++i) {
        const std::size_t len = (lines - start + 1) / (steps - i);
        out.emplace_back(start, start + len - 1);
        start += len;
    }
    return out;
}

std::string bounds_reply(const llm::CompletionRequest& r, Draw& d) {
    std::size_t lines = 0;
    static const std::regex numbered(R"(^(\d+): )");
    for (const auto& l : text::lines(r.user_text)) {
        std::cmatch m;
        if (std::regex_search(l.text.data(), l.text.data() + l.text.size(), m, numbered))
            lines = std::max<std::size_t>(lines, std::stoul(m[1].str()));
    }
    json steps = json::array();
    if (lines > 0)
        for (auto [a, b] : even_bounds(lines, 5 + d.below(6))) steps.push_back({a, b});
    return "```json\n" + json{{"steps", steps}}.dump() + "\n```\n";
}

std::string dedup_reply(const llm::CompletionRequest& r) {
    std::string_view original = r.user_text;
    if (auto cut = original.find("\n\nYour previous reply changed"); cut != std::string_view::npos)
        original = original.substr(0, cut);
    std::vector<std::string_view> seen;
    std::string out;
    for (const auto& l : text::lines(original)) {
        if (!text::is_blank(l.text) && std::find(seen.begin(), seen.end(), l.text) != seen.end()) continue;
        seen.push_back(l.text);
        out += l.text;
        out += '\n';
    }
    return out;
}

std::string classify_reply(Draw& d) {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> labels = {
        {"mathematical", {"sign error", "algebra error", "missing factor", "arithmetic error"}},
        {"logical", {"unjustified assumption", "reasoning error", "invalid inference"}},
        {"executional", {"code bug", "hardcoded value", "transcription error"}},
        {"factual", {"wrong formula", "wrong identity", "convention error"}},
    };
    static const double weights[] = {0.45, 0.2, 0.2, 0.15};
    auto category = [&] {
        double u = d.uniform();
        for (std::size_t i = 0; i < 4; ++i) {
            if (u < weights[i]) return i;
            u -= weights[i];
        }
        return std::size_t{3};
    };
    json findings = json::array();
    const std::size_t n = 1 + d.below(3);
    std::string primary;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = category();
        if (i == 0) primary = labels[c].first;
        findings.push_back({{"label", d.pick(labels[c].second)},
                            {"severity", i == 0 || d.chance(0.5) ? "major" : "minor"},
                            {"step", std::to_string(1 + d.below(5))},
                            {"note", "mock finding"}});
    }
    return "```json\n" + json{{"findings", findings}, {"primary", primary}}.dump() + "\n```\n";
}

}  // namespace

MockParams parse_mock_parameters(std::string_view text) {
    static const std::regex line(R"(\(mock parameters:([^)]*)\))");
    static const std::regex pair(R"(([a-z]+_[a-z]+)=(-?\d+))");
    const std::string s(text);
    std::smatch m;
    if (!std::regex_search(s, m, line)) throw ParseError("no mock parameters line");
    MockParams out;
    const std::string body = m[1].str();
    for (std::sregex_iterator it(body.begin(), body.end(), pair), end; it != end; ++it)
        out.emplace_back((*it)[1].str(), std::stol((*it)[2].str()));
    if (out.empty()) throw ParseError("empty mock parameters line");
    return out;
}

std::string mock_program(const MockParams& ps) {
    const auto keys = keys_in(ps);
    std::string out = "import math\n\n\n" + signature(keys) + "\n";
    if (keys.size() > 1) {
        std::vector<std::string> names;
        for (std::size_t i = 0; i < keys.size(); ++i) {
            out += fmt::format("    r{} = {}\n", i + 1, expression(keys[i], ps));
            names.push_back(fmt::format("r{}", i + 1));
        }
        return out + "    return (" + text::join(names, ", ") + ")\n";
    }
    if (keys[0] == "cat") {
        out += fmt::format("    dim = {} - d\n", param(ps, "cat_a"));
        out += "    if dim > 0:\n        return \"super-renormalizable\"\n";
        out += "    if dim == 0:\n        return \"renormalizable\"\n";
        return out + "    return \"non-renormalizable\"\n";
    }
    return out + "    return " + expression(keys[0], ps) + "\n";
}

llm::MockTransport::Responder make_responder(MockProfile profile) {
    return [profile](const llm::CompletionRequest& r, const std::string& digest) -> std::string {
        Draw d(digest);
        const auto role = curation::prompt_role(r.system_text);
        if (role == "generator") return generator_reply(r, d, profile);
        if (role == "test_cases" || role == "repair_tests") return test_case_reply(r, d);
        if (role == "grader") return grader_reply(d, profile);
        if (role == "regrade_tests") return regrade_reply(d, profile);
        if (role == "solver") return solver_reply(r, d, profile);
        if (role == "decompose" || role == "distill") return bounds_reply(r, d);
        if (role == "dedup") return dedup_reply(r);
        if (role == "classify") return classify_reply(d);
        throw ConfigError("mock responder has no reply for role '" + role + "'");
    };
}

std::shared_ptr<llm::Transport> make_transport(MockProfile profile) {
    return std::make_shared<llm::MockTransport>(make_responder(profile));
}

}  // namespace vtp::mock
