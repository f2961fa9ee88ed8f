#include "vtp/rollout_eval.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "vtp/jsonl.hpp"
#include "vtp/response_parsing.hpp"
#include "vtp/text_util.hpp"

namespace vtp {

using nlohmann::json;

std::string to_string(StageTag t) {
    switch (t) {
        case StageTag::Base: return "base";
        case StageTag::Rl: return "rl";
        case StageTag::Sft: return "sft";
    }
    return "base";
}

StageTag stage_tag_from_string(std::string_view s) {
    const auto l = text::lower(text::trim(s));
    if (l == "base") return StageTag::Base;
    if (l == "rl") return StageTag::Rl;
    if (l == "sft") return StageTag::Sft;
    throw ParseError("unknown stage tag '" + std::string(s) + "'");
}

void RolloutRecord::validate() const {
    if (reward != 0 && reward != 1) throw ConfigError("reward must be 0 or 1, got " + std::to_string(reward));
    if (reward == 1 && !extracted_program) throw ConfigError("rewarded rollout has no extracted program");
}

RolloutRecord score_rollout(const ProblemRecord& problem, const std::string& response, const ExecutionLimits& limits,
                            Executor& executor, const RolloutMeta& meta) {
    RolloutRecord r;
    r.problem_id = problem.id;
    r.attempt_idx = meta.attempt_idx;
    r.response_text = response;
    r.model_tag = meta.model_tag;
    r.stage_tag = meta.stage_tag;
    r.token_count = meta.token_count ? *meta.token_count : text::approx_token_count(response);

    std::string answer;
    try {
        answer = segment_response(response, meta.markers.open, meta.markers.close).answer_text;
    } catch (const UnbalancedMarkers& e) {
        r.failure = std::string("unbalanced reasoning markers: ") + e.what();
        return r;
    }
    try {
        r.extracted_program = extract_final_code_block(answer);
    } catch (const NoCodeBlock&) {
        r.failure = "no code block";
        return r;
    }
    const auto report = run_verification(problem, *r.extracted_program, limits, executor);
    if (report.all_pass()) {
        r.reward = 1;
        return r;
    }
    for (std::size_t i = 0; i < report.outcomes.size(); ++i) {
        const auto& o = report.outcomes[i];
        if (o.kind == Outcome::Pass) continue;
        r.failure = "test " + std::to_string(i) + ": " + to_string(o.kind);
        if (!o.message.empty()) r.failure += " (" + o.message + ")";
        break;
    }
    return r;
}

// ---------------------------------------------------------------------------

bool best_of_k(const std::vector<int>& row, std::size_t k) {
    if (k == 0 || k > row.size()) throw ConfigError("k must lie in [1, " + std::to_string(row.size()) + "]");
    for (std::size_t i = 0; i < k; ++i)
        if (row[i] == 1) return true;
    return false;
}

double unbiased_pass_at_k(std::size_t n, std::size_t c, std::size_t k) {
    if (k == 0 || k > n || c > n) throw ConfigError("pass@k needs 1 <= k <= n and c <= n");
    if (n - c < k) return 1.0;
    // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
    double miss = 1.0;
    for (std::size_t i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
    return 1.0 - miss;
}

namespace {

struct Acc {
    std::size_t n = 0;
    double acc = 0.0, bo = 0.0, pass = 0.0;
    void add(const ProblemMetrics& p) {
        ++n;
        acc += p.accuracy;
        bo += p.bo_k;
        pass += p.pass_at_k.value_or(0.0);
    }
    GroupMetrics finish(bool with_pass) const {
        GroupMetrics g;
        g.problems = n;
        if (n == 0) return g;
        g.accuracy = acc / static_cast<double>(n);
        g.bo_k = bo / static_cast<double>(n);
        if (with_pass) g.pass_at_k = pass / static_cast<double>(n);
        return g;
    }
};

}  // namespace

MetricsTable aggregate_metrics(const std::vector<std::vector<int>>& rewards, const std::vector<RowMeta>& meta,
                               const AggregateOptions& options) {
    if (rewards.empty()) throw ConfigError("reward matrix is empty");
    if (meta.size() != rewards.size()) throw ConfigError("one metadata row per problem required");
    const std::size_t n = rewards.front().size();
    if (n == 0) throw ConfigError("reward matrix has no attempts");
    if (options.k == 0 || options.k > n)
        throw ConfigError(fmt::format("k = {} outside [1, {}]", options.k, n));

    MetricsTable t;
    t.k = options.k;
    t.attempts = n;
    Acc all;
    std::map<DomainLevel, Acc> levels;
    std::map<DatasetTag, Acc> tags;
    for (std::size_t r = 0; r < rewards.size(); ++r) {
        const auto& row = rewards[r];
        if (row.size() != n) throw ConfigError(fmt::format("row {} has {} attempts, expected {}", r, row.size(), n));
        std::size_t c = 0;
        for (int x : row) {
            if (x != 0 && x != 1) throw ConfigError(fmt::format("row {} has non-binary reward {}", r, x));
            c += static_cast<std::size_t>(x);
        }
        ProblemMetrics p;
        p.problem_id = meta[r].problem_id;
        p.accuracy = static_cast<double>(c) / static_cast<double>(n);
        p.bo_k = best_of_k(row, options.k) ? 1.0 : 0.0;
        if (options.unbiased_pass_at_k) p.pass_at_k = unbiased_pass_at_k(n, c, options.k);
        if (c > 0) ++t.solved_count;
        if (c == n) ++t.perfect_count;
        all.add(p);
        levels[meta[r].domain_level].add(p);
        tags[meta[r].dataset_tag].add(p);
        t.problems.push_back(std::move(p));
    }
    t.overall = all.finish(options.unbiased_pass_at_k);
    for (const auto& [l, a] : levels) t.by_level[l] = a.finish(options.unbiased_pass_at_k);
    for (const auto& [g, a] : tags) t.by_tag[g] = a.finish(options.unbiased_pass_at_k);
    return t;
}

std::vector<std::vector<int>> reward_matrix(const std::vector<RolloutRecord>& rollouts,
                                            std::vector<std::string>* problem_ids) {
    std::vector<std::string> order;
    std::map<std::string, std::map<std::size_t, int>> by_problem;
    for (const auto& r : rollouts) {
        r.validate();
        auto [it, fresh] = by_problem.try_emplace(r.problem_id);
        if (fresh) order.push_back(r.problem_id);
        if (!it->second.emplace(r.attempt_idx, r.reward).second)
            throw ConfigError(fmt::format("problem '{}' has duplicate attempt {}", r.problem_id, r.attempt_idx));
    }
    std::vector<std::vector<int>> m;
    for (const auto& id : order) {
        std::vector<int> row;
        for (const auto& [idx, reward] : by_problem[id]) row.push_back(reward);
        m.push_back(std::move(row));
    }
    if (problem_ids) *problem_ids = order;
    return m;
}

double reduction_percent(std::size_t before, std::size_t after) {
    if (before == 0) throw ConfigError("reduction needs a non-zero starting count");
    const double pct = 100.0 * (static_cast<double>(before) - static_cast<double>(after)) / static_cast<double>(before);
    return std::round(pct * 10.0) / 10.0;
}

// ---------------------------------------------------------------------------

json to_json(const RolloutRecord& r) {
    json j = {{"problem_id", r.problem_id},
              {"attempt_idx", r.attempt_idx},
              {"response_text", r.response_text},
              {"extracted_program", r.extracted_program ? json(*r.extracted_program) : json(nullptr)},
              {"reward", r.reward},
              {"token_count", r.token_count},
              {"model_tag", r.model_tag},
              {"stage_tag", to_string(r.stage_tag)}};
    if (!r.failure.empty()) j["failure"] = r.failure;
    if (r.backtrack_count) j["backtrack_count"] = *r.backtrack_count;
    return j;
}

RolloutRecord rollout_from_json(const json& j) {
    RolloutRecord r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.attempt_idx = j.value("attempt_idx", std::size_t{0});
    r.response_text = j.value("response_text", std::string{});
    if (j.contains("extracted_program") && !j["extracted_program"].is_null())
        r.extracted_program = j["extracted_program"].get<std::string>();
    r.reward = j.at("reward").get<int>();
    r.token_count = j.contains("token_count") ? j["token_count"].get<std::size_t>()
                                              : text::approx_token_count(r.response_text);
    r.model_tag = j.value("model_tag", std::string{});
    r.stage_tag = stage_tag_from_string(j.value("stage_tag", std::string("base")));
    r.failure = j.value("failure", std::string{});
    if (j.contains("backtrack_count")) r.backtrack_count = j["backtrack_count"].get<std::size_t>();
    r.validate();
    return r;
}

std::vector<RolloutRecord> load_rollouts(const std::filesystem::path& path) {
    return jsonl::read<RolloutRecord>(path, rollout_from_json);
}

void save_rollouts(const std::vector<RolloutRecord>& rollouts, const std::filesystem::path& path) {
    jsonl::write(rollouts, path, [](const RolloutRecord& r) { return to_json(r); });
}

namespace {

std::string num(double x) { return fmt::format("{:.4f}", x); }

}  // namespace

std::string per_problem_csv(const MetricsTable& t, const std::vector<RowMeta>& meta) {
    if (meta.size() != t.problems.size()) throw ConfigError("metadata does not match the metrics table");
    const bool pass = !t.problems.empty() && t.problems.front().pass_at_k.has_value();
    std::string out = fmt::format("problem_id,domain_level,dataset_tag,Succ,Bo{}", t.k);
    if (pass) out += fmt::format(",pass@{}", t.k);
    out += '\n';
    for (std::size_t i = 0; i < t.problems.size(); ++i) {
        const auto& p = t.problems[i];
        out += fmt::format("{},{},{},{},{}", p.problem_id, to_string(meta[i].domain_level),
                           to_string(meta[i].dataset_tag), num(p.accuracy), num(p.bo_k));
        if (pass) out += "," + num(p.pass_at_k.value_or(0.0));
        out += '\n';
    }
    return out;
}

std::string summary_csv(const MetricsTable& t) {
    std::string out = fmt::format("group,problems,Succ,Bo{}\n", t.k);
    auto row = [&](const std::string& name, const GroupMetrics& g) {
        out += fmt::format("{},{},{},{}\n", name, g.problems, num(g.accuracy), num(g.bo_k));
    };
    for (const auto& [l, g] : t.by_level) row(to_string(l), g);
    for (const auto& [tag, g] : t.by_tag) row(to_string(tag), g);
    row("overall", t.overall);
    return out;
}

namespace {

json group_json(const GroupMetrics& g) {
    json j = {{"problems", g.problems}, {"accuracy", g.accuracy}, {"bo_k", g.bo_k}};
    if (g.pass_at_k) j["pass_at_k"] = *g.pass_at_k;
    return j;
}

}  // namespace

json to_json(const MetricsTable& t) {
    json j = {{"k", t.k},
              {"attempts", t.attempts},
              {"solved_count", t.solved_count},
              {"perfect_count", t.perfect_count},
              {"overall", group_json(t.overall)}};
    for (const auto& [l, g] : t.by_level) j["by_level"][to_string(l)] = group_json(g);
    for (const auto& [tag, g] : t.by_tag) j["by_tag"][to_string(tag)] = group_json(g);
    json rows = json::array();
    for (const auto& p : t.problems) {
        json r = {{"problem_id", p.problem_id}, {"accuracy", p.accuracy}, {"bo_k", p.bo_k}};
        if (p.pass_at_k) r["pass_at_k"] = *p.pass_at_k;
        rows.push_back(std::move(r));
    }
    j["problems"] = std::move(rows);
    return j;
}

}  // namespace vtp
