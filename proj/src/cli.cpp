#include "vtp/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <memory>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "vtp/cot_analysis.hpp"
#include "vtp/curation_pipeline.hpp"
#include "vtp/grpo_math.hpp"
#include "vtp/jsonl.hpp"
#include "vtp/mock_responder.hpp"
#include "vtp/rollout_eval.hpp"
#include "vtp/sandbox.hpp"
#include "vtp/text_util.hpp"

namespace vtp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

struct Common {
    std::string out = "out";
    std::string transport = "mock";
    std::string replay_dir;
    std::string record_dir;
    std::string base_url;
    std::string api_key_env = "VTP_API_KEY";
    double rate = 0.0;
    std::size_t workers = 1;
    std::uint64_t seed = 42;
    double wall_time = 20.0;
    std::size_t memory_mb = 512;
    std::string executor = "inprocess";
    std::string python = "python3";
    std::string driver;
    std::string assets;
    ThinkMarkers markers;
};

void add_marker_flags(CLI::App* sub, Common& c) {
    sub->add_option("--think-open", c.markers.open, "Opening reasoning marker")->capture_default_str();
    sub->add_option("--think-close", c.markers.close, "Closing reasoning marker")->capture_default_str();
}

void add_common(CLI::App* sub, Common& c, bool gateway) {
    sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    sub->add_option("--workers", c.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    sub->add_option("--wall-time", c.wall_time, "Per-program time limit in seconds")->capture_default_str();
    sub->add_option("--memory-mb", c.memory_mb, "Per-program memory limit")->capture_default_str();
    sub->add_option("--executor", c.executor, "inprocess or process")
        ->capture_default_str()
        ->check(CLI::IsMember({"inprocess", "process"}));
    sub->add_option("--python", c.python, "Guest interpreter for the process executor")->capture_default_str();
    sub->add_option("--driver", c.driver, "Driver script for the process executor");
    sub->add_option("--assets", c.assets, "Asset directory (catalog and prompts)");
    if (!gateway) return;
    sub->add_option("--transport", c.transport, "mock, replay or live")
        ->capture_default_str()
        ->check(CLI::IsMember({"mock", "replay", "live"}));
    sub->add_option("--replay-dir", c.replay_dir, "Replay store for --transport replay");
    sub->add_option("--record", c.record_dir, "Store every exchange in this replay directory");
    sub->add_option("--base-url", c.base_url, "Provider URL for --transport live");
    sub->add_option("--api-key-env", c.api_key_env, "Variable holding the provider key")->capture_default_str();
    sub->add_option("--rate", c.rate, "Requests per second, 0 for unlimited")->capture_default_str();
}

void require_file(const std::string& path, const char* flag) {
    if (path.empty()) throw UsageError(std::string(flag) + " is required");
    if (!fs::exists(path)) throw UsageError(std::string(flag) + " " + path + " does not exist");
}

fs::path asset_dir(const Common& c) {
    if (!c.assets.empty()) return c.assets;
    return curation::PromptLibrary::default_dir().parent_path();
}

ExecutionLimits limits_of(const Common& c) {
    ExecutionLimits l;
    l.wall_time = c.wall_time;
    l.memory = c.memory_mb * 1024 * 1024;
    l.validate();
    return l;
}

/// Everything a command needs once its arguments have been accepted.
class Context {
public:
    Context(const Common& c, CLI::App* sub, std::ostream& out) : common(c), sub_(sub), out_(out) {}

    const Common& common;

    /// Checks the shared flags. Throws UsageError or ConfigError.
    void check() {
        limits = limits_of(common);
        if (common.executor == "process" && common.driver.empty()) throw UsageError("--executor process needs --driver");
        if (!common.driver.empty()) require_file(common.driver, "--driver");
        if (!common.assets.empty()) require_file(common.assets, "--assets");
        if (common.transport == "replay" && common.replay_dir.empty())
            throw UsageError("--transport replay needs --replay-dir");
        if (common.transport == "replay") require_file(common.replay_dir, "--replay-dir");
        if (common.transport == "live" && common.base_url.empty()) throw UsageError("--transport live needs --base-url");
        if (common.markers.open.empty() || common.markers.close.empty())
            throw UsageError("--think-open and --think-close must be non-empty");
    }

    /// Creates the output directory and writes the config snapshot.
    void begin(const json& extra = json::object()) {
        dir_ = common.out;
        fs::create_directories(dir_);
        json options = json::object();
        for (const CLI::Option* opt : sub_->get_options()) {
            const auto name = opt->get_name(false, true);
            if (name == "--help" || name == "--out" || name.empty()) continue;
            const auto res = opt->results();
            if (!res.empty())
                options[name] = res.size() == 1 ? json(res[0]) : json(res);
            else if (!opt->get_default_str().empty())
                options[name] = opt->get_default_str();
        }
        json cfg = {{"command", sub_->get_name()}, {"options", options}, {"seed", common.seed}};
        for (const auto& [k, v] : extra.items()) cfg[k] = v;
        write("config.json", cfg.dump(2) + "\n");
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    void write(const std::string& name, const std::string& content) const {
        std::ofstream f(path(name), std::ios::binary);
        if (!f) throw Error("cannot write " + path(name).string());
        f << content;
    }

    void write_json(const std::string& name, const json& j) const { write(name, j.dump(2) + "\n"); }

    void write_jsonl(const std::string& name, const std::vector<json>& rows) const {
        std::string s;
        for (const auto& r : rows) s += r.dump() + "\n";
        write(name, s);
    }

    std::ostream& out() { return out_; }

    llm::Gateway& gateway() {
        if (!gateway_) {
            std::shared_ptr<llm::Transport> t;
            if (common.transport == "mock") {
                t = mock::make_transport();
            } else if (common.transport == "replay") {
                t = std::make_shared<llm::ReplayTransport>(common.replay_dir);
            } else {
                llm::LiveConfig cfg;
                cfg.base_url = common.base_url;
                cfg.api_key_env = common.api_key_env;
                t = std::make_shared<llm::LiveTransport>(cfg);
            }
            if (!common.record_dir.empty()) {
                fs::create_directories(common.record_dir);
                t = std::make_shared<llm::RecordingTransport>(t, common.record_dir);
            }
            gateway_ = std::make_unique<llm::Gateway>(t, llm::RetryPolicy{}, common.rate, 1.0);
        }
        return *gateway_;
    }

    Executor& executor() {
        if (!executor_) {
            if (common.executor == "process")
                executor_ = std::make_unique<ProcessExecutor>(ProcessExecutorConfig{{common.python}, common.driver});
            else
                executor_ = std::make_unique<InProcessExecutor>();
        }
        return *executor_;
    }

    const curation::PromptLibrary& prompts() {
        if (!prompts_) prompts_ = curation::PromptLibrary::load(asset_dir(common) / "prompts");
        return *prompts_;
    }

    ExecutionLimits limits;

private:
    CLI::App* sub_;
    std::ostream& out_;
    fs::path dir_;
    std::unique_ptr<llm::Gateway> gateway_;
    std::unique_ptr<Executor> executor_;
    std::optional<curation::PromptLibrary> prompts_;
};

std::string csv_field(std::string s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

json gateway_stats(llm::Gateway& gw) {
    const auto s = gw.stats();
    return {{"requests", s.requests},
            {"retries", s.retries},
            {"prompt_tokens", s.prompt_tokens},
            {"completion_tokens", s.completion_tokens}};
}

std::map<std::string, const ProblemRecord*> index_of(const std::vector<ProblemRecord>& records) {
    std::map<std::string, const ProblemRecord*> m;
    for (const auto& r : records) m[r.id] = &r;
    return m;
}

// ---------------------------------------------------------------------------
// generate / curate

struct GenerationFlags {
    std::string tier = "easy";
    std::size_t n = 10;
    std::string registry;
    std::string conventions;
    std::string generator = "generator";
    std::vector<std::string> graders = {"grader-a", "grader-a", "grader-b"};
    std::string solver = "frontier-solver";
};

void add_generation(CLI::App* sub, GenerationFlags& g) {
    sub->add_option("--tier", g.tier, "easy, medium or hard")
        ->capture_default_str()
        ->check(CLI::IsMember({"easy", "medium", "hard"}));
    sub->add_option("--n", g.n, "Number of candidates")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--registry", g.registry, "Summary registry file, read and updated");
    sub->add_option("--conventions", g.conventions, "File with a global conventions preamble");
    sub->add_option("--generator-model", g.generator, "Generator model tag")->capture_default_str();
}

curation::CurateOptions curate_options(const Context& ctx, const GenerationFlags& g) {
    curation::CurateOptions o;
    o.tier = dataset_tag_from_string(g.tier);
    o.n = g.n;
    o.seed = ctx.common.seed;
    o.workers = ctx.common.workers;
    o.generator_model = g.generator;
    o.grader_models = g.graders;
    o.solver.model_tag = g.solver;
    o.solver.markers = ctx.common.markers;
    o.limits = ctx.limits;
    if (!g.conventions.empty()) {
        std::ifstream in(g.conventions);
        o.global_conventions = std::string(std::istreambuf_iterator<char>(in), {});
    }
    return o;
}

int cmd_generate(Context& ctx, const GenerationFlags& g) {
    ctx.check();
    if (!g.conventions.empty()) require_file(g.conventions, "--conventions");
    const auto opts = curate_options(ctx, g);
    ctx.begin({{"prompt_versions", ctx.prompts().versions()}});
    const auto catalog = curation::TopicCatalog::load(asset_dir(ctx.common) / "topic_catalog.json");
    auto registry = g.registry.empty() ? curation::SummaryRegistry{} : curation::SummaryRegistry::load(g.registry);
    const auto gen = curation::generate_candidates(opts, catalog, ctx.prompts(), registry, ctx.gateway());
    std::vector<ProblemRecord> drafts;
    std::vector<json> outcomes;
    for (const auto& c : gen) {
        if (c.record) drafts.push_back(*c.record);
        outcomes.push_back(curation::to_json(c.outcome));
    }
    save_dataset(drafts, ctx.path("drafts.jsonl"));
    ctx.write_jsonl("outcomes.jsonl", outcomes);
    registry.save(ctx.path("registry.json"));
    if (!g.registry.empty()) registry.save(g.registry);
    ctx.out() << fmt::format("generated {} of {} drafts\n", drafts.size(), gen.size());
    return kExitOk;
}

int cmd_curate(Context& ctx, const GenerationFlags& g) {
    ctx.check();
    if (!g.conventions.empty()) require_file(g.conventions, "--conventions");
    const auto opts = curate_options(ctx, g);
    ctx.begin({{"prompt_versions", ctx.prompts().versions()}});
    const auto catalog = curation::TopicCatalog::load(asset_dir(ctx.common) / "topic_catalog.json");
    auto registry = g.registry.empty() ? curation::SummaryRegistry{} : curation::SummaryRegistry::load(g.registry);
    const auto res = curation::curate(opts, catalog, ctx.prompts(), registry, ctx.gateway(), ctx.executor());
    const auto manifest = curation::record_manifest({{opts.tier, res.row}});
    save_dataset(res.kept, ctx.path("problems.jsonl"), manifest);
    save_dataset(res.indeterminate, ctx.path("indeterminate.jsonl"));
    std::vector<json> outcomes;
    for (const auto& o : res.outcomes) outcomes.push_back(curation::to_json(o));
    ctx.write_jsonl("outcomes.jsonl", outcomes);
    registry.save(ctx.path("registry.json"));
    if (!g.registry.empty()) registry.save(g.registry);
    ctx.write_json("summary.json", {{"tier", g.tier},
                                    {"initial_count", res.row.initial_count},
                                    {"passed_qc", res.row.passed_qc},
                                    {"passed_qc_frontier", res.row.passed_qc_frontier},
                                    {"indeterminate", res.indeterminate.size()},
                                    {"gateway", gateway_stats(ctx.gateway())}});
    ctx.out() << fmt::format("{}: initial {} -> QC {} -> QC+frontier {} ({} indeterminate)\n", g.tier,
                             res.row.initial_count, res.row.passed_qc, res.row.passed_qc_frontier,
                             res.indeterminate.size());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// grade / verify-golden

int cmd_grade(Context& ctx, const std::string& dataset, const std::vector<std::string>& graders) {
    ctx.check();
    require_file(dataset, "--dataset");
    ctx.begin({{"prompt_versions", ctx.prompts().versions()}});
    auto ds = load_dataset(dataset);
    std::vector<std::string> gate_rows(ds.records.size());
    curation::GatePolicy policy;
    VerificationPool pool(ctx.common.workers);
    pool.for_each(ds.records.size(), [&](std::size_t i) {
        auto& p = ds.records[i];
        std::string kind, reasons;
        try {
            p.quality_reports = curation::grade_problem(p, graders, policy, ctx.prompts(), ctx.gateway());
            const auto d = curation::quality_gate(p.quality_reports, p.dataset_tag, policy);
            kind = curation::to_string(d.kind);
            reasons = text::join(d.reasons, "; ");
        } catch (const Error& e) {
            kind = "error";
            reasons = e.what();
        }
        gate_rows[i] = csv_field(p.id) + "," + kind + "," + csv_field(reasons) + "\n";
    });
    save_dataset(ds.records, ctx.path("graded.jsonl"));
    std::string csv = "id,gate,reasons\n";
    std::map<std::string, std::size_t> tally;
    for (const auto& r : gate_rows) {
        csv += r;
        ++tally[text::split(r, ',')[1]];
    }
    ctx.write("gates.csv", csv);
    for (const auto& [k, n] : tally) ctx.out() << k << ": " << n << "\n";
    return kExitOk;
}

int cmd_verify_golden(Context& ctx, const std::string& dataset) {
    ctx.check();
    require_file(dataset, "--dataset");
    ctx.begin();
    const auto ds = load_dataset(dataset);
    std::vector<json> rows(ds.records.size());
    VerificationPool pool(ctx.common.workers);
    pool.for_each(ds.records.size(), [&](std::size_t i) {
        const auto& p = ds.records[i];
        json row = {{"id", p.id}, {"ok", false}};
        if (auto v = validate_problem(p); !v.ok()) {
            row["problem"] = "invalid record: " + text::join(v.violations, "; ");
            rows[i] = row;
            return;
        }
        try {
            const auto rep = run_verification(p, p.golden_program, ctx.limits, ctx.executor());
            std::vector<std::string> problems;
            if (!rep.all_pass()) problems.push_back("golden disagrees with itself");
            for (std::size_t t = 0; t < p.test_cases.size(); ++t) {
                const auto& exp = p.test_cases[t].expected;
                if (exp && rep.golden_values[t] &&
                    !compare_values(*exp, *rep.golden_values[t], p.test_cases[t].comparison,
                                    &p.answer_requirements.returns))
                    problems.push_back(fmt::format("test {}: stored expected {} but golden gives {}", t,
                                                   to_display(*exp), to_display(*rep.golden_values[t])));
            }
            row["ok"] = problems.empty();
            if (!problems.empty()) row["problem"] = text::join(problems, "; ");
        } catch (const GoldenFailure& e) {
            row["problem"] = e.what();
        }
        rows[i] = row;
    });
    ctx.write_jsonl("golden_report.jsonl", rows);
    const auto bad = std::count_if(rows.begin(), rows.end(), [](const json& r) { return !r["ok"].get<bool>(); });
    ctx.out() << fmt::format("{} of {} golden programs verified\n", rows.size() - bad, rows.size());
    for (const auto& r : rows)
        if (!r["ok"].get<bool>()) ctx.out() << "  " << r["id"].get<std::string>() << ": " << r["problem"].get<std::string>() << "\n";
    return bad ? kExitDomain : kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate / report

struct EvalFlags {
    std::string dataset;
    std::string responses;
    std::optional<std::size_t> k;
    bool unbiased = false;
    bool no_rescore = false;
    std::size_t solve = 0;
    std::string model = "solver";
    std::string stage = "base";
    double temperature = 1.0;
};

std::string level_rows(const MetricsTable& t, bool tags) {
    std::string csv = fmt::format("{},problems,Succ,Bo{}\n", tags ? "dataset_tag" : "domain_level", t.k);
    auto row = [&](const std::string& name, const GroupMetrics* g) {
        if (!g || g->problems == 0) {
            csv += name + ",0,,\n";
            return;
        }
        csv += fmt::format("{},{},{:.4f},{:.4f}\n", name, g->problems, g->accuracy, g->bo_k);
    };
    if (tags) {
        for (auto tag : {DatasetTag::Easy, DatasetTag::Medium, DatasetTag::Hard, DatasetTag::Pedagogy, DatasetTag::Arxiv}) {
            auto it = t.by_tag.find(tag);
            row(to_string(tag), it == t.by_tag.end() ? nullptr : &it->second);
        }
    } else {
        for (auto level : {DomainLevel::AU, DomainLevel::GR, DomainLevel::AG, DomainLevel::PG}) {
            auto it = t.by_level.find(level);
            row(to_string(level), it == t.by_level.end() ? nullptr : &it->second);
        }
    }
    return csv;
}

MetricsTable metrics_for(const std::vector<RolloutRecord>& rollouts, const std::vector<ProblemRecord>* dataset,
                         std::size_t k, bool unbiased) {
    std::vector<std::string> ids;
    const auto matrix = reward_matrix(rollouts, &ids);
    std::map<std::string, const ProblemRecord*> index;
    if (dataset) index = index_of(*dataset);
    std::vector<RowMeta> meta;
    for (const auto& id : ids) {
        RowMeta m;
        m.problem_id = id;
        if (dataset) {
            auto it = index.find(id);
            if (it == index.end()) throw Error("rollouts mention unknown problem '" + id + "'");
            m.domain_level = it->second->domain_level;
            m.dataset_tag = it->second->dataset_tag;
        }
        meta.push_back(m);
    }
    AggregateOptions o;
    o.k = k;
    o.unbiased_pass_at_k = unbiased;
    return aggregate_metrics(matrix, meta, o);
}

int cmd_evaluate(Context& ctx, const EvalFlags& f) {
    ctx.check();
    // without --k, Bo_k covers every sampled attempt under --solve
    const std::size_t k = f.k.value_or(f.solve ? f.solve : 5);
    if (k == 0) throw UsageError("--k must be positive");
    if (f.solve == 0) require_file(f.responses, "--responses");
    if (f.solve > 0 && !f.responses.empty()) throw UsageError("--solve and --responses are exclusive");
    if (!f.no_rescore || f.solve > 0) require_file(f.dataset, "--dataset");
    else if (!f.dataset.empty()) require_file(f.dataset, "--dataset");
    const auto stage = stage_tag_from_string(f.stage);
    ctx.begin(f.solve ? json{{"prompt_versions", ctx.prompts().versions()}} : json::object());

    std::optional<Dataset> ds;
    if (!f.dataset.empty()) ds = load_dataset(f.dataset);
    const auto index = ds ? index_of(ds->records) : std::map<std::string, const ProblemRecord*>{};
    std::vector<RolloutRecord> rollouts;
    std::vector<json> defects;

    if (f.solve > 0) {
        curation::SolverConfig cfg;
        cfg.markers = ctx.common.markers;
        cfg.model_tag = f.model;
        cfg.temperature = f.temperature;
        std::vector<std::optional<curation::RejectionResult>> results(ds->records.size());
        std::vector<std::string> errors(ds->records.size());
        VerificationPool pool(ctx.common.workers);
        pool.for_each(ds->records.size(), [&](std::size_t i) {
            try {
                results[i] = curation::rejection_sample_traces(ds->records[i], ctx.gateway(), f.solve, ctx.limits,
                                                               ctx.executor(), ctx.prompts(), cfg);
            } catch (const GoldenFailure& e) {
                errors[i] = e.what();
            }
        });
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (!errors[i].empty()) defects.push_back({{"problem_id", ds->records[i].id}, {"error", errors[i]}});
            if (!results[i]) continue;
            if (results[i]->failures) {
                defects.push_back({{"problem_id", ds->records[i].id},
                                   {"error", fmt::format("{} gateway failures", results[i]->failures)}});
                continue;
            }
            for (auto r : results[i]->rollouts) {
                r.stage_tag = stage;
                rollouts.push_back(std::move(r));
            }
        }
    } else {
        const auto raw = jsonl::read<json>(f.responses, [](const json& j) { return j; });
        std::vector<std::optional<RolloutRecord>> scored(raw.size());
        std::vector<std::string> errors(raw.size());
        VerificationPool pool(ctx.common.workers);
        pool.for_each(raw.size(), [&](std::size_t i) {
            const auto& j = raw[i];
            try {
                if (f.no_rescore) {
                    scored[i] = rollout_from_json(j);
                    return;
                }
                const auto id = j.at("problem_id").get<std::string>();
                auto it = index.find(id);
                if (it == index.end()) throw Error("unknown problem '" + id + "'");
                RolloutMeta meta;
                meta.attempt_idx = j.value("attempt_idx", std::size_t{0});
                meta.model_tag = j.value("model_tag", f.model);
                meta.markers = ctx.common.markers;
                meta.stage_tag = j.contains("stage_tag") ? stage_tag_from_string(j["stage_tag"].get<std::string>()) : stage;
                if (j.contains("token_count")) meta.token_count = j["token_count"].get<std::size_t>();
                scored[i] = score_rollout(*it->second, j.at("response_text").get<std::string>(), ctx.limits,
                                          ctx.executor(), meta);
            } catch (const GoldenFailure& e) {
                errors[i] = e.what();
            } catch (const json::exception& e) {
                errors[i] = fmt::format("line {}: {}", i + 1, e.what());
            }
        });
        std::set<std::string> defective;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (errors[i].empty()) continue;
            const auto id = raw[i].value("problem_id", std::string{});
            if (defective.insert(id).second) defects.push_back({{"problem_id", id}, {"error", errors[i]}});
        }
        for (std::size_t i = 0; i < raw.size(); ++i)
            if (scored[i] && !defective.count(scored[i]->problem_id)) rollouts.push_back(std::move(*scored[i]));
    }

    save_rollouts(rollouts, ctx.path("rollouts.jsonl"));
    ctx.write_jsonl("defects.jsonl", defects);
    if (rollouts.empty()) throw Error("no rollouts left to aggregate");
    const auto table = metrics_for(rollouts, ds ? &ds->records : nullptr, k, f.unbiased);
    ctx.write("per_problem.csv", per_problem_csv(table, [&] {
                  std::vector<RowMeta> m;
                  for (const auto& p : table.problems) {
                      RowMeta r;
                      r.problem_id = p.problem_id;
                      if (auto it = index.find(p.problem_id); it != index.end()) {
                          r.domain_level = it->second->domain_level;
                          r.dataset_tag = it->second->dataset_tag;
                      }
                      m.push_back(r);
                  }
                  return m;
              }()));
    ctx.write("summary.csv", summary_csv(table));
    ctx.write_json("metrics.json", to_json(table));
    ctx.out() << fmt::format("{} problems x {} attempts: Succ {:.4f}, Bo{} {:.4f}, perfect {}, solved {}\n",
                             table.problems.size(), table.attempts, table.overall.accuracy, table.k,
                             table.overall.bo_k, table.perfect_count, table.solved_count);
    if (!defects.empty()) ctx.out() << defects.size() << " defective problem(s) excluded, see defects.jsonl\n";
    return kExitOk;
}

struct ReportFlags {
    std::string dataset;
    std::string rollouts;
    std::size_t k = 5;
    bool by_level = false;
    bool by_tag = false;
    std::vector<std::string> agreement;
    std::string reports;
    std::size_t incorrect = 0;
    std::vector<std::size_t> reduction;
};

int cmd_report(Context& ctx, const ReportFlags& f) {
    ctx.check();
    const bool metrics = f.by_level || f.by_tag;
    if (!metrics && f.agreement.empty() && f.reports.empty() && f.reduction.empty())
        throw UsageError("choose at least one of --by-level, --by-tag, --agreement, --reports, --reduction");
    if (metrics) {
        require_file(f.rollouts, "--rollouts");
        require_file(f.dataset, "--dataset");
    }
    std::map<std::string, std::string> agreement_paths;
    for (const auto& a : f.agreement) {
        const auto eq = a.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--agreement expects NAME=PATH, got " + a);
        agreement_paths[a.substr(0, eq)] = a.substr(eq + 1);
        require_file(a.substr(eq + 1), "--agreement");
    }
    if (!f.reports.empty()) require_file(f.reports, "--reports");
    if (!f.reduction.empty() && f.reduction.size() != 2) throw UsageError("--reduction expects BEFORE AFTER");
    ctx.begin();

    if (metrics) {
        const auto ds = load_dataset(f.dataset);
        const auto table = metrics_for(load_rollouts(f.rollouts), &ds.records, f.k, false);
        if (f.by_level) {
            const auto csv = level_rows(table, false);
            ctx.write("by_level.csv", csv);
            ctx.out() << csv;
        }
        if (f.by_tag) {
            const auto csv = level_rows(table, true);
            ctx.write("by_tag.csv", csv);
            ctx.out() << csv;
        }
    }
    if (!agreement_paths.empty()) {
        std::map<std::string, std::vector<cot::AttemptErrorReport>> sets;
        for (const auto& [name, path] : agreement_paths) sets[name] = cot::load_reports(path);
        const auto csv = cot::agreement_csv(cot::analyzer_agreement(sets));
        ctx.write("agreement.csv", csv);
        ctx.out() << csv;
    }
    if (!f.reports.empty()) {
        const auto reports = cot::load_reports(f.reports);
        const auto csv = cot::frequency_csv(cot::aggregate_frequencies(reports, f.incorrect ? f.incorrect : reports.size()));
        ctx.write("frequencies.csv", csv);
        ctx.out() << csv;
    }
    if (!f.reduction.empty()) {
        const double pct = reduction_percent(f.reduction[0], f.reduction[1]);
        ctx.write_json("reduction.json", {{"before", f.reduction[0]}, {"after", f.reduction[1]}, {"percent", pct}});
        ctx.out() << fmt::format("{} -> {}: {:.1f}% reduction\n", f.reduction[0], f.reduction[1], pct);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sft-distill

int cmd_sft_distill(Context& ctx, const std::string& dataset, std::size_t k, const std::string& teacher,
                    double temperature) {
    ctx.check();
    require_file(dataset, "--dataset");
    if (k == 0) throw UsageError("--k must be positive");
    ctx.begin({{"prompt_versions", ctx.prompts().versions()}});
    const auto ds = load_dataset(dataset);
    curation::SolverConfig cfg;
    cfg.markers = ctx.common.markers;
    cfg.model_tag = teacher;
    cfg.temperature = temperature;
    std::vector<curation::RejectionResult> results(ds.records.size());
    std::vector<std::string> defects(ds.records.size());
    VerificationPool pool(ctx.common.workers);
    pool.for_each(ds.records.size(), [&](std::size_t i) {
        try {
            results[i] = curation::rejection_sample_traces(ds.records[i], ctx.gateway(), k, ctx.limits, ctx.executor(),
                                                           ctx.prompts(), cfg);
        } catch (const GoldenFailure& e) {
            results[i].problem_id = ds.records[i].id;
            defects[i] = e.what();
        }
    });
    std::vector<RolloutRecord> traces, all;
    std::string csv = "problem_id,attempts,traces,failures\n";
    std::vector<json> defect_rows;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (!defects[i].empty()) defect_rows.push_back({{"problem_id", r.problem_id}, {"error", defects[i]}});
        csv += fmt::format("{},{},{},{}\n", csv_field(r.problem_id), r.rollouts.size(), r.traces.size(), r.failures);
        all.insert(all.end(), r.rollouts.begin(), r.rollouts.end());
        for (auto t : r.traces) {
            t.stage_tag = StageTag::Sft;
            traces.push_back(std::move(t));
        }
    }
    const auto s = curation::summarize_distillation(results);
    save_rollouts(traces, ctx.path("traces.jsonl"));
    save_rollouts(all, ctx.path("rollouts.jsonl"));
    ctx.write("per_problem.csv", csv);
    ctx.write_jsonl("defects.jsonl", defect_rows);
    ctx.write_json("summary.json", {{"problems", s.problems},
                                    {"solved", s.solved},
                                    {"solved_percent", s.solved_percent},
                                    {"traces", s.traces},
                                    {"gateway_failures", s.failures},
                                    {"defects", defect_rows.size()}});
    ctx.out() << fmt::format("{} of {} problems solved ({:.1f}%), {} traces kept\n", s.solved, s.problems,
                             s.solved_percent, s.traces);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// grpo-advantages

int cmd_grpo(Context& ctx, const std::string& rewards_path, const std::string& mode_name, double eps_low,
             double eps_high) {
    ctx.check();
    require_file(rewards_path, "--rewards");
    grpo::ClipConfig clip{eps_low, eps_high};
    clip.validate();
    const auto mode = mode_name == "token" ? grpo::LossMode::Token : grpo::LossMode::Sequence;
    ctx.begin();

    struct Row {
        std::size_t attempt;
        double reward;
        std::optional<std::vector<double>> logp_new, logp_old;
    };
    std::vector<std::string> order;
    std::map<std::string, std::vector<Row>> groups;
    const auto raw = jsonl::read<json>(rewards_path, [](const json& j) { return j; });
    for (const auto& j : raw) {
        const auto id = j.at("problem_id").get<std::string>();
        Row r{j.value("attempt_idx", std::size_t{0}), j.at("reward").get<double>(), std::nullopt, std::nullopt};
        // a scalar is a whole-sequence log-prob, an array is per token
        auto logp = [](const json& v) {
            return v.is_number() ? std::vector<double>{v.get<double>()} : v.get<std::vector<double>>();
        };
        if (j.contains("logp_new")) r.logp_new = logp(j["logp_new"]);
        if (j.contains("logp_old")) r.logp_old = logp(j["logp_old"]);
        if (!groups.count(id)) order.push_back(id);
        groups[id].push_back(std::move(r));
    }
    std::string adv_csv = "problem_id,attempt_idx,reward,advantage,ratio,clipped\n";
    std::string grp_csv = "problem_id,K,correct,w_plus,w_minus,loss\n";
    double loss_sum = 0.0;
    std::size_t loss_groups = 0;
    for (const auto& id : order) {
        auto rows = groups[id];
        std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.attempt < b.attempt; });
        grpo::RolloutGroup g;
        bool have_logp = true;
        for (const auto& r : rows) {
            g.rewards.push_back(r.reward);
            have_logp = have_logp && r.logp_new && r.logp_old;
        }
        const auto adv = grpo::group_advantages(g.rewards);
        std::optional<grpo::LossResult> loss;
        if (have_logp) {
            for (const auto& r : rows) {
                g.logp_new.push_back(*r.logp_new);
                g.logp_old.push_back(*r.logp_old);
            }
            loss = grpo::grpo_loss(g, clip, mode);
            loss_sum += loss->loss;
            ++loss_groups;
        }
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const bool seq = loss && mode == grpo::LossMode::Sequence;
            adv_csv += fmt::format("{},{},{},{:.17g},{},{}\n", csv_field(id), rows[i].attempt, rows[i].reward, adv[i],
                                   seq ? fmt::format("{:.17g}", loss->ratios[i]) : "",
                                   seq ? (loss->clipped[i] ? "1" : "0") : "");
        }
        const bool binary = std::all_of(g.rewards.begin(), g.rewards.end(), [](double r) { return r == 0.0 || r == 1.0; });
        std::string wp, wm, correct;
        if (binary) {
            const auto w = grpo::binary_weights(g.rewards);
            wp = fmt::format("{:.17g}", w.w_plus);
            wm = fmt::format("{:.17g}", w.w_minus);
            correct = std::to_string(w.correct);
        }
        grp_csv += fmt::format("{},{},{},{},{},{}\n", csv_field(id), rows.size(), correct, wp, wm,
                               loss ? fmt::format("{:.17g}", loss->loss) : "");
    }
    ctx.write("advantages.csv", adv_csv);
    ctx.write("groups.csv", grp_csv);
    json summary = {{"groups", order.size()}, {"mode", mode_name}, {"eps_low", eps_low}, {"eps_high", eps_high}};
    summary["mean_loss"] = loss_groups ? json(loss_sum / static_cast<double>(loss_groups)) : json(nullptr);
    ctx.write_json("summary.json", summary);
    ctx.out() << fmt::format("{} groups", order.size());
    if (loss_groups) ctx.out() << fmt::format(", mean {} loss {:.6g}", mode_name, loss_sum / static_cast<double>(loss_groups));
    ctx.out() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze-cot

int cmd_analyze_cot(Context& ctx, const std::string& dataset, const std::string& rollouts_path,
                    const std::string& analyzer, std::size_t threshold, const std::string& patterns_path) {
    ctx.check();
    require_file(dataset, "--dataset");
    require_file(rollouts_path, "--rollouts");
    if (!patterns_path.empty()) require_file(patterns_path, "--patterns");
    const auto patterns = patterns_path.empty() ? PatternSet::defaults() : PatternSet::from_file(patterns_path);
    ctx.begin({{"prompt_versions", ctx.prompts().versions()}});

    const auto ds = load_dataset(dataset);
    const auto index = index_of(ds.records);
    auto rollouts = load_rollouts(rollouts_path);
    cot::annotate_backtracking(rollouts, patterns, ctx.common.markers);
    cot::AnalyzerConfig cfg;
    cfg.model_tag = analyzer;

    std::vector<std::size_t> incorrect;
    std::vector<std::string> problem_ids;
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
        if (rollouts[i].reward != 0) continue;
        if (!index.count(rollouts[i].problem_id)) throw Error("rollout for unknown problem '" + rollouts[i].problem_id + "'");
        incorrect.push_back(i);
        if (std::find(problem_ids.begin(), problem_ids.end(), rollouts[i].problem_id) == problem_ids.end())
            problem_ids.push_back(rollouts[i].problem_id);
    }

    std::vector<std::optional<cot::GoldenSteps>> golden(problem_ids.size());
    std::vector<std::string> golden_errors(problem_ids.size());
    VerificationPool pool(ctx.common.workers);
    pool.for_each(problem_ids.size(), [&](std::size_t i) {
        try {
            golden[i] = cot::decompose_golden(index.at(problem_ids[i])->solution, ctx.gateway(), ctx.prompts(), cfg);
        } catch (const Error& e) {
            golden_errors[i] = e.what();
        }
    });
    std::map<std::string, std::size_t> golden_at;
    for (std::size_t i = 0; i < problem_ids.size(); ++i) golden_at[problem_ids[i]] = i;

    std::vector<std::optional<cot::AttemptErrorReport>> reports(incorrect.size());
    std::vector<std::string> errors(incorrect.size());
    pool.for_each(incorrect.size(), [&](std::size_t n) {
        const auto& r = rollouts[incorrect[n]];
        const auto g = golden_at.at(r.problem_id);
        if (!golden[g]) {
            errors[n] = "golden decomposition failed: " + golden_errors[g];
            return;
        }
        try {
            reports[n] = cot::analyze_rollout(*index.at(r.problem_id), r, *golden[g], ctx.gateway(), ctx.prompts(), cfg,
                                              threshold);
        } catch (const Error& e) {
            errors[n] = e.what();
        }
    });

    std::vector<cot::AttemptErrorReport> ok;
    std::vector<json> failures;
    for (std::size_t n = 0; n < incorrect.size(); ++n) {
        if (reports[n]) {
            ok.push_back(*reports[n]);
        } else {
            const auto& r = rollouts[incorrect[n]];
            failures.push_back({{"problem_id", r.problem_id}, {"attempt_idx", r.attempt_idx}, {"error", errors[n]}});
        }
    }
    std::vector<json> golden_rows;
    for (std::size_t i = 0; i < problem_ids.size(); ++i) {
        json steps = json::array();
        if (golden[i])
            for (const auto& s : golden[i]->steps) steps.push_back({{"index", s.index}, {"first_line", s.first_line}, {"last_line", s.last_line}});
        golden_rows.push_back({{"problem_id", problem_ids[i]}, {"steps", steps}});
    }
    cot::save_reports(ok, ctx.path("reports.jsonl"));
    ctx.write_jsonl("failures.jsonl", failures);
    ctx.write_jsonl("golden_steps.jsonl", golden_rows);
    save_rollouts(rollouts, ctx.path("rollouts_annotated.jsonl"));
    if (!incorrect.empty()) ctx.write("frequencies.csv", cot::frequency_csv(cot::aggregate_frequencies(ok, incorrect.size())));

    json stats = json::object();
    if (!rollouts.empty()) {
        const auto ts = cot::trace_stats(rollouts);
        auto means = [](const cot::ConditionalMeans& m) {
            return json{{"rollouts", m.rollouts}, {"mean_tokens", m.mean_tokens}, {"mean_backtracks", m.mean_backtracks}};
        };
        stats["overall"] = means(ts.overall);
        stats["correct"] = ts.correct ? means(*ts.correct) : json(nullptr);
        stats["incorrect"] = ts.incorrect ? means(*ts.incorrect) : json(nullptr);
        std::vector<double> tokens, backtracks;
        for (const auto& r : rollouts) {
            tokens.push_back(static_cast<double>(r.token_count));
            backtracks.push_back(static_cast<double>(*r.backtrack_count));
        }
        try {
            stats["pearson_tokens_backtracks"] = cot::pearson(tokens, backtracks);
        } catch (const ConfigError&) {
            stats["pearson_tokens_backtracks"] = nullptr;
        }
    }
    ctx.write_json("trace_stats.json", stats);
    ctx.out() << fmt::format("{} incorrect rollouts analyzed, {} failed\n", ok.size(), failures.size());
    if (!incorrect.empty()) ctx.out() << cot::frequency_csv(cot::aggregate_frequencies(ok, incorrect.size()));
    return failures.empty() ? kExitOk : kExitDomain;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Verifiable physics problem curation, evaluation and error analysis", "vtp"};
    app.require_subcommand(1);
    Common common;

    GenerationFlags gen, cur;
    auto* generate = app.add_subcommand("generate", "Generate problem drafts");
    add_common(generate, common, true);
    add_generation(generate, gen);

    auto* curate = app.add_subcommand("curate", "Generate, verify, grade and gate new problems");
    add_common(curate, common, true);
    add_marker_flags(curate, common);
    add_generation(curate, cur);
    curate->add_option("--grader-models", cur.graders, "Grader model tags, cycled over report slots")->capture_default_str();
    curate->add_option("--solver-model", cur.solver, "Frontier solver model tag")->capture_default_str();

    std::string grade_dataset;
    std::vector<std::string> grade_models = {"grader-a", "grader-a", "grader-b"};
    auto* grade = app.add_subcommand("grade", "Grade existing problems and apply the quality gate");
    add_common(grade, common, true);
    grade->add_option("--dataset", grade_dataset, "Problem dataset")->required();
    grade->add_option("--grader-models", grade_models, "Grader model tags")->capture_default_str();

    std::string verify_dataset;
    auto* verify = app.add_subcommand("verify-golden", "Check that every golden program passes its own tests");
    add_common(verify, common, false);
    verify->add_option("--dataset", verify_dataset, "Problem dataset")->required();

    EvalFlags ev;
    auto* evaluate = app.add_subcommand("evaluate", "Score responses and aggregate Succ and Bo_k");
    add_common(evaluate, common, true);
    add_marker_flags(evaluate, common);
    evaluate->add_option("--dataset", ev.dataset, "Problem dataset");
    evaluate->add_option("--responses", ev.responses, "Responses or rollout log");
    evaluate->add_option("--k", ev.k, "k for Bo_k (default 5, or the --solve count)");
    evaluate->add_flag("--unbiased", ev.unbiased, "Also report the unbiased pass@k estimator");
    evaluate->add_flag("--no-rescore", ev.no_rescore, "Trust recorded rewards instead of re-running code");
    evaluate->add_option("--solve", ev.solve, "Sample this many attempts per problem through the gateway");
    evaluate->add_option("--model", ev.model, "Solver model tag for --solve")->capture_default_str();
    evaluate->add_option("--temperature", ev.temperature, "Sampling temperature for --solve")->capture_default_str();
    evaluate->add_option("--stage", ev.stage, "base, rl or sft")
        ->capture_default_str()
        ->check(CLI::IsMember({"base", "rl", "sft"}));

    std::string sft_dataset, teacher = "teacher";
    std::size_t sft_k = 5;
    double sft_temperature = 1.0;
    auto* sft = app.add_subcommand("sft-distill", "Rejection-sample verified teacher traces");
    add_common(sft, common, true);
    add_marker_flags(sft, common);
    sft->add_option("--dataset", sft_dataset, "Problem dataset")->required();
    sft->add_option("--k", sft_k, "Samples per problem")->capture_default_str();
    sft->add_option("--teacher", teacher, "Teacher model tag")->capture_default_str();
    sft->add_option("--temperature", sft_temperature, "Sampling temperature")->capture_default_str();

    std::string rewards_path, mode = "sequence";
    double eps_low = 0.2, eps_high = 0.28;
    auto* grpo_cmd = app.add_subcommand("grpo-advantages", "Group advantages and clipped loss from a rollout log");
    add_common(grpo_cmd, common, false);
    grpo_cmd->add_option("--rewards", rewards_path, "Rollout log with rewards and optional log-probs")->required();
    grpo_cmd->add_option("--mode", mode, "sequence or token")
        ->capture_default_str()
        ->check(CLI::IsMember({"sequence", "token"}));
    grpo_cmd->add_option("--eps-low", eps_low, "Lower clip width")->capture_default_str();
    grpo_cmd->add_option("--eps-high", eps_high, "Upper clip width")->capture_default_str();

    std::string cot_dataset, cot_rollouts, analyzer = "analyzer", patterns;
    std::size_t threshold = cot::kDefaultDedupThreshold;
    auto* analyze = app.add_subcommand("analyze-cot", "Classify reasoning errors in incorrect rollouts");
    add_common(analyze, common, true);
    add_marker_flags(analyze, common);
    analyze->add_option("--dataset", cot_dataset, "Problem dataset")->required();
    analyze->add_option("--rollouts", cot_rollouts, "Scored rollout log")->required();
    analyze->add_option("--analyzer", analyzer, "Analyzer model tag")->capture_default_str();
    analyze->add_option("--dedup-threshold", threshold, "Approximate token count above which traces are condensed")
        ->capture_default_str();
    analyze->add_option("--patterns", patterns, "Backtracking pattern file");

    ReportFlags rep;
    auto* report = app.add_subcommand("report", "Tables and plot-ready series from earlier artifacts");
    add_common(report, common, false);
    report->add_option("--dataset", rep.dataset, "Problem dataset");
    report->add_option("--rollouts", rep.rollouts, "Scored rollout log");
    report->add_option("--k", rep.k, "k for Bo_k")->capture_default_str();
    report->add_flag("--by-level", rep.by_level, "Accuracy per domain level");
    report->add_flag("--by-tag", rep.by_tag, "Accuracy per dataset tag");
    report->add_option("--agreement", rep.agreement, "NAME=PATH report sets to compare");
    report->add_option("--reports", rep.reports, "Error reports for a frequency table");
    report->add_option("--incorrect", rep.incorrect, "Incorrect rollout count for --reports (default: report count)");
    report->add_option("--reduction", rep.reduction, "BEFORE AFTER incorrect counts")->expected(2);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, er;
        const int code = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return code == 0 ? kExitOk : kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    Context ctx(common, sub, out);
    bool started = false;
    try {
        auto guard = [&](auto&& fn) {
            // Anything thrown before the output directory exists is a usage problem.
            try {
                return fn();
            } catch (...) {
                started = fs::exists(fs::path(common.out) / "config.json");
                throw;
            }
        };
        if (sub == generate) return guard([&] { return cmd_generate(ctx, gen); });
        if (sub == curate) return guard([&] { return cmd_curate(ctx, cur); });
        if (sub == grade) return guard([&] { return cmd_grade(ctx, grade_dataset, grade_models); });
        if (sub == verify) return guard([&] { return cmd_verify_golden(ctx, verify_dataset); });
        if (sub == evaluate) return guard([&] { return cmd_evaluate(ctx, ev); });
        if (sub == sft) return guard([&] { return cmd_sft_distill(ctx, sft_dataset, sft_k, teacher, sft_temperature); });
        if (sub == grpo_cmd) return guard([&] { return cmd_grpo(ctx, rewards_path, mode, eps_low, eps_high); });
        if (sub == analyze)
            return guard([&] { return cmd_analyze_cot(ctx, cot_dataset, cot_rollouts, analyzer, threshold, patterns); });
        if (sub == report) return guard([&] { return cmd_report(ctx, rep); });
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return started ? kExitDomain : kExitUsage;
    }
    err << "unknown command\n";
    return kExitUsage;
}

}  // namespace vtp::cli
