#include "vtp/sandbox.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include "vtp/guest_interpreter.hpp"
#include "vtp/text_util.hpp"

namespace vtp {

void ExecutionLimits::validate() const {
    if (!(wall_time > 0.0)) throw ConfigError("wall_time must be positive");
    if (memory == 0) throw ConfigError("memory limit must be positive");
}

// ---------------------------------------------------------------------------
// Comparison

namespace {

bool close_real(double e, double a, const ComparisonPolicy& p) {
    if (std::isnan(e) || std::isnan(a)) return std::isnan(e) && std::isnan(a);
    if (e == a) return true;  // covers matching infinities
    if (std::isinf(e) || std::isinf(a)) return false;
    return std::abs(e - a) <= p.abs_tol + p.rel_tol * std::abs(e);
}

ValueKind inferred_kind(const Value& v) {
    if (v.is_bool()) return ValueKind::boolean();
    if (v.is_int()) return ValueKind::integer();
    if (v.is_real()) return ValueKind::real();
    if (v.is_complex()) return ValueKind::complex();
    if (v.is_string()) return ValueKind::categorical({});
    if (v.is_tuple()) {
        std::vector<ValueKind> elems;
        for (const auto& e : v.as_tuple()) elems.push_back(inferred_kind(e));
        return ValueKind::tuple(std::move(elems));
    }
    return ValueKind::real();
}

bool compare_as(const Value& e, const Value& a, const ComparisonPolicy& p, const ValueKind& k) {
    using Tag = ValueKind::Tag;
    switch (k.tag) {
        case Tag::Real: {
            auto admissible = [&](const Value& v) { return v.is_real() || (p.promote_integers && v.is_int()); };
            if (!admissible(e) || !admissible(a)) return false;
            return close_real(e.to_double(), a.to_double(), p);
        }
        case Tag::Complex: {
            auto admissible = [&](const Value& v) {
                return v.is_complex() || v.is_real() || (p.promote_integers && v.is_int());
            };
            if (!admissible(e) || !admissible(a)) return false;
            auto c = [](const Value& v) { return v.is_complex() ? v.as_complex() : std::complex<double>(v.to_double(), 0); };
            auto x = c(e), y = c(a);
            return close_real(x.real(), y.real(), p) && close_real(x.imag(), y.imag(), p);
        }
        case Tag::Integer: return e.is_int() && a.is_int() && e.as_int() == a.as_int();
        case Tag::Boolean: return e.is_bool() && a.is_bool() && e.as_bool() == a.as_bool();
        case Tag::Categorical:
            return e.is_string() && a.is_string() && text::trim(e.as_string()) == text::trim(a.as_string());
        case Tag::Tuple: {
            if (!e.is_tuple() || !a.is_tuple()) return false;
            const auto& x = e.as_tuple();
            const auto& y = a.as_tuple();
            if (x.size() != y.size() || (!k.elements.empty() && k.elements.size() != x.size())) return false;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const ValueKind ek = k.elements.empty() ? inferred_kind(x[i]) : k.elements[i];
                if (!compare_as(x[i], y[i], p, ek)) return false;
            }
            return true;
        }
    }
    return false;
}

}  // namespace

bool compare_values(const Value& expected, const Value& actual, const ComparisonPolicy& policy,
                    const ValueKind* declared) {
    if (declared) return compare_as(expected, actual, policy, *declared);
    ValueKind k = inferred_kind(expected);
    // Without a declaration an integer expectation still accepts a real under promotion.
    if (k.tag == ValueKind::Tag::Integer && actual.is_real() && policy.promote_integers) k = ValueKind::real();
    if (expected.is_none()) return actual.is_none();
    return compare_as(expected, actual, policy, k);
}

// ---------------------------------------------------------------------------
// In-process executor

RawRun InProcessExecutor::execute(const ExecutionJob& job, const ExecutionLimits& limits) {
    limits.validate();
    const auto start = std::chrono::steady_clock::now();
    const auto deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                      std::chrono::duration<double>(limits.wall_time));
    RawRun run;
    run.cases.resize(job.inputs.size());

    struct Side {
        guest::Interpreter interp;
        std::optional<std::string> load_error;
        bool timed_out = false;
    };
    auto prepare = [&](Side& s, const std::string& source) {
        s.interp.set_deadline(deadline);
        try {
            s.interp.load(source);
            if (!s.interp.has_function(job.function_name)) {
                s.load_error = "NameError: name '" + job.function_name + "' is not defined";
            }
        } catch (const guest::GuestError& e) {
            s.load_error = e.what();
        } catch (const guest::GuestTimeout&) {
            s.timed_out = true;
        } catch (const std::bad_alloc&) {
            s.load_error = "MemoryError";
        }
    };
    Side golden, candidate;
    prepare(golden, job.golden_source);
    prepare(candidate, job.candidate_source);

    auto invoke = [&](Side& s, const std::vector<Value>& args, SideResult& out) {
        if (s.timed_out) {
            out.timeout = true;
            return;
        }
        if (s.load_error) {
            out.error = s.load_error;
            return;
        }
        try {
            out.value = s.interp.call(job.function_name, args);
        } catch (const guest::GuestError& e) {
            out.error = e.what();
        } catch (const guest::GuestTimeout&) {
            s.timed_out = true;
            out.timeout = true;
        } catch (const std::bad_alloc&) {
            out.error = "MemoryError";
        }
    };
    for (std::size_t i = 0; i < job.inputs.size(); ++i) {
        invoke(golden, job.inputs[i], run.cases[i].golden);
        invoke(candidate, job.inputs[i], run.cases[i].candidate);
    }
    run.timed_out = golden.timed_out || candidate.timed_out;
    run.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return run;
}

// ---------------------------------------------------------------------------
// Driver protocol

nlohmann::json driver_manifest(const ExecutionJob& job) {
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& row : job.inputs) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& v : row) r.push_back(value_to_json(v));
        inputs.push_back(std::move(r));
    }
    return {{"function_name", job.function_name},
            {"test_inputs", std::move(inputs)},
            {"golden_source", job.golden_source},
            {"candidate_source", job.candidate_source}};
}

namespace {

SideResult parse_side(const nlohmann::json& j, const char* which, std::size_t line) {
    if (!j.is_object()) throw ProtocolError("line " + std::to_string(line) + ": '" + which + "' must be an object");
    SideResult r;
    if (j.contains("value")) {
        try {
            r.value = value_from_json(j.at("value"));
        } catch (const std::exception& e) {
            throw ProtocolError("line " + std::to_string(line) + ": undecodable " + which + " value: " + e.what());
        }
    } else if (j.contains("error") && j.at("error").is_string()) {
        r.error = j.at("error").get<std::string>();
    } else {
        throw ProtocolError("line " + std::to_string(line) + ": '" + which + "' has neither value nor error");
    }
    return r;
}

}  // namespace

RawRun parse_driver_output(const std::string& stdout_text, std::size_t expected_cases, bool timed_out) {
    RawRun run;
    run.cases.resize(expected_cases);
    run.timed_out = timed_out;
    std::vector<bool> seen(expected_cases, false);
    bool summary = false;
    const auto ls = text::lines(stdout_text);
    for (std::size_t li = 0; li < ls.size(); ++li) {
        const auto t = text::trim(ls[li].text);
        if (t.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(t);
        } catch (const nlohmann::json::parse_error&) {
            // A killed driver may leave a torn final line.
            if (timed_out && li + 1 == ls.size()) break;
            throw ProtocolError("line " + std::to_string(li + 1) + ": not a structured document");
        }
        if (!j.is_object()) throw ProtocolError("line " + std::to_string(li + 1) + ": expected an object");
        if (j.contains("summary")) {
            summary = true;
            continue;
        }
        if (!j.contains("index") || !j.at("index").is_number_unsigned()) {
            throw ProtocolError("line " + std::to_string(li + 1) + ": missing index");
        }
        const auto idx = j.at("index").get<std::size_t>();
        if (idx >= expected_cases) throw ProtocolError("line " + std::to_string(li + 1) + ": index out of range");
        if (seen[idx]) throw ProtocolError("line " + std::to_string(li + 1) + ": duplicate index");
        if (!j.contains("golden") || !j.contains("candidate")) {
            throw ProtocolError("line " + std::to_string(li + 1) + ": missing golden/candidate result");
        }
        run.cases[idx].golden = parse_side(j.at("golden"), "golden", li + 1);
        run.cases[idx].candidate = parse_side(j.at("candidate"), "candidate", li + 1);
        seen[idx] = true;
    }
    for (std::size_t i = 0; i < expected_cases; ++i) {
        if (seen[i]) continue;
        if (!timed_out) throw ProtocolError("no result for test case " + std::to_string(i));
        run.cases[i].golden.timeout = true;
        run.cases[i].candidate.timeout = true;
    }
    if (!timed_out && !summary) throw ProtocolError("missing summary line");
    return run;
}

// ---------------------------------------------------------------------------
// Process executor

namespace {

std::string resolve_executable(const std::string& cmd) {
    auto executable = [](const std::filesystem::path& p) {
        struct stat st {};
        return ::stat(p.c_str(), &st) == 0 && S_ISREG(st.st_mode) && ::access(p.c_str(), X_OK) == 0;
    };
    if (cmd.find('/') != std::string::npos) return executable(cmd) ? cmd : std::string();
    const char* path = std::getenv("PATH");
    if (!path) return {};
    for (const auto& dir : text::split(path, ':')) {
        if (dir.empty()) continue;
        auto candidate = std::filesystem::path(dir) / cmd;
        if (executable(candidate)) return candidate.string();
    }
    return {};
}

struct Fd {
    int fd = -1;
    ~Fd() { reset(); }
    void reset() {
        if (fd >= 0) ::close(fd);
        fd = -1;
    }
};

}  // namespace

ProcessExecutor::ProcessExecutor(ProcessExecutorConfig config) : config_(std::move(config)) {
    if (config_.interpreter.empty()) throw InterpreterMissing("no guest interpreter command configured");
    resolved_interpreter_ = resolve_executable(config_.interpreter.front());
    if (resolved_interpreter_.empty()) {
        throw InterpreterMissing("guest interpreter '" + config_.interpreter.front() + "' not found or not executable");
    }
    if (!std::filesystem::exists(config_.driver)) {
        throw ConfigError("driver script not found: " + config_.driver.string());
    }
}

RawRun ProcessExecutor::execute(const ExecutionJob& job, const ExecutionLimits& limits) {
    limits.validate();
    const auto root = config_.scratch_root.empty() ? std::filesystem::temp_directory_path()
                                                   : std::filesystem::absolute(config_.scratch_root);
    std::string tmpl = (root / "vtp-sandbox-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw Error(std::string("cannot create scratch directory: ") + std::strerror(errno));
    const std::filesystem::path scratch = tmpl;
    struct Cleanup {
        std::filesystem::path p;
        ~Cleanup() {
            std::error_code ec;
            std::filesystem::remove_all(p, ec);
        }
    } cleanup{scratch};

    const auto manifest_path = scratch / "manifest.json";
    {
        std::ofstream out(manifest_path);
        out << driver_manifest(job).dump();
        if (!out) throw Error("cannot write driver manifest");
    }

    // argv is built before fork: the child may only make async-signal-safe calls.
    std::vector<std::string> args = config_.interpreter;
    args.front() = resolved_interpreter_;
    args.push_back(std::filesystem::absolute(config_.driver).string());
    args.push_back(manifest_path.string());
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    const std::string scratch_str = scratch.string();

    int out_pipe[2], err_pipe[2];
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) throw Error("pipe failed");
    if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        throw Error("pipe failed");
    }
    Fd out_r{out_pipe[0]}, out_w{out_pipe[1]}, err_r{err_pipe[0]}, err_w{err_pipe[1]};

    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) throw Error("fork failed");
    if (pid == 0) {
        ::setpgid(0, 0);
        if (limits.network_forbidden) (void)::unshare(CLONE_NEWNET);  // best effort; needs privileges
        struct rlimit as {
            static_cast<rlim_t>(limits.memory), static_cast<rlim_t>(limits.memory)
        };
        ::setrlimit(RLIMIT_AS, &as);
        struct rlimit core {
            0, 0
        };
        ::setrlimit(RLIMIT_CORE, &core);
        if (::chdir(scratch_str.c_str()) != 0) ::_exit(126);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        ::execv(argv[0], argv.data());
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    out_w.reset();
    err_w.reset();

    const auto deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                      std::chrono::duration<double>(limits.wall_time));
    std::string out_text, err_text;
    bool timed_out = false;
    char buf[65536];
    while (out_r.fd >= 0 || err_r.fd >= 0) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            timed_out = true;
            break;
        }
        const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
        pollfd fds[2];
        nfds_t nf = 0;
        Fd* owners[2];
        std::string* sinks[2];
        if (out_r.fd >= 0) {
            fds[nf] = {out_r.fd, POLLIN, 0};
            owners[nf] = &out_r;
            sinks[nf++] = &out_text;
        }
        if (err_r.fd >= 0) {
            fds[nf] = {err_r.fd, POLLIN, 0};
            owners[nf] = &err_r;
            sinks[nf++] = &err_text;
        }
        const int rc = ::poll(fds, nf, static_cast<int>(std::min<long long>(wait_ms, 1000)));
        if (rc < 0 && errno != EINTR) break;
        for (nfds_t i = 0; i < nf && rc > 0; ++i) {
            if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            const ssize_t got = ::read(fds[i].fd, buf, sizeof(buf));
            if (got > 0) {
                sinks[i]->append(buf, static_cast<std::size_t>(got));
            } else if (got == 0 || (errno != EINTR && errno != EAGAIN)) {
                owners[i]->reset();
            }
        }
    }
    if (timed_out) ::kill(-pid, SIGKILL);
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    // Drain whatever the killed process left in the pipes.
    for (auto* pr : {&out_r, &err_r}) {
        if (pr->fd < 0) continue;
        ::fcntl(pr->fd, F_SETFL, O_NONBLOCK);
        ssize_t got;
        while ((got = ::read(pr->fd, buf, sizeof(buf))) > 0) (pr == &out_r ? out_text : err_text).append(buf, static_cast<std::size_t>(got));
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!timed_out) {
        if (WIFEXITED(status) && WEXITSTATUS(status) == 127 && out_text.empty()) {
            throw InterpreterMissing("guest interpreter could not be executed: " + resolved_interpreter_);
        }
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
            std::string why = WIFEXITED(status) ? "exit code " + std::to_string(WEXITSTATUS(status))
                                                : "signal " + std::to_string(WTERMSIG(status));
            throw ProtocolError("driver failed (" + why + "): " + err_text.substr(0, 2000));
        }
    }
    RawRun run = parse_driver_output(out_text, job.inputs.size(), timed_out);
    run.stderr_text = std::move(err_text);
    run.elapsed = elapsed;
    return run;
}

// ---------------------------------------------------------------------------
// Verification

std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::Pass: return "pass";
        case Outcome::ValueMismatch: return "value_mismatch";
        case Outcome::CandidateError: return "candidate_error";
        case Outcome::Timeout: return "timeout";
    }
    return "?";
}

bool ExecutionReport::all_pass() const {
    return !outcomes.empty() &&
           std::all_of(outcomes.begin(), outcomes.end(), [](const TestOutcome& t) { return t.kind == Outcome::Pass; });
}

std::size_t ExecutionReport::count(Outcome o) const {
    return static_cast<std::size_t>(
        std::count_if(outcomes.begin(), outcomes.end(), [o](const TestOutcome& t) { return t.kind == o; }));
}

nlohmann::json to_json(const ExecutionReport& r) {
    nlohmann::json outcomes = nlohmann::json::array();
    for (std::size_t i = 0; i < r.outcomes.size(); ++i) {
        nlohmann::json o{{"outcome", to_string(r.outcomes[i].kind)}};
        if (!r.outcomes[i].message.empty()) o["message"] = r.outcomes[i].message;
        o["golden"] = r.golden_values[i] ? value_to_json(*r.golden_values[i]) : nlohmann::json(nullptr);
        o["candidate"] = r.candidate_values[i] ? value_to_json(*r.candidate_values[i]) : nlohmann::json(nullptr);
        outcomes.push_back(std::move(o));
    }
    return {{"outcomes", std::move(outcomes)},
            {"all_pass", r.all_pass()},
            {"elapsed", r.elapsed},
            {"timeout_retried", r.timeout_retried},
            {"raw_stderr", r.raw_stderr}};
}

ExecutionReport run_verification(const ProblemRecord& problem, const std::string& candidate,
                                 const ExecutionLimits& limits, Executor& executor) {
    if (text::is_blank(candidate)) throw ConfigError("candidate program is blank");
    ExecutionJob job;
    job.function_name = problem.answer_requirements.name;
    job.golden_source = problem.golden_program;
    job.candidate_source = candidate;
    for (const auto& tc : problem.test_cases) job.inputs.push_back(tc.inputs);

    RawRun raw = executor.execute(job, limits);
    ExecutionReport report;
    if (raw.timed_out) {
        raw = executor.execute(job, limits);
        report.timeout_retried = true;
    }
    report.elapsed = raw.elapsed;
    report.raw_stderr = raw.stderr_text;
    const auto& returns = problem.answer_requirements.returns;
    for (std::size_t i = 0; i < problem.test_cases.size(); ++i) {
        const auto& g = raw.cases[i].golden;
        const auto& c = raw.cases[i].candidate;
        report.golden_values.push_back(g.value);
        report.candidate_values.push_back(c.value);
        TestOutcome out;
        if (g.error) {
            report.outcomes.push_back({Outcome::CandidateError, "golden failed"});
            throw GoldenFailure(problem.id, i, *g.error, report);
        }
        if (g.value && !matches_kind(*g.value, returns)) {
            report.outcomes.push_back({Outcome::CandidateError, "golden failed"});
            throw GoldenFailure(problem.id, i,
                                "returned " + to_display(*g.value) + ", not a " + describe(returns), report);
        }
        if (g.timeout || c.timeout) {
            out.kind = Outcome::Timeout;
        } else if (c.error) {
            out.kind = Outcome::CandidateError;
            out.message = *c.error;
        } else if (c.value && compare_values(*g.value, *c.value, problem.test_cases[i].comparison, &returns)) {
            out.kind = Outcome::Pass;
        } else {
            out.kind = Outcome::ValueMismatch;
        }
        report.outcomes.push_back(std::move(out));
    }
    return report;
}

// ---------------------------------------------------------------------------

VerificationPool::VerificationPool(std::size_t workers) : workers_(std::max<std::size_t>(1, workers)) {}

void VerificationPool::for_each(std::size_t n, const std::function<void(std::size_t)>& fn) const {
    if (n == 0) return;
    const std::size_t threads = std::min(workers_, n);
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex mu;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first_error) first_error = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace vtp
