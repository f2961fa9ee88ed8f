#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vtp/error.hpp"
#include "vtp/problem_model.hpp"
#include "vtp/value.hpp"

namespace vtp {

struct ExecutionLimits {
    double wall_time = 20.0;                    // seconds, per program invocation
    std::size_t memory = 512ull * 1024 * 1024;  // bytes
    bool network_forbidden = true;              // always enforced; kept for reporting

    /// Throws ConfigError when a limit is non-positive.
    void validate() const;
};

/// Guest interpreter binary not found or not executable.
class InterpreterMissing : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// The driver produced output that does not follow the result protocol.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// True iff `expected` and `actual` agree under `policy`. When `declared` is given it decides
/// how the values are interpreted (e.g. an integer emitted for a real-valued return is
/// promoted); otherwise the expected value's own kind is used.
bool compare_values(const Value& expected, const Value& actual, const ComparisonPolicy& policy,
                    const ValueKind* declared = nullptr);

// ---------------------------------------------------------------------------
// Executors: run golden and candidate over the inputs and transport raw values.

struct ExecutionJob {
    std::string function_name;
    std::vector<std::vector<Value>> inputs;
    std::string golden_source;
    std::string candidate_source;
};

struct SideResult {
    std::optional<Value> value;
    std::optional<std::string> error;
    bool timeout = false;
};

struct RawCaseResult {
    SideResult golden;
    SideResult candidate;
};

struct RawRun {
    std::vector<RawCaseResult> cases;  // one per input, always
    std::string stderr_text;
    double elapsed = 0.0;
    bool timed_out = false;
};

class Executor {
public:
    virtual ~Executor() = default;
    virtual RawRun execute(const ExecutionJob& job, const ExecutionLimits& limits) = 0;
};

/// Runs both programs on the built-in guest interpreter, each in its own namespace.
class InProcessExecutor : public Executor {
public:
    RawRun execute(const ExecutionJob& job, const ExecutionLimits& limits) override;
};

struct ProcessExecutorConfig {
    std::vector<std::string> interpreter;  // e.g. {"python3"} or {"/usr/bin/python3", "-I"}
    std::filesystem::path driver;
    std::filesystem::path scratch_root = std::filesystem::temp_directory_path();
};

/// Spawns `interpreter driver manifest.json` in a fresh scratch directory with address-space,
/// core-dump and (best-effort) network restrictions, then parses the driver's line protocol.
class ProcessExecutor : public Executor {
public:
    /// Throws InterpreterMissing if the interpreter cannot be found.
    explicit ProcessExecutor(ProcessExecutorConfig config);
    RawRun execute(const ExecutionJob& job, const ExecutionLimits& limits) override;

private:
    ProcessExecutorConfig config_;
    std::string resolved_interpreter_;
};

/// Parses a driver stdout stream. `expected_cases` lines must be present unless `timed_out`,
/// in which case missing cases are marked as timeouts.
RawRun parse_driver_output(const std::string& stdout_text, std::size_t expected_cases, bool timed_out);

nlohmann::json driver_manifest(const ExecutionJob& job);

// ---------------------------------------------------------------------------

enum class Outcome { Pass, ValueMismatch, CandidateError, Timeout };
std::string to_string(Outcome);

struct TestOutcome {
    Outcome kind = Outcome::Pass;
    std::string message;  // candidate error text, when any
};

struct ExecutionReport {
    std::vector<TestOutcome> outcomes;
    std::vector<std::optional<Value>> golden_values;
    std::vector<std::optional<Value>> candidate_values;
    double elapsed = 0.0;
    std::string raw_stderr;
    bool timeout_retried = false;

    bool all_pass() const;
    std::size_t count(Outcome o) const;
};

nlohmann::json to_json(const ExecutionReport&);

/// The golden program raised on a test case: the record is defective.
class GoldenFailure : public Error {
public:
    GoldenFailure(std::string problem_id, std::size_t test_index, std::string message, ExecutionReport partial)
        : Error("golden program of '" + problem_id + "' failed on test " + std::to_string(test_index) + ": " + message),
          problem_id_(std::move(problem_id)),
          test_index_(test_index),
          partial_(std::move(partial)) {}
    const std::string& problem_id() const noexcept { return problem_id_; }
    std::size_t test_index() const noexcept { return test_index_; }
    const ExecutionReport& partial() const noexcept { return partial_; }

private:
    std::string problem_id_;
    std::size_t test_index_;
    ExecutionReport partial_;
};

/// Executes golden and candidate on every test case and compares on the host. Stored
/// `expected` values are ignored: golden values are recomputed on each run. A run that times
/// out is retried once and the report flagged.
ExecutionReport run_verification(const ProblemRecord& problem, const std::string& candidate,
                                 const ExecutionLimits& limits, Executor& executor);

/// Bounded pool running independent verification jobs.
class VerificationPool {
public:
    explicit VerificationPool(std::size_t workers);
    std::size_t workers() const { return workers_; }

    /// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions from fn propagate (first
    /// one wins) after all started tasks finish.
    void for_each(std::size_t n, const std::function<void(std::size_t)>& fn) const;

private:
    std::size_t workers_;
};

}  // namespace vtp
