#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vtp/error.hpp"
#include "vtp/value.hpp"

namespace vtp::guest {

/// An exception raised by guest code (or by the interpreter on its behalf), rendered as
/// `TypeName: message`.
class GuestError : public Error {
public:
    GuestError(std::string type, std::string message)
        : Error(type + ": " + message), type_(std::move(type)), message_(std::move(message)) {}
    const std::string& type() const noexcept { return type_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string type_;
    std::string message_;
};

/// Guest syntax outside the supported subset, or malformed source.
class GuestSyntaxError : public GuestError {
public:
    GuestSyntaxError(std::string message, std::size_t line)
        : GuestError("SyntaxError", "line " + std::to_string(line) + ": " + std::move(message)) {}
};

/// The wall-clock budget was exhausted.
class GuestTimeout : public Error {
public:
    GuestTimeout() : Error("guest execution exceeded its time budget") {}
};

struct Runtime;

/// In-process interpreter for a restricted subset of the guest language (Python 3):
/// functions, lambdas, conditionals, loops, comprehensions, try/except, tuples/lists/dicts,
/// numeric tower int/float/complex with Python semantics, and the `math`, `cmath`, `numpy`
/// (scalar subset) and `typing` modules. Each instance is one isolated namespace.
class Interpreter {
public:
    Interpreter();
    ~Interpreter();
    Interpreter(const Interpreter&) = delete;
    Interpreter& operator=(const Interpreter&) = delete;

    /// Execution deadline applied to subsequent load/call operations.
    void set_deadline(std::optional<std::chrono::steady_clock::time_point> deadline);

    /// Parses and executes module-level code. Throws GuestSyntaxError, GuestError, GuestTimeout.
    void load(std::string_view source);

    bool has_function(const std::string& name) const;

    /// Calls a module-level function and converts the result to a Value.
    Value call(const std::string& function, const std::vector<Value>& args);

private:
    std::unique_ptr<Runtime> rt_;
};

}  // namespace vtp::guest
