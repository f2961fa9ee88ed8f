#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace vtp {

struct Value;
using Tuple = std::vector<Value>;

/// A concrete guest-program value: function inputs, golden outputs, candidate outputs.
struct Value {
    using Storage = std::variant<std::monostate, bool, std::int64_t, double, std::complex<double>,
                                 std::string, Tuple>;
    Storage data;

    Value() = default;
    Value(bool b) : data(b) {}
    Value(int i) : data(static_cast<std::int64_t>(i)) {}
    Value(std::int64_t i) : data(i) {}
    Value(double d) : data(d) {}
    Value(std::complex<double> c) : data(c) {}
    Value(std::string s) : data(std::move(s)) {}
    Value(const char* s) : data(std::string(s)) {}
    Value(Tuple t) : data(std::move(t)) {}

    bool is_none() const { return std::holds_alternative<std::monostate>(data); }
    bool is_bool() const { return std::holds_alternative<bool>(data); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(data); }
    bool is_real() const { return std::holds_alternative<double>(data); }
    bool is_complex() const { return std::holds_alternative<std::complex<double>>(data); }
    bool is_string() const { return std::holds_alternative<std::string>(data); }
    bool is_tuple() const { return std::holds_alternative<Tuple>(data); }
    /// Integer or real (booleans excluded).
    bool is_number() const { return is_int() || is_real(); }

    bool as_bool() const { return std::get<bool>(data); }
    std::int64_t as_int() const { return std::get<std::int64_t>(data); }
    double as_real() const { return std::get<double>(data); }
    std::complex<double> as_complex() const { return std::get<std::complex<double>>(data); }
    const std::string& as_string() const { return std::get<std::string>(data); }
    const Tuple& as_tuple() const { return std::get<Tuple>(data); }

    /// Numeric view of an integer or real.
    double to_double() const { return is_int() ? static_cast<double>(as_int()) : as_real(); }

    friend bool operator==(const Value& a, const Value& b);
};

/// Declared kind of a parameter or return value.
struct ValueKind {
    enum class Tag { Real, Complex, Integer, Boolean, Categorical, Tuple };

    Tag tag = Tag::Real;
    std::vector<std::string> options;  // Categorical only
    std::vector<ValueKind> elements;   // Tuple only

    static ValueKind real() { return {Tag::Real, {}, {}}; }
    static ValueKind complex() { return {Tag::Complex, {}, {}}; }
    static ValueKind integer() { return {Tag::Integer, {}, {}}; }
    static ValueKind boolean() { return {Tag::Boolean, {}, {}}; }
    static ValueKind categorical(std::vector<std::string> opts) { return {Tag::Categorical, std::move(opts), {}}; }
    static ValueKind tuple(std::vector<ValueKind> elems) { return {Tag::Tuple, {}, std::move(elems)}; }

    friend bool operator==(const ValueKind&, const ValueKind&) = default;
};

using ReturnSpec = ValueKind;

std::string to_string(ValueKind::Tag tag);
std::string describe(const ValueKind& kind);

/// Human-readable rendering, Python-like (`(0.25, True)`, `'scalar'`).
std::string to_display(const Value& v);

/// Whether `v` is an admissible instance of `kind`. Integers are admitted for real and
/// complex kinds; categorical values must be one of the declared options when any are declared.
bool matches_kind(const Value& v, const ValueKind& kind);

/// Checks structural invariants of a kind: categorical option sets non-empty, tuple arity >= 1.
/// Returns an empty string when valid, otherwise the first problem found.
std::string kind_violation(const ValueKind& kind);

// Wire/document encoding.
//   real      -> JSON float (non-finite as {"float": "nan" | "inf" | "-inf"})
//   integer   -> JSON integer
//   boolean   -> JSON bool
//   complex   -> {"complex": [re, im]}
//   string    -> JSON string
//   tuple     -> JSON array
//   none      -> null
nlohmann::json value_to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);

nlohmann::json kind_to_json(const ValueKind& k);
ValueKind kind_from_json(const nlohmann::json& j);

}  // namespace vtp
