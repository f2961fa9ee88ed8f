// Restricted Python-subset interpreter used by the in-process executor.
//
// Pipeline: tokenize (with INDENT/DEDENT) -> recursive-descent parse into a small AST ->
// tree-walking evaluation. Semantics follow CPython for the supported subset; integers are
// 64-bit and overflow raises OverflowError instead of promoting to arbitrary precision.

#include "vtp/guest_interpreter.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <unordered_map>
#include <unordered_set>
#include <variant>

namespace vtp::guest {

namespace {

// ===========================================================================
// Values

struct GV;
struct Function;
struct Builtin;
struct Module;
struct RangeObj;
struct TypeObj;
struct ExcObj;

using List = std::vector<GV>;
using ListP = std::shared_ptr<List>;
using TupleP = std::shared_ptr<const List>;
struct Dict;
using DictP = std::shared_ptr<Dict>;
using FuncP = std::shared_ptr<Function>;
using BuiltinP = std::shared_ptr<Builtin>;
using ModuleP = std::shared_ptr<Module>;
using RangeP = std::shared_ptr<RangeObj>;
using TypeP = std::shared_ptr<TypeObj>;
using ExcP = std::shared_ptr<ExcObj>;

struct None {};

struct GV {
    std::variant<None, bool, std::int64_t, double, std::complex<double>, std::string, TupleP, ListP, DictP, FuncP,
                 BuiltinP, ModuleP, RangeP, TypeP, ExcP>
        v;

    GV() = default;
    template <typename T>
    GV(T x) : v(std::move(x)) {}
    GV(int x) : v(static_cast<std::int64_t>(x)) {}
    GV(const char* s) : v(std::string(s)) {}

    template <typename T>
    bool is() const { return std::holds_alternative<T>(v); }
    template <typename T>
    const T& as() const { return std::get<T>(v); }
};

struct Dict {
    std::vector<std::pair<GV, GV>> items;
};

struct RangeObj {
    std::int64_t start, stop, step;
    std::int64_t size() const {
        if (step > 0) return stop > start ? (stop - start + step - 1) / step : 0;
        return start > stop ? (start - stop - step - 1) / (-step) : 0;
    }
};

struct ExcObj {
    std::string type;
    std::string message;
};

using Args = std::vector<GV>;
using Kwargs = std::vector<std::pair<std::string, GV>>;
using NativeFn = std::function<GV(Runtime&, Args&, Kwargs&)>;

struct Builtin {
    std::string name;
    NativeFn fn;
};

struct TypeObj {
    std::string name;
    NativeFn ctor;
    bool is_exception = false;
    std::string parent;  // exception hierarchy
};

struct Module {
    std::string name;
    std::unordered_map<std::string, GV> attrs;
};

[[noreturn]] void raise(std::string type, std::string msg) { throw GuestError(std::move(type), std::move(msg)); }

// Container size cap; the in-process executor cannot apply an address-space limit.
constexpr std::int64_t kMaxElements = 10'000'000;

std::string type_name(const GV& x) {
    switch (x.v.index()) {
        case 0: return "NoneType";
        case 1: return "bool";
        case 2: return "int";
        case 3: return "float";
        case 4: return "complex";
        case 5: return "str";
        case 6: return "tuple";
        case 7: return "list";
        case 8: return "dict";
        case 9: return "function";
        case 10: return "builtin_function_or_method";
        case 11: return "module";
        case 12: return "range";
        case 13: return "type";
        case 14: return x.as<ExcP>()->type;
    }
    return "object";
}

std::string float_repr(double d) {
    if (std::isnan(d)) return "nan";
    if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), d);
    std::string s(buf, end);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::string repr(const GV& x);

std::string str_of(const GV& x) {
    if (x.is<std::string>()) return x.as<std::string>();
    if (x.is<ExcP>()) return x.as<ExcP>()->message;
    return repr(x);
}

std::string repr(const GV& x) {
    if (x.is<None>()) return "None";
    if (x.is<bool>()) return x.as<bool>() ? "True" : "False";
    if (x.is<std::int64_t>()) return std::to_string(x.as<std::int64_t>());
    if (x.is<double>()) return float_repr(x.as<double>());
    if (x.is<std::complex<double>>()) {
        auto c = x.as<std::complex<double>>();
        auto im = float_repr(std::abs(c.imag()));
        if (im.size() > 2 && im.substr(im.size() - 2) == ".0") im.resize(im.size() - 2);
        auto re = float_repr(c.real());
        if (re.size() > 2 && re.substr(re.size() - 2) == ".0") re.resize(re.size() - 2);
        if (c.real() == 0.0 && !std::signbit(c.real())) return (c.imag() < 0 ? "-" : "") + im + "j";
        return "(" + re + (c.imag() < 0 || std::signbit(c.imag()) ? "-" : "+") + im + "j)";
    }
    if (x.is<std::string>()) return "'" + x.as<std::string>() + "'";
    auto seq = [](const List& l, const char* open, const char* close, bool tuple) {
        std::string out = open;
        for (std::size_t i = 0; i < l.size(); ++i) {
            if (i) out += ", ";
            out += repr(l[i]);
        }
        if (tuple && l.size() == 1) out += ",";
        return out + close;
    };
    if (x.is<TupleP>()) return seq(*x.as<TupleP>(), "(", ")", true);
    if (x.is<ListP>()) return seq(*x.as<ListP>(), "[", "]", false);
    if (x.is<DictP>()) {
        std::string out = "{";
        bool first = true;
        for (const auto& [k, v] : x.as<DictP>()->items) {
            if (!first) out += ", ";
            first = false;
            out += repr(k) + ": " + repr(v);
        }
        return out + "}";
    }
    if (x.is<ExcP>()) return x.as<ExcP>()->type + "('" + x.as<ExcP>()->message + "')";
    return "<" + type_name(x) + ">";
}

bool is_numeric(const GV& x) { return x.is<bool>() || x.is<std::int64_t>() || x.is<double>(); }
bool is_intlike(const GV& x) { return x.is<bool>() || x.is<std::int64_t>(); }

std::int64_t to_int(const GV& x) {
    if (x.is<bool>()) return x.as<bool>() ? 1 : 0;
    return x.as<std::int64_t>();
}

double to_float(const GV& x) {
    if (x.is<double>()) return x.as<double>();
    if (is_intlike(x)) return static_cast<double>(to_int(x));
    raise("TypeError", "must be real number, not " + type_name(x));
}

std::complex<double> to_complex(const GV& x) {
    if (x.is<std::complex<double>>()) return x.as<std::complex<double>>();
    return {to_float(x), 0.0};
}

bool truthy(const GV& x) {
    switch (x.v.index()) {
        case 0: return false;
        case 1: return x.as<bool>();
        case 2: return x.as<std::int64_t>() != 0;
        case 3: return x.as<double>() != 0.0;
        case 4: return x.as<std::complex<double>>() != std::complex<double>(0, 0);
        case 5: return !x.as<std::string>().empty();
        case 6: return !x.as<TupleP>()->empty();
        case 7: return !x.as<ListP>()->empty();
        case 8: return !x.as<DictP>()->items.empty();
        case 12: return x.as<RangeP>()->size() > 0;
        default: return true;
    }
}

bool equal(const GV& a, const GV& b);

bool seq_equal(const List& a, const List& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!equal(a[i], b[i])) return false;
    }
    return true;
}

bool equal(const GV& a, const GV& b) {
    if (is_numeric(a) && is_numeric(b)) {
        if (is_intlike(a) && is_intlike(b)) return to_int(a) == to_int(b);
        return to_float(a) == to_float(b);
    }
    if ((a.is<std::complex<double>>() || is_numeric(a)) && (b.is<std::complex<double>>() || is_numeric(b))) {
        return to_complex(a) == to_complex(b);
    }
    if (a.is<None>() && b.is<None>()) return true;
    if (a.is<std::string>() && b.is<std::string>()) return a.as<std::string>() == b.as<std::string>();
    if (a.is<TupleP>() && b.is<TupleP>()) return seq_equal(*a.as<TupleP>(), *b.as<TupleP>());
    if (a.is<ListP>() && b.is<ListP>()) return seq_equal(*a.as<ListP>(), *b.as<ListP>());
    if (a.is<TypeP>() && b.is<TypeP>()) return a.as<TypeP>() == b.as<TypeP>();
    if (a.is<DictP>() && b.is<DictP>()) {
        const auto& x = a.as<DictP>()->items;
        const auto& y = b.as<DictP>()->items;
        if (x.size() != y.size()) return false;
        for (const auto& [k, v] : x) {
            bool found = false;
            for (const auto& [k2, v2] : y) {
                if (equal(k, k2)) {
                    found = equal(v, v2);
                    break;
                }
            }
            if (!found) return false;
        }
        return true;
    }
    return false;
}

/// -1, 0, 1 ordering for < > <= >=.
int compare_order(const GV& a, const GV& b) {
    if (is_numeric(a) && is_numeric(b)) {
        if (is_intlike(a) && is_intlike(b)) {
            auto x = to_int(a), y = to_int(b);
            return x < y ? -1 : (x > y ? 1 : 0);
        }
        double x = to_float(a), y = to_float(b);
        if (std::isnan(x) || std::isnan(y)) return 2;  // unordered
        return x < y ? -1 : (x > y ? 1 : 0);
    }
    if (a.is<std::string>() && b.is<std::string>()) {
        auto c = a.as<std::string>().compare(b.as<std::string>());
        return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    auto seq_cmp = [](const List& x, const List& y) {
        for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
            if (!equal(x[i], y[i])) return compare_order(x[i], y[i]);
        }
        return x.size() < y.size() ? -1 : (x.size() > y.size() ? 1 : 0);
    };
    if (a.is<TupleP>() && b.is<TupleP>()) return seq_cmp(*a.as<TupleP>(), *b.as<TupleP>());
    if (a.is<ListP>() && b.is<ListP>()) return seq_cmp(*a.as<ListP>(), *b.as<ListP>());
    raise("TypeError", "'<' not supported between instances of '" + type_name(a) + "' and '" + type_name(b) + "'");
}

GV make_tuple(List l) { return GV(TupleP(std::make_shared<const List>(std::move(l)))); }
GV make_list(List l) { return GV(ListP(std::make_shared<List>(std::move(l)))); }

// Checked 64-bit arithmetic.
std::int64_t checked_add(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_add_overflow(a, b, &r)) raise("OverflowError", "integer result exceeds 64 bits");
    return r;
}
std::int64_t checked_sub(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_sub_overflow(a, b, &r)) raise("OverflowError", "integer result exceeds 64 bits");
    return r;
}
std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_mul_overflow(a, b, &r)) raise("OverflowError", "integer result exceeds 64 bits");
    return r;
}

std::int64_t floordiv_int(std::int64_t a, std::int64_t b) {
    if (b == 0) raise("ZeroDivisionError", "integer division or modulo by zero");
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

std::int64_t mod_int(std::int64_t a, std::int64_t b) {
    if (b == 0) raise("ZeroDivisionError", "integer division or modulo by zero");
    std::int64_t r = a % b;
    if (r != 0 && ((r < 0) != (b < 0))) r += b;
    return r;
}

double mod_float(double a, double b) {
    if (b == 0.0) raise("ZeroDivisionError", "float modulo");
    double r = std::fmod(a, b);
    if (r != 0.0 && ((r < 0) != (b < 0))) r += b;
    return r;
}

GV power(const GV& a, const GV& b) {
    if (a.is<std::complex<double>>() || b.is<std::complex<double>>()) {
        auto x = to_complex(a), y = to_complex(b);
        if (x == std::complex<double>(0, 0)) {
            if (y == std::complex<double>(0, 0)) return std::complex<double>(1, 0);
            if (y.real() < 0 || y.imag() != 0) raise("ZeroDivisionError", "0.0 to a negative or complex power");
            return std::complex<double>(0, 0);
        }
        if (y.imag() == 0 && y.real() == std::round(y.real()) && std::abs(y.real()) <= 64) {
            // Integer exponents by repeated multiplication, matching CPython's exactness.
            auto n = static_cast<long>(y.real());
            std::complex<double> r(1, 0), base = n < 0 ? std::complex<double>(1, 0) / x : x;
            for (long i = 0; i < std::labs(n); ++i) r *= base;
            return r;
        }
        return std::pow(x, y);
    }
    if (is_intlike(a) && is_intlike(b)) {
        auto base = to_int(a), e = to_int(b);
        if (e < 0) {
            if (base == 0) raise("ZeroDivisionError", "0.0 cannot be raised to a negative power");
            return std::pow(static_cast<double>(base), static_cast<double>(e));
        }
        std::int64_t r = 1;
        while (e > 0) {
            if (e & 1) r = checked_mul(r, base);
            e >>= 1;
            if (e) base = checked_mul(base, base);
        }
        return r;
    }
    double x = to_float(a), y = to_float(b);
    if (x == 0.0 && y < 0) raise("ZeroDivisionError", "0.0 cannot be raised to a negative power");
    if (x < 0 && y != std::floor(y) && std::isfinite(y)) return std::pow(std::complex<double>(x, 0), std::complex<double>(y, 0));
    double r = std::pow(x, y);
    if (std::isinf(r) && std::isfinite(x) && std::isfinite(y)) raise("OverflowError", "(34, 'Numerical result out of range')");
    return r;
}

GV binary_op(const std::string& op, const GV& a, const GV& b) {
    // Sequence operations.
    if (op == "+") {
        if (a.is<std::string>() && b.is<std::string>()) return a.as<std::string>() + b.as<std::string>();
        if (a.is<ListP>() && b.is<ListP>()) {
            List l = *a.as<ListP>();
            l.insert(l.end(), b.as<ListP>()->begin(), b.as<ListP>()->end());
            return make_list(std::move(l));
        }
        if (a.is<TupleP>() && b.is<TupleP>()) {
            List l = *a.as<TupleP>();
            l.insert(l.end(), b.as<TupleP>()->begin(), b.as<TupleP>()->end());
            return make_tuple(std::move(l));
        }
    }
    if (op == "*") {
        auto repeat = [](const GV& seq, const GV& n) -> std::optional<GV> {
            if (!is_intlike(n)) return std::nullopt;
            auto k = std::max<std::int64_t>(0, to_int(n));
            const std::int64_t len = seq.is<std::string>() ? static_cast<std::int64_t>(seq.as<std::string>().size())
                                     : seq.is<ListP>()       ? static_cast<std::int64_t>(seq.as<ListP>()->size())
                                     : seq.is<TupleP>()      ? static_cast<std::int64_t>(seq.as<TupleP>()->size())
                                                             : 0;
            if (len > 0 && k > kMaxElements / len) raise("MemoryError", "sequence repetition exceeds the guest limit");
            if (seq.is<std::string>()) {
                std::string out;
                for (std::int64_t i = 0; i < k; ++i) out += seq.as<std::string>();
                return GV(out);
            }
            if (seq.is<ListP>() || seq.is<TupleP>()) {
                const List& src = seq.is<ListP>() ? *seq.as<ListP>() : *seq.as<TupleP>();
                List out;
                for (std::int64_t i = 0; i < k; ++i) out.insert(out.end(), src.begin(), src.end());
                return seq.is<ListP>() ? make_list(std::move(out)) : make_tuple(std::move(out));
            }
            return std::nullopt;
        };
        if (auto r = repeat(a, b)) return *r;
        if (auto r = repeat(b, a)) return *r;
    }
    if (op == "%" && a.is<std::string>()) raise("TypeError", "printf-style formatting is not supported");

    const bool cplx = a.is<std::complex<double>>() || b.is<std::complex<double>>();
    if (!(is_numeric(a) || a.is<std::complex<double>>()) || !(is_numeric(b) || b.is<std::complex<double>>())) {
        raise("TypeError", "unsupported operand type(s) for " + op + ": '" + type_name(a) + "' and '" + type_name(b) + "'");
    }
    if (op == "**") return power(a, b);
    if (cplx) {
        auto x = to_complex(a), y = to_complex(b);
        if (op == "+") return x + y;
        if (op == "-") return x - y;
        if (op == "*") return x * y;
        if (op == "/") {
            if (y == std::complex<double>(0, 0)) raise("ZeroDivisionError", "complex division by zero");
            return x / y;
        }
        raise("TypeError", "unsupported operand type(s) for " + op + ": complex");
    }
    if (is_intlike(a) && is_intlike(b)) {
        auto x = to_int(a), y = to_int(b);
        if (op == "+") return checked_add(x, y);
        if (op == "-") return checked_sub(x, y);
        if (op == "*") return checked_mul(x, y);
        if (op == "/") {
            if (y == 0) raise("ZeroDivisionError", "division by zero");
            return static_cast<double>(x) / static_cast<double>(y);
        }
        if (op == "//") return floordiv_int(x, y);
        if (op == "%") return mod_int(x, y);
    } else {
        double x = to_float(a), y = to_float(b);
        if (op == "+") return x + y;
        if (op == "-") return x - y;
        if (op == "*") return x * y;
        if (op == "/") {
            if (y == 0.0) raise("ZeroDivisionError", "float division by zero");
            return x / y;
        }
        if (op == "//") {
            if (y == 0.0) raise("ZeroDivisionError", "float floor division by zero");
            return std::floor(x / y);
        }
        if (op == "%") return mod_float(x, y);
    }
    raise("TypeError", "unsupported operator " + op);
}

// ===========================================================================
// Tokenizer

enum class Tok { Name, Number, String, Op, Newline, Indent, Dedent, End };

struct Token {
    Tok type;
    std::string text;
    std::size_t line;
    GV number;  // for Number
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : s_(src) {}

    std::vector<Token> run() {
        std::vector<std::size_t> indents{0};
        bool at_line_start = true;
        while (pos_ < s_.size()) {
            if (at_line_start && depth_ == 0) {
                std::size_t col = 0;
                std::size_t p = pos_;
                while (p < s_.size() && (s_[p] == ' ' || s_[p] == '\t')) {
                    col = s_[p] == '\t' ? (col / 8 + 1) * 8 : col + 1;
                    ++p;
                }
                if (p >= s_.size()) {
                    pos_ = p;
                    break;
                }
                if (s_[p] == '\n' || s_[p] == '#' || s_[p] == '\r') {
                    // Blank or comment-only line.
                    while (p < s_.size() && s_[p] != '\n') ++p;
                    pos_ = p < s_.size() ? p + 1 : p;
                    ++line_;
                    continue;
                }
                pos_ = p;
                if (col > indents.back()) {
                    indents.push_back(col);
                    out_.push_back({Tok::Indent, "", line_, {}});
                } else {
                    while (col < indents.back()) {
                        indents.pop_back();
                        out_.push_back({Tok::Dedent, "", line_, {}});
                    }
                    if (col != indents.back()) throw GuestSyntaxError("unindent does not match any outer level", line_);
                }
                at_line_start = false;
            }
            char c = s_[pos_];
            if (c == '\n') {
                ++line_;
                ++pos_;
                if (depth_ == 0) {
                    out_.push_back({Tok::Newline, "", line_ - 1, {}});
                    at_line_start = true;
                }
                continue;
            }
            if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
                ++pos_;
                continue;
            }
            if (c == '#') {
                while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
                continue;
            }
            if (c == '\\' && pos_ + 1 < s_.size() && (s_[pos_ + 1] == '\n' || s_[pos_ + 1] == '\r')) {
                pos_ += s_[pos_ + 1] == '\r' ? 3 : 2;
                ++line_;
                continue;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) ||
                (c == '.' && pos_ + 1 < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])))) {
                number();
                continue;
            }
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || static_cast<unsigned char>(c) >= 0x80) {
                std::size_t b = pos_;
                while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                            static_cast<unsigned char>(s_[pos_]) >= 0x80)) {
                    ++pos_;
                }
                std::string word(s_.substr(b, pos_ - b));
                if (pos_ < s_.size() && (s_[pos_] == '"' || s_[pos_] == '\'') && word.size() <= 2) {
                    auto lw = word;
                    for (auto& ch : lw) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
                    if (lw == "r" || lw == "b" || lw == "f" || lw == "u" || lw == "rb" || lw == "br" || lw == "fr" ||
                        lw == "rf") {
                        string_literal(lw.find('r') != std::string::npos);
                        continue;
                    }
                }
                out_.push_back({Tok::Name, word, line_, {}});
                continue;
            }
            if (c == '"' || c == '\'') {
                string_literal(false);
                continue;
            }
            op();
        }
        if (!out_.empty() && out_.back().type != Tok::Newline) out_.push_back({Tok::Newline, "", line_, {}});
        while (indents.size() > 1) {
            indents.pop_back();
            out_.push_back({Tok::Dedent, "", line_, {}});
        }
        out_.push_back({Tok::End, "", line_, {}});
        return std::move(out_);
    }

private:
    void number() {
        std::size_t b = pos_;
        std::string digits;
        if (s_[pos_] == '0' && pos_ + 1 < s_.size() && (s_[pos_ + 1] == 'x' || s_[pos_ + 1] == 'X')) {
            pos_ += 2;
            while (pos_ < s_.size() && (std::isxdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
                if (s_[pos_] != '_') digits.push_back(s_[pos_]);
                ++pos_;
            }
            out_.push_back({Tok::Number, std::string(s_.substr(b, pos_ - b)), line_,
                            GV(static_cast<std::int64_t>(std::stoull(digits, nullptr, 16)))});
            return;
        }
        bool is_float = false;
        auto take_digits = [&] {
            while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
                if (s_[pos_] != '_') digits.push_back(s_[pos_]);
                ++pos_;
            }
        };
        take_digits();
        if (pos_ < s_.size() && s_[pos_] == '.') {
            is_float = true;
            digits.push_back('.');
            ++pos_;
            take_digits();
        }
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t save = pos_;
            std::string save_digits = digits;
            digits.push_back('e');
            ++pos_;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) digits.push_back(s_[pos_++]);
            if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                is_float = true;
                take_digits();
            } else {
                pos_ = save;
                digits = save_digits;
            }
        }
        GV val;
        if (pos_ < s_.size() && (s_[pos_] == 'j' || s_[pos_] == 'J')) {
            ++pos_;
            val = std::complex<double>(0.0, std::stod(digits));
        } else if (is_float) {
            val = std::stod(digits);
        } else {
            std::int64_t v = 0;
            auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
            if (ec != std::errc()) throw GuestSyntaxError("integer literal too large for the guest stub", line_);
            val = v;
        }
        out_.push_back({Tok::Number, std::string(s_.substr(b, pos_ - b)), line_, val});
    }

    static void append_utf8(std::string& out, std::uint32_t cp) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }

    void string_literal(bool raw) {
        const std::size_t start_line = line_;
        char q = s_[pos_];
        bool triple = pos_ + 2 < s_.size() && s_[pos_ + 1] == q && s_[pos_ + 2] == q;
        pos_ += triple ? 3 : 1;
        std::string val;
        while (true) {
            if (pos_ >= s_.size()) throw GuestSyntaxError("unterminated string literal", start_line);
            char c = s_[pos_];
            if (triple) {
                if (c == q && pos_ + 2 < s_.size() + 0 && s_.substr(pos_, 3) == std::string(3, q)) {
                    pos_ += 3;
                    break;
                }
            } else if (c == q) {
                ++pos_;
                break;
            } else if (c == '\n') {
                throw GuestSyntaxError("unterminated string literal", start_line);
            }
            if (c == '\n') ++line_;
            if (c == '\\' && pos_ + 1 < s_.size()) {
                char n = s_[pos_ + 1];
                if (raw) {
                    val.push_back(c);
                    val.push_back(n);
                    pos_ += 2;
                    if (n == '\n') ++line_;
                    continue;
                }
                pos_ += 2;
                switch (n) {
                    case 'n': val.push_back('\n'); break;
                    case 't': val.push_back('\t'); break;
                    case 'r': val.push_back('\r'); break;
                    case '0': val.push_back('\0'); break;
                    case '\\': val.push_back('\\'); break;
                    case '\'': val.push_back('\''); break;
                    case '"': val.push_back('"'); break;
                    case '\n': ++line_; break;
                    case 'x':
                    case 'u':
                    case 'U': {
                        std::size_t len = n == 'x' ? 2 : (n == 'u' ? 4 : 8);
                        if (pos_ + len > s_.size()) throw GuestSyntaxError("truncated escape", line_);
                        auto cp = static_cast<std::uint32_t>(std::stoul(std::string(s_.substr(pos_, len)), nullptr, 16));
                        pos_ += len;
                        append_utf8(val, cp);
                        break;
                    }
                    default:
                        val.push_back('\\');
                        val.push_back(n);
                }
                continue;
            }
            val.push_back(c);
            ++pos_;
        }
        out_.push_back({Tok::String, val, start_line, {}});
    }

    void op() {
        static const char* three[] = {"**=", "//=", ">>=", "<<=", "..."};
        static const char* two[] = {"**", "//", "==", "!=", "<=", ">=", "->", "+=", "-=", "*=", "/=", "%=", ":=", "<<", ">>"};
        for (auto t : three) {
            if (s_.substr(pos_, 3) == t) {
                out_.push_back({Tok::Op, t, line_, {}});
                pos_ += 3;
                return;
            }
        }
        for (auto t : two) {
            if (s_.substr(pos_, 2) == t) {
                out_.push_back({Tok::Op, t, line_, {}});
                pos_ += 2;
                return;
            }
        }
        char c = s_[pos_];
        if (std::string_view("()[]{},:.;+-*/%<>=@&|^~").find(c) == std::string_view::npos) {
            throw GuestSyntaxError(std::string("unexpected character '") + c + "'", line_);
        }
        if (c == '(' || c == '[' || c == '{') ++depth_;
        if ((c == ')' || c == ']' || c == '}') && depth_ > 0) --depth_;
        out_.push_back({Tok::Op, std::string(1, c), line_, {}});
        ++pos_;
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    int depth_ = 0;
    std::vector<Token> out_;
};

// ===========================================================================
// AST

enum class NK {
    // expressions
    Const, Name, TupleLit, ListLit, DictLit, SetLit, BinOp, Unary, And, Or, Not, Compare, IfExp, Call, Attribute,
    Subscript, Slice, Lambda, ListComp, DictComp, Starred,
    // statements
    ExprStmt, Assign, AugAssign, Return, If, While, For, Break, Continue, Pass, FunctionDef, Import, ImportFrom, Raise,
    Assert, Try, Global, Del
};

struct Node;
using NodeP = std::unique_ptr<Node>;

struct Comprehension {
    NodeP target;
    NodeP iter;
    std::vector<NodeP> conds;
};

struct Handler {
    std::vector<std::string> types;  // empty = bare except
    std::string bind;
    std::vector<NodeP> body;
};

struct Node {
    NK kind;
    std::size_t line = 0;
    std::string name;               // identifier / attribute / operator
    std::vector<std::string> ops;   // Compare operators; Import names; Global names
    std::vector<std::string> alias; // Import aliases
    GV value;                       // Const
    NodeP a, b, c;                  // generic children
    std::vector<NodeP> items;       // elements / positional args / targets
    std::vector<std::string> kwnames;
    std::vector<NodeP> kwvals;
    std::vector<NodeP> body, orelse, finalbody;
    std::vector<Handler> handlers;
    std::vector<std::string> params;
    std::vector<NodeP> defaults;
    std::vector<Comprehension> comps;

    Node(NK k, std::size_t l) : kind(k), line(l) {}
};

NodeP mk(NK k, std::size_t line) { return std::make_unique<Node>(k, line); }

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : t_(std::move(toks)) {}

    std::vector<NodeP> module() {
        std::vector<NodeP> out;
        while (!at(Tok::End)) {
            if (at(Tok::Newline)) {
                ++i_;
                continue;
            }
            statement(out);
        }
        return out;
    }

private:
    const Token& cur() const { return t_[i_]; }
    bool at(Tok t) const { return cur().type == t; }
    bool at_op(std::string_view s) const { return cur().type == Tok::Op && cur().text == s; }
    bool at_kw(std::string_view s) const { return cur().type == Tok::Name && cur().text == s; }
    [[noreturn]] void fail(const std::string& msg) const {
        throw GuestSyntaxError(msg + " near '" + cur().text + "'", cur().line);
    }
    void expect_op(std::string_view s) {
        if (!at_op(s)) fail("expected '" + std::string(s) + "'");
        ++i_;
    }
    bool accept_op(std::string_view s) {
        if (at_op(s)) {
            ++i_;
            return true;
        }
        return false;
    }
    bool accept_kw(std::string_view s) {
        if (at_kw(s)) {
            ++i_;
            return true;
        }
        return false;
    }
    std::string expect_name() {
        if (!at(Tok::Name)) fail("expected identifier");
        return t_[i_++].text;
    }

    static bool is_keyword(std::string_view s) {
        static const std::unordered_set<std::string_view> kws = {
            "and", "or", "not", "in", "is", "if", "else", "elif", "for", "while", "def", "return", "lambda", "None",
            "True", "False", "import", "from", "as", "pass", "break", "continue", "raise", "try", "except",
            "finally", "assert", "global", "nonlocal", "del", "with", "yield", "class"};
        return kws.count(s) > 0;
    }

    // ---- statements
    void statement(std::vector<NodeP>& out) {
        if (at_kw("def")) return out.push_back(funcdef());
        if (at_kw("if")) return out.push_back(if_stmt());
        if (at_kw("while")) return out.push_back(while_stmt());
        if (at_kw("for")) return out.push_back(for_stmt());
        if (at_kw("try")) return out.push_back(try_stmt());
        if (at_op("@")) fail("decorators are not supported");
        if (at_kw("class")) fail("class definitions are not supported");
        if (at_kw("with")) fail("with statements are not supported");
        simple_statements(out);
    }

    void simple_statements(std::vector<NodeP>& out) {
        out.push_back(simple_statement());
        while (accept_op(";")) {
            if (at(Tok::Newline)) break;
            out.push_back(simple_statement());
        }
        if (!at(Tok::Newline) && !at(Tok::End)) fail("expected end of statement");
        if (at(Tok::Newline)) ++i_;
    }

    std::vector<NodeP> block() {
        expect_op(":");
        std::vector<NodeP> body;
        if (!at(Tok::Newline)) {
            simple_statements(body);
            return body;
        }
        ++i_;
        if (!at(Tok::Indent)) fail("expected an indented block");
        ++i_;
        while (!at(Tok::Dedent) && !at(Tok::End)) {
            if (at(Tok::Newline)) {
                ++i_;
                continue;
            }
            statement(body);
        }
        if (at(Tok::Dedent)) ++i_;
        return body;
    }

    NodeP funcdef() {
        auto n = mk(NK::FunctionDef, cur().line);
        ++i_;
        n->name = expect_name();
        expect_op("(");
        while (!at_op(")")) {
            if (accept_op("*")) {
                if (at_op(",")) {
                    ++i_;
                    continue;
                }
                fail("*args is not supported");
            }
            if (at_op("**")) fail("**kwargs is not supported");
            n->params.push_back(expect_name());
            if (accept_op(":")) (void)test();  // annotation ignored
            if (accept_op("=")) {
                n->defaults.push_back(test());
            } else {
                n->defaults.push_back(nullptr);
            }
            if (!accept_op(",")) break;
        }
        expect_op(")");
        if (accept_op("->")) (void)test();
        n->body = block();
        return n;
    }

    NodeP if_stmt() {
        auto n = mk(NK::If, cur().line);
        ++i_;  // if / elif
        n->a = namedexpr();
        n->body = block();
        if (at_kw("elif")) {
            n->orelse.push_back(if_stmt());
        } else if (accept_kw("else")) {
            n->orelse = block();
        }
        return n;
    }

    NodeP while_stmt() {
        auto n = mk(NK::While, cur().line);
        ++i_;
        n->a = namedexpr();
        n->body = block();
        if (accept_kw("else")) n->orelse = block();
        return n;
    }

    NodeP for_stmt() {
        auto n = mk(NK::For, cur().line);
        ++i_;
        n->a = target_list();
        if (!accept_kw("in")) fail("expected 'in'");
        n->b = testlist();
        n->body = block();
        if (accept_kw("else")) n->orelse = block();
        return n;
    }

    NodeP try_stmt() {
        auto n = mk(NK::Try, cur().line);
        ++i_;
        n->body = block();
        while (at_kw("except")) {
            ++i_;
            Handler h;
            if (!at_op(":")) {
                if (accept_op("(")) {
                    while (!at_op(")")) {
                        h.types.push_back(dotted_name());
                        if (!accept_op(",")) break;
                    }
                    expect_op(")");
                } else {
                    h.types.push_back(dotted_name());
                }
                if (accept_kw("as")) h.bind = expect_name();
            }
            h.body = block();
            n->handlers.push_back(std::move(h));
        }
        if (accept_kw("else")) n->orelse = block();
        if (accept_kw("finally")) n->finalbody = block();
        if (n->handlers.empty() && n->finalbody.empty()) fail("try without except or finally");
        return n;
    }

    std::string dotted_name() {
        std::string name = expect_name();
        while (accept_op(".")) name += "." + expect_name();
        return name;
    }

    NodeP simple_statement() {
        const auto line = cur().line;
        if (accept_kw("pass")) return mk(NK::Pass, line);
        if (accept_kw("break")) return mk(NK::Break, line);
        if (accept_kw("continue")) return mk(NK::Continue, line);
        if (accept_kw("return")) {
            auto n = mk(NK::Return, line);
            if (!at(Tok::Newline) && !at_op(";") && !at(Tok::End)) n->a = testlist();
            return n;
        }
        if (accept_kw("raise")) {
            auto n = mk(NK::Raise, line);
            if (!at(Tok::Newline) && !at_op(";") && !at(Tok::End)) n->a = test();
            if (accept_kw("from")) (void)test();
            return n;
        }
        if (accept_kw("assert")) {
            auto n = mk(NK::Assert, line);
            n->a = test();
            if (accept_op(",")) n->b = test();
            return n;
        }
        if (accept_kw("global") || accept_kw("nonlocal")) {
            auto n = mk(NK::Global, line);
            n->ops.push_back(expect_name());
            while (accept_op(",")) n->ops.push_back(expect_name());
            return n;
        }
        if (accept_kw("del")) {
            auto n = mk(NK::Del, line);
            n->items.push_back(test());
            while (accept_op(",")) n->items.push_back(test());
            return n;
        }
        if (accept_kw("import")) {
            auto n = mk(NK::Import, line);
            do {
                n->ops.push_back(dotted_name());
                n->alias.push_back(accept_kw("as") ? expect_name() : "");
            } while (accept_op(","));
            return n;
        }
        if (accept_kw("from")) {
            auto n = mk(NK::ImportFrom, line);
            while (accept_op(".")) {
            }
            n->name = dotted_name();
            if (!accept_kw("import")) fail("expected 'import'");
            bool paren = accept_op("(");
            if (accept_op("*")) {
                n->ops.push_back("*");
                n->alias.push_back("");
            } else {
                do {
                    if (paren && at_op(")")) break;
                    n->ops.push_back(expect_name());
                    n->alias.push_back(accept_kw("as") ? expect_name() : "");
                } while (accept_op(","));
            }
            if (paren) expect_op(")");
            return n;
        }

        auto first = testlist_star();
        if (at_op("=")) {
            auto n = mk(NK::Assign, line);
            n->items.push_back(std::move(first));
            while (accept_op("=")) n->items.push_back(testlist_star());
            // last item is the value
            n->a = std::move(n->items.back());
            n->items.pop_back();
            return n;
        }
        static const std::unordered_set<std::string> aug = {"+=", "-=", "*=", "/=", "//=", "%=", "**="};
        if (cur().type == Tok::Op && aug.count(cur().text)) {
            auto n = mk(NK::AugAssign, line);
            n->name = cur().text.substr(0, cur().text.size() - 1);
            ++i_;
            n->a = std::move(first);
            n->b = testlist();
            return n;
        }
        if (at_op(":")) {
            // Annotated assignment: x: float = 1.0
            ++i_;
            (void)test();
            if (accept_op("=")) {
                auto n = mk(NK::Assign, line);
                n->items.push_back(std::move(first));
                n->a = testlist();
                return n;
            }
            return mk(NK::Pass, line);
        }
        auto n = mk(NK::ExprStmt, line);
        n->a = std::move(first);
        return n;
    }

    // ---- expressions
    NodeP target_list() {
        const auto line = cur().line;
        std::vector<NodeP> items;
        items.push_back(or_expr_target());
        if (!at_op(",")) return std::move(items.front());
        while (accept_op(",")) {
            if (at_kw("in") || at_op("=")) break;
            items.push_back(or_expr_target());
        }
        auto n = mk(NK::TupleLit, line);
        n->items = std::move(items);
        return n;
    }

    NodeP or_expr_target() {
        if (accept_op("*")) {
            auto n = mk(NK::Starred, cur().line);
            n->a = arith();
            return n;
        }
        return arith();
    }

    NodeP testlist_star() {
        const auto line = cur().line;
        auto first = at_op("*") ? or_expr_target() : test();
        if (!at_op(",")) return first;
        auto n = mk(NK::TupleLit, line);
        n->items.push_back(std::move(first));
        while (accept_op(",")) {
            if (at(Tok::Newline) || at_op("=") || at_op(")") || at(Tok::End) || at_op(";")) break;
            n->items.push_back(at_op("*") ? or_expr_target() : test());
        }
        return n;
    }

    NodeP testlist() { return testlist_star(); }

    NodeP namedexpr() { return test(); }

    NodeP test() {
        if (at_kw("lambda")) return lambda();
        const auto line = cur().line;
        auto cond = or_test();
        if (at_kw("if")) {
            ++i_;
            auto n = mk(NK::IfExp, line);
            n->a = or_test();
            if (!accept_kw("else")) fail("expected 'else' in conditional expression");
            n->b = std::move(cond);
            n->c = test();
            return n;
        }
        return cond;
    }

    NodeP lambda() {
        auto n = mk(NK::Lambda, cur().line);
        ++i_;
        while (!at_op(":")) {
            n->params.push_back(expect_name());
            n->defaults.push_back(accept_op("=") ? test() : nullptr);
            if (!accept_op(",")) break;
        }
        expect_op(":");
        n->a = test();
        return n;
    }

    NodeP or_test() {
        auto left = and_test();
        while (at_kw("or")) {
            auto n = mk(NK::Or, cur().line);
            ++i_;
            n->a = std::move(left);
            n->b = and_test();
            left = std::move(n);
        }
        return left;
    }

    NodeP and_test() {
        auto left = not_test();
        while (at_kw("and")) {
            auto n = mk(NK::And, cur().line);
            ++i_;
            n->a = std::move(left);
            n->b = not_test();
            left = std::move(n);
        }
        return left;
    }

    NodeP not_test() {
        if (at_kw("not")) {
            auto n = mk(NK::Not, cur().line);
            ++i_;
            n->a = not_test();
            return n;
        }
        return comparison();
    }

    NodeP comparison() {
        const auto line = cur().line;
        auto first = arith();
        std::vector<std::string> ops;
        std::vector<NodeP> rest;
        while (true) {
            std::string op;
            if (cur().type == Tok::Op &&
                (cur().text == "<" || cur().text == ">" || cur().text == "==" || cur().text == ">=" ||
                 cur().text == "<=" || cur().text == "!=")) {
                op = cur().text;
                ++i_;
            } else if (at_kw("in")) {
                op = "in";
                ++i_;
            } else if (at_kw("not") && i_ + 1 < t_.size() && t_[i_ + 1].type == Tok::Name && t_[i_ + 1].text == "in") {
                op = "not in";
                i_ += 2;
            } else if (at_kw("is")) {
                ++i_;
                op = accept_kw("not") ? "is not" : "is";
            } else {
                break;
            }
            ops.push_back(op);
            rest.push_back(arith());
        }
        if (ops.empty()) return first;
        auto n = mk(NK::Compare, line);
        n->a = std::move(first);
        n->ops = std::move(ops);
        n->items = std::move(rest);
        return n;
    }

    NodeP arith() {
        auto left = term();
        while (at_op("+") || at_op("-")) {
            auto n = mk(NK::BinOp, cur().line);
            n->name = t_[i_++].text;
            n->a = std::move(left);
            n->b = term();
            left = std::move(n);
        }
        return left;
    }

    NodeP term() {
        auto left = factor();
        while (at_op("*") || at_op("/") || at_op("//") || at_op("%") || at_op("@")) {
            auto n = mk(NK::BinOp, cur().line);
            n->name = t_[i_++].text;
            if (n->name == "@") fail("matrix multiplication is not supported");
            n->a = std::move(left);
            n->b = factor();
            left = std::move(n);
        }
        return left;
    }

    NodeP factor() {
        if (at_op("-") || at_op("+") || at_op("~")) {
            auto n = mk(NK::Unary, cur().line);
            n->name = t_[i_++].text;
            n->a = factor();
            return n;
        }
        return power_expr();
    }

    NodeP power_expr() {
        auto base = atom_expr();
        if (at_op("**")) {
            auto n = mk(NK::BinOp, cur().line);
            ++i_;
            n->name = "**";
            n->a = std::move(base);
            n->b = factor();
            return n;
        }
        return base;
    }

    NodeP atom_expr() {
        auto e = atom();
        while (true) {
            if (at_op("(")) {
                auto n = mk(NK::Call, cur().line);
                ++i_;
                n->a = std::move(e);
                call_args(*n);
                e = std::move(n);
            } else if (at_op("[")) {
                auto n = mk(NK::Subscript, cur().line);
                ++i_;
                n->a = std::move(e);
                n->b = subscript_list();
                expect_op("]");
                e = std::move(n);
            } else if (at_op(".")) {
                auto n = mk(NK::Attribute, cur().line);
                ++i_;
                n->a = std::move(e);
                n->name = expect_name();
                e = std::move(n);
            } else {
                return e;
            }
        }
    }

    void call_args(Node& call) {
        while (!at_op(")")) {
            if (at_op("*") || at_op("**")) {
                auto n = mk(NK::Starred, cur().line);
                if (t_[i_].text == "**") fail("**kwargs in calls is not supported");
                ++i_;
                n->a = test();
                call.items.push_back(std::move(n));
            } else if (at(Tok::Name) && i_ + 1 < t_.size() && t_[i_ + 1].type == Tok::Op && t_[i_ + 1].text == "=") {
                call.kwnames.push_back(t_[i_].text);
                i_ += 2;
                call.kwvals.push_back(test());
            } else {
                auto arg = test();
                if (at_kw("for")) {
                    auto g = mk(NK::ListComp, arg->line);
                    g->a = std::move(arg);
                    comp_for(*g);
                    call.items.push_back(std::move(g));
                } else {
                    call.items.push_back(std::move(arg));
                }
            }
            if (!accept_op(",")) break;
        }
        expect_op(")");
    }

    NodeP subscript_list() {
        const auto line = cur().line;
        auto first = subscript();
        if (!at_op(",")) return first;
        auto n = mk(NK::TupleLit, line);
        n->items.push_back(std::move(first));
        while (accept_op(",")) {
            if (at_op("]")) break;
            n->items.push_back(subscript());
        }
        return n;
    }

    NodeP subscript() {
        const auto line = cur().line;
        NodeP lo;
        if (!at_op(":")) {
            lo = test();
            if (!at_op(":")) return lo;
        }
        auto n = mk(NK::Slice, line);
        n->a = std::move(lo);
        expect_op(":");
        if (!at_op("]") && !at_op(":") && !at_op(",")) n->b = test();
        if (accept_op(":")) {
            if (!at_op("]") && !at_op(",")) n->c = test();
        }
        return n;
    }

    void comp_for(Node& n) {
        while (at_kw("for")) {
            ++i_;
            Comprehension c;
            c.target = target_list();
            if (!accept_kw("in")) fail("expected 'in'");
            c.iter = or_test();
            while (at_kw("if")) {
                ++i_;
                c.conds.push_back(or_test());
            }
            n.comps.push_back(std::move(c));
        }
    }

    NodeP atom() {
        const auto& tok = cur();
        const auto line = tok.line;
        if (tok.type == Tok::Number) {
            auto n = mk(NK::Const, line);
            n->value = tok.number;
            ++i_;
            return n;
        }
        if (tok.type == Tok::String) {
            auto n = mk(NK::Const, line);
            std::string s;
            while (at(Tok::String)) s += t_[i_++].text;
            n->value = s;
            return n;
        }
        if (tok.type == Tok::Name) {
            if (tok.text == "None" || tok.text == "True" || tok.text == "False") {
                auto n = mk(NK::Const, line);
                if (tok.text == "True") n->value = true;
                if (tok.text == "False") n->value = false;
                ++i_;
                return n;
            }
            if (is_keyword(tok.text)) fail("unexpected keyword");
            auto n = mk(NK::Name, line);
            n->name = tok.text;
            ++i_;
            return n;
        }
        if (accept_op("...")) {
            auto n = mk(NK::Const, line);
            return n;
        }
        if (accept_op("(")) {
            if (accept_op(")")) return mk(NK::TupleLit, line);
            auto first = at_op("*") ? or_expr_target() : test();
            if (at_kw("for")) {
                auto g = mk(NK::ListComp, line);
                g->a = std::move(first);
                comp_for(*g);
                expect_op(")");
                return g;
            }
            if (accept_op(")")) return first;
            auto n = mk(NK::TupleLit, line);
            n->items.push_back(std::move(first));
            while (accept_op(",")) {
                if (at_op(")")) break;
                n->items.push_back(at_op("*") ? or_expr_target() : test());
            }
            expect_op(")");
            return n;
        }
        if (accept_op("[")) {
            auto n = mk(NK::ListLit, line);
            if (accept_op("]")) return n;
            auto first = at_op("*") ? or_expr_target() : test();
            if (at_kw("for")) {
                auto g = mk(NK::ListComp, line);
                g->a = std::move(first);
                comp_for(*g);
                expect_op("]");
                return g;
            }
            n->items.push_back(std::move(first));
            while (accept_op(",")) {
                if (at_op("]")) break;
                n->items.push_back(at_op("*") ? or_expr_target() : test());
            }
            expect_op("]");
            return n;
        }
        if (accept_op("{")) {
            if (accept_op("}")) return mk(NK::DictLit, line);
            auto first = test();
            if (accept_op(":")) {
                auto value = test();
                if (at_kw("for")) {
                    auto g = mk(NK::DictComp, line);
                    g->a = std::move(first);
                    g->b = std::move(value);
                    comp_for(*g);
                    expect_op("}");
                    return g;
                }
                auto n = mk(NK::DictLit, line);
                n->items.push_back(std::move(first));
                n->kwvals.push_back(std::move(value));
                while (accept_op(",")) {
                    if (at_op("}")) break;
                    n->items.push_back(test());
                    expect_op(":");
                    n->kwvals.push_back(test());
                }
                expect_op("}");
                return n;
            }
            auto n = mk(NK::SetLit, line);
            n->items.push_back(std::move(first));
            while (accept_op(",")) {
                if (at_op("}")) break;
                n->items.push_back(test());
            }
            expect_op("}");
            return n;
        }
        fail("invalid syntax");
    }

    std::vector<Token> t_;
    std::size_t i_ = 0;
};

// ===========================================================================
// Evaluation

struct Scope {
    std::unordered_map<std::string, GV> vars;
    std::shared_ptr<Scope> parent;  // enclosing function scope (closures)
    std::unordered_set<std::string> globals;
};
using ScopeP = std::shared_ptr<Scope>;

struct Program {
    std::vector<NodeP> body;
};

struct Function {
    std::string name;
    std::vector<std::string> params;
    std::vector<std::optional<GV>> defaults;
    const std::vector<NodeP>* body = nullptr;  // def
    const Node* expr = nullptr;                // lambda
    ScopeP closure;                            // null for module-level
    std::shared_ptr<Program> program;          // keeps the AST alive
};

enum class Flow { Normal, Return, Break, Continue };

}  // namespace

struct Runtime {
    std::unordered_map<std::string, GV> globals;
    std::unordered_map<std::string, GV> builtins;
    std::unordered_map<std::string, ModuleP> modules;
    std::vector<std::shared_ptr<Program>> programs;
    std::optional<std::chrono::steady_clock::time_point> deadline;
    std::uint64_t steps = 0;
    int depth = 0;

    Runtime();

    void tick() {
        if ((++steps & 0x3FF) == 0 && deadline && std::chrono::steady_clock::now() > *deadline) throw GuestTimeout();
    }

    // Name resolution
    GV lookup(const std::string& name, const ScopeP& scope) {
        for (auto s = scope; s; s = s->parent) {
            if (auto it = s->vars.find(name); it != s->vars.end()) return it->second;
        }
        if (auto it = globals.find(name); it != globals.end()) return it->second;
        if (auto it = builtins.find(name); it != builtins.end()) return it->second;
        raise("NameError", "name '" + name + "' is not defined");
    }

    void assign_name(const std::string& name, GV v, const ScopeP& scope) {
        if (!scope || scope->globals.count(name)) {
            globals[name] = std::move(v);
        } else {
            scope->vars[name] = std::move(v);
        }
    }

    // Iteration
    template <typename F>
    void iterate(const GV& it, F&& fn) {
        auto each = [&](const List& l) {
            // Copy guards against mutation during iteration.
            List snapshot = l;
            for (const auto& x : snapshot) {
                tick();
                if (!fn(x)) return;
            }
        };
        if (it.is<ListP>()) return each(*it.as<ListP>());
        if (it.is<TupleP>()) return each(*it.as<TupleP>());
        if (it.is<RangeP>()) {
            const auto& r = *it.as<RangeP>();
            for (std::int64_t i = 0, n = r.size(); i < n; ++i) {
                tick();
                if (!fn(GV(r.start + i * r.step))) return;
            }
            return;
        }
        if (it.is<std::string>()) {
            for (char c : it.as<std::string>()) {
                tick();
                if (!fn(GV(std::string(1, c)))) return;
            }
            return;
        }
        if (it.is<DictP>()) {
            List keys;
            for (const auto& [k, v] : it.as<DictP>()->items) keys.push_back(k);
            return each(keys);
        }
        raise("TypeError", "'" + type_name(it) + "' object is not iterable");
    }

    List to_list(const GV& it) {
        List out;
        iterate(it, [&](const GV& x) {
            if (static_cast<std::int64_t>(out.size()) >= kMaxElements) raise("MemoryError", "container exceeds the guest limit");
            out.push_back(x);
            return true;
        });
        return out;
    }

    // Calls
    GV call(const GV& fn, Args& args, Kwargs& kwargs) {
        tick();
        if (fn.is<BuiltinP>()) return fn.as<BuiltinP>()->fn(*this, args, kwargs);
        if (fn.is<TypeP>()) {
            const auto& t = fn.as<TypeP>();
            return t->ctor(*this, args, kwargs);
        }
        if (!fn.is<FuncP>()) raise("TypeError", "'" + type_name(fn) + "' object is not callable");
        const auto& f = *fn.as<FuncP>();
        if (depth > 400) raise("RecursionError", "maximum recursion depth exceeded");
        auto scope = std::make_shared<Scope>();
        scope->parent = f.closure;
        if (args.size() > f.params.size()) {
            raise("TypeError", f.name + "() takes " + std::to_string(f.params.size()) + " positional arguments but " +
                                   std::to_string(args.size()) + " were given");
        }
        std::vector<bool> bound(f.params.size(), false);
        for (std::size_t i = 0; i < args.size(); ++i) {
            scope->vars[f.params[i]] = args[i];
            bound[i] = true;
        }
        for (auto& [k, v] : kwargs) {
            auto pos = std::find(f.params.begin(), f.params.end(), k);
            if (pos == f.params.end()) raise("TypeError", f.name + "() got an unexpected keyword argument '" + k + "'");
            auto idx = static_cast<std::size_t>(pos - f.params.begin());
            if (bound[idx]) raise("TypeError", f.name + "() got multiple values for argument '" + k + "'");
            scope->vars[k] = v;
            bound[idx] = true;
        }
        for (std::size_t i = 0; i < f.params.size(); ++i) {
            if (bound[i]) continue;
            if (!f.defaults[i]) raise("TypeError", f.name + "() missing required positional argument: '" + f.params[i] + "'");
            scope->vars[f.params[i]] = *f.defaults[i];
        }
        ++depth;
        struct DepthGuard {
            int& d;
            ~DepthGuard() { --d; }
        } guard{depth};
        if (f.expr) return eval(*f.expr, scope);
        GV ret;
        exec_block(*f.body, scope, ret);
        return ret;
    }

    GV call_simple(const GV& fn, Args args) {
        Kwargs kw;
        return call(fn, args, kw);
    }

    // Attribute access
    GV attribute(const GV& obj, const std::string& name);

    // Subscripts
    static std::int64_t norm_index(std::int64_t i, std::size_t n) {
        if (i < 0) i += static_cast<std::int64_t>(n);
        if (i < 0 || i >= static_cast<std::int64_t>(n)) raise("IndexError", "index out of range");
        return i;
    }

    GV subscript(const GV& obj, const GV& key) {
        if (key.is<TupleP>() && !obj.is<DictP>()) raise("TypeError", "multi-dimensional indexing is not supported");
        if (obj.is<DictP>()) {
            for (const auto& [k, v] : obj.as<DictP>()->items) {
                if (equal(k, key)) return v;
            }
            raise("KeyError", repr(key));
        }
        auto index_into = [&](const List& l) -> GV {
            if (!is_intlike(key)) raise("TypeError", "indices must be integers");
            return l[static_cast<std::size_t>(norm_index(to_int(key), l.size()))];
        };
        if (obj.is<ListP>()) return index_into(*obj.as<ListP>());
        if (obj.is<TupleP>()) return index_into(*obj.as<TupleP>());
        if (obj.is<std::string>()) {
            if (!is_intlike(key)) raise("TypeError", "string indices must be integers");
            const auto& s = obj.as<std::string>();
            return std::string(1, s[static_cast<std::size_t>(norm_index(to_int(key), s.size()))]);
        }
        if (obj.is<RangeP>()) {
            const auto& r = *obj.as<RangeP>();
            auto i = norm_index(to_int(key), static_cast<std::size_t>(r.size()));
            return r.start + i * r.step;
        }
        raise("TypeError", "'" + type_name(obj) + "' object is not subscriptable");
    }

    GV slice(const GV& obj, const std::optional<GV>& lo, const std::optional<GV>& hi, const std::optional<GV>& st) {
        std::int64_t step = st && !st->is<None>() ? to_int(*st) : 1;
        if (step == 0) raise("ValueError", "slice step cannot be zero");
        auto take = [&](std::size_t n, auto&& emit) {
            auto len = static_cast<std::int64_t>(n);
            auto clamp = [&](const std::optional<GV>& v, std::int64_t dflt) {
                if (!v || v->is<None>()) return dflt;
                auto i = to_int(*v);
                if (i < 0) i += len;
                if (step > 0) return std::clamp<std::int64_t>(i, 0, len);
                return std::clamp<std::int64_t>(i, -1, len - 1);
            };
            std::int64_t b = clamp(lo, step > 0 ? 0 : len - 1);
            std::int64_t e = clamp(hi, step > 0 ? len : -1);
            for (std::int64_t i = b; step > 0 ? i < e : i > e; i += step) emit(static_cast<std::size_t>(i));
        };
        if (obj.is<std::string>()) {
            const auto& s = obj.as<std::string>();
            std::string out;
            take(s.size(), [&](std::size_t i) { out.push_back(s[i]); });
            return out;
        }
        if (obj.is<ListP>() || obj.is<TupleP>()) {
            const List& l = obj.is<ListP>() ? *obj.as<ListP>() : *obj.as<TupleP>();
            List out;
            take(l.size(), [&](std::size_t i) { out.push_back(l[i]); });
            return obj.is<ListP>() ? make_list(std::move(out)) : make_tuple(std::move(out));
        }
        raise("TypeError", "'" + type_name(obj) + "' object is not sliceable");
    }

    bool contains(const GV& container, const GV& item) {
        if (container.is<std::string>()) {
            if (!item.is<std::string>()) raise("TypeError", "'in <string>' requires string as left operand");
            return container.as<std::string>().find(item.as<std::string>()) != std::string::npos;
        }
        if (container.is<DictP>()) {
            for (const auto& [k, v] : container.as<DictP>()->items) {
                if (equal(k, item)) return true;
            }
            return false;
        }
        bool found = false;
        iterate(container, [&](const GV& x) {
            if (equal(x, item)) found = true;
            return !found;
        });
        return found;
    }

    // Expressions
    GV eval(const Node& n, const ScopeP& scope);
    List eval_args(const std::vector<NodeP>& items, const ScopeP& scope);
    void assign(const Node& target, const GV& value, const ScopeP& scope);
    void comprehension(const Node& n, std::size_t level, const ScopeP& scope, const std::function<void()>& emit);

    // Statements
    Flow exec_block(const std::vector<NodeP>& body, const ScopeP& scope, GV& ret);
    Flow exec(const Node& n, const ScopeP& scope, GV& ret);

    GV make_function(const Node& n, const ScopeP& scope, std::shared_ptr<Program> program) {
        auto f = std::make_shared<Function>();
        f->name = n.kind == NK::Lambda ? "<lambda>" : n.name;
        f->params = n.params;
        for (const auto& d : n.defaults) {
            f->defaults.push_back(d ? std::optional<GV>(eval(*d, scope)) : std::nullopt);
        }
        if (n.kind == NK::Lambda) {
            f->expr = n.a.get();
        } else {
            f->body = &n.body;
        }
        f->closure = scope;
        f->program = std::move(program);
        return GV(f);
    }

    std::shared_ptr<Program> current_program;

    bool exception_matches(const std::string& raised, const std::string& handler) {
        static const std::unordered_map<std::string, std::string> parent = {
            {"ZeroDivisionError", "ArithmeticError"}, {"OverflowError", "ArithmeticError"},
            {"FloatingPointError", "ArithmeticError"}, {"KeyError", "LookupError"},
            {"IndexError", "LookupError"}, {"RecursionError", "RuntimeError"},
            {"NotImplementedError", "RuntimeError"}, {"ArithmeticError", "Exception"},
            {"LookupError", "Exception"}, {"RuntimeError", "Exception"}, {"ValueError", "Exception"},
            {"TypeError", "Exception"}, {"NameError", "Exception"}, {"AttributeError", "Exception"},
            {"AssertionError", "Exception"}, {"ImportError", "Exception"}, {"ModuleNotFoundError", "ImportError"},
            {"Exception", "BaseException"}};
        std::string t = raised;
        while (true) {
            if (t == handler) return true;
            auto it = parent.find(t);
            if (it == parent.end()) return handler == "Exception" || handler == "BaseException";
            t = it->second;
        }
    }

    void import_module(const std::string& name, const std::string& alias, const ScopeP& scope) {
        auto root = name.substr(0, name.find('.'));
        auto it = modules.find(name);
        if (it == modules.end()) raise("ModuleNotFoundError", "No module named '" + name + "' (not available in the guest stub)");
        assign_name(alias.empty() ? root : alias, alias.empty() && root != name ? GV(modules.at(root)) : GV(it->second), scope);
    }
};

namespace {

GV kw_or(Kwargs& kw, const std::string& name, std::optional<GV> fallback = std::nullopt) {
    for (auto& [k, v] : kw) {
        if (k == name) return v;
    }
    if (!fallback) raise("TypeError", "missing argument '" + name + "'");
    return *fallback;
}

void want_args(const Args& a, std::size_t lo, std::size_t hi, const char* fn) {
    if (a.size() < lo || a.size() > hi) raise("TypeError", std::string(fn) + "() takes " + std::to_string(lo) +
                                                               (lo == hi ? "" : "-" + std::to_string(hi)) + " arguments (" +
                                                               std::to_string(a.size()) + " given)");
}

BuiltinP builtin(std::string name, NativeFn fn) { return std::make_shared<Builtin>(Builtin{std::move(name), std::move(fn)}); }

using RealFn = double (*)(double);

BuiltinP math_unary(const std::string& name, std::function<double(double)> f, std::function<bool(double)> domain) {
    return builtin(name, [name, f, domain](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 1, 1, name.c_str());
        if (a[0].is<std::complex<double>>()) raise("TypeError", "must be real number, not complex");
        double x = to_float(a[0]);
        if (domain && !domain(x)) raise("ValueError", "math domain error");
        double r = f(x);
        if (std::isinf(r) && std::isfinite(x)) raise("OverflowError", "math range error");
        return r;
    });
}

BuiltinP cmath_unary(const std::string& name, std::function<std::complex<double>(std::complex<double>)> f) {
    return builtin(name, [name, f](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 1, 1, name.c_str());
        return f(to_complex(a[0]));
    });
}

/// numpy scalar ufuncs: real in -> real out (nan outside domain), complex in -> complex out.
BuiltinP np_unary(const std::string& name, std::function<double(double)> fr,
                  std::function<std::complex<double>(std::complex<double>)> fc) {
    return builtin("numpy." + name, [name, fr, fc](Runtime& rt, Args& a, Kwargs&) -> GV {
        want_args(a, 1, 1, name.c_str());
        auto apply = [&](const GV& x) -> GV {
            if (x.is<std::complex<double>>()) return fc(x.as<std::complex<double>>());
            return fr(to_float(x));
        };
        if (a[0].is<ListP>() || a[0].is<TupleP>()) {
            List out;
            for (const auto& x : rt.to_list(a[0])) out.push_back(apply(x));
            return make_list(std::move(out));
        }
        return apply(a[0]);
    });
}

double py_round_half_even(double x) { return std::nearbyint(x); }

std::int64_t float_to_int(double d) {
    if (std::isnan(d)) raise("ValueError", "cannot convert float NaN to integer");
    if (std::isinf(d)) raise("OverflowError", "cannot convert float infinity to integer");
    if (std::abs(d) >= 9.2e18) raise("OverflowError", "integer exceeds 64 bits");
    return static_cast<std::int64_t>(std::trunc(d));
}

GV parse_float_str(const std::string& raw) {
    auto s = raw;
    s.erase(0, s.find_first_not_of(" \t\n"));
    s.erase(s.find_last_not_of(" \t\n") + 1);
    std::string low = s;
    for (auto& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (low == "inf" || low == "+inf" || low == "infinity") return INFINITY;
    if (low == "-inf" || low == "-infinity") return -INFINITY;
    if (low == "nan" || low == "+nan" || low == "-nan") return std::nan("");
    try {
        std::size_t used = 0;
        double d = std::stod(s, &used);
        if (used == s.size()) return d;
    } catch (...) {
    }
    raise("ValueError", "could not convert string to float: '" + raw + "'");
}

}  // namespace

Runtime::Runtime() {
    auto& B = builtins;
    auto type = [&](const std::string& name, NativeFn ctor) {
        auto t = std::make_shared<TypeObj>();
        t->name = name;
        t->ctor = std::move(ctor);
        B[name] = GV(t);
        return t;
    };

    type("int", [](Runtime&, Args& a, Kwargs&) -> GV {
        if (a.empty()) return std::int64_t{0};
        const auto& x = a[0];
        if (is_intlike(x)) return to_int(x);
        if (x.is<double>()) return float_to_int(x.as<double>());
        if (x.is<std::string>()) {
            try {
                std::size_t used = 0;
                auto v = std::stoll(x.as<std::string>(), &used);
                if (used == x.as<std::string>().size()) return static_cast<std::int64_t>(v);
            } catch (...) {
            }
            raise("ValueError", "invalid literal for int(): '" + x.as<std::string>() + "'");
        }
        raise("TypeError", "int() argument must be a string or a number, not '" + type_name(x) + "'");
    });
    type("float", [](Runtime&, Args& a, Kwargs&) -> GV {
        if (a.empty()) return 0.0;
        if (a[0].is<std::string>()) return parse_float_str(a[0].as<std::string>());
        if (a[0].is<std::complex<double>>()) raise("TypeError", "can't convert complex to float");
        return to_float(a[0]);
    });
    type("complex", [](Runtime&, Args& a, Kwargs&) -> GV {
        if (a.empty()) return std::complex<double>(0, 0);
        auto re = to_complex(a[0]);
        if (a.size() > 1) re += to_complex(a[1]) * std::complex<double>(0, 1);
        return re;
    });
    type("bool", [](Runtime&, Args& a, Kwargs&) -> GV { return a.empty() ? false : truthy(a[0]); });
    type("str", [](Runtime&, Args& a, Kwargs&) -> GV { return a.empty() ? std::string() : str_of(a[0]); });
    type("list", [](Runtime& rt, Args& a, Kwargs&) -> GV { return make_list(a.empty() ? List{} : rt.to_list(a[0])); });
    type("tuple", [](Runtime& rt, Args& a, Kwargs&) -> GV { return make_tuple(a.empty() ? List{} : rt.to_list(a[0])); });
    type("dict", [](Runtime& rt, Args& a, Kwargs& kw) -> GV {
        auto d = std::make_shared<Dict>();
        if (!a.empty()) {
            if (a[0].is<DictP>()) {
                d->items = a[0].as<DictP>()->items;
            } else {
                for (const auto& pair : rt.to_list(a[0])) {
                    auto kv = rt.to_list(pair);
                    if (kv.size() != 2) raise("ValueError", "dictionary update sequence element has wrong length");
                    d->items.emplace_back(kv[0], kv[1]);
                }
            }
        }
        for (auto& [k, v] : kw) d->items.emplace_back(GV(k), v);
        return GV(d);
    });
    type("set", [](Runtime& rt, Args& a, Kwargs&) -> GV {
        List out;
        if (!a.empty()) {
            for (const auto& x : rt.to_list(a[0])) {
                if (std::none_of(out.begin(), out.end(), [&](const GV& y) { return equal(x, y); })) out.push_back(x);
            }
        }
        return make_list(std::move(out));
    });
    type("range", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 1, 3, "range");
        for (const auto& x : a) {
            if (!is_intlike(x)) raise("TypeError", "'" + type_name(x) + "' object cannot be interpreted as an integer");
        }
        auto r = std::make_shared<RangeObj>();
        if (a.size() == 1) {
            *r = {0, to_int(a[0]), 1};
        } else {
            *r = {to_int(a[0]), to_int(a[1]), a.size() == 3 ? to_int(a[2]) : 1};
        }
        if (r->step == 0) raise("ValueError", "range() arg 3 must not be zero");
        return GV(r);
    });

    for (const char* exc : {"Exception", "BaseException", "ValueError", "TypeError", "ZeroDivisionError",
                            "ArithmeticError", "OverflowError", "KeyError", "IndexError", "LookupError",
                            "RuntimeError", "NotImplementedError", "AssertionError", "NameError", "AttributeError",
                            "RecursionError", "FloatingPointError", "ImportError", "ModuleNotFoundError"}) {
        std::string name = exc;
        auto t = type(name, [name](Runtime&, Args& a, Kwargs&) -> GV {
            auto e = std::make_shared<ExcObj>();
            e->type = name;
            if (!a.empty()) e->message = str_of(a[0]);
            return GV(e);
        });
        t->is_exception = true;
    }
    B["NotImplemented"] = GV(None{});

    B["abs"] = GV(builtin("abs", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 1, 1, "abs");
        if (a[0].is<std::complex<double>>()) return std::abs(a[0].as<std::complex<double>>());
        if (is_intlike(a[0])) {
            auto v = to_int(a[0]);
            if (v == std::numeric_limits<std::int64_t>::min()) raise("OverflowError", "integer exceeds 64 bits");
            return v < 0 ? -v : v;
        }
        return std::abs(to_float(a[0]));
    }));
    B["len"] = GV(builtin("len", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 1, 1, "len");
        const auto& x = a[0];
        if (x.is<std::string>()) return static_cast<std::int64_t>(x.as<std::string>().size());
        if (x.is<ListP>()) return static_cast<std::int64_t>(x.as<ListP>()->size());
        if (x.is<TupleP>()) return static_cast<std::int64_t>(x.as<TupleP>()->size());
        if (x.is<DictP>()) return static_cast<std::int64_t>(x.as<DictP>()->items.size());
        if (x.is<RangeP>()) return x.as<RangeP>()->size();
        raise("TypeError", "object of type '" + type_name(x) + "' has no len()");
    }));
    auto minmax = [](bool want_max) {
        return [want_max](Runtime& rt, Args& a, Kwargs& kw) -> GV {
            List items = a.size() == 1 ? rt.to_list(a[0]) : a;
            if (items.empty()) {
                for (auto& [k, v] : kw) {
                    if (k == "default") return v;
                }
                raise("ValueError", std::string(want_max ? "max" : "min") + "() arg is an empty sequence");
            }
            std::optional<GV> key;
            for (auto& [k, v] : kw) {
                if (k == "key") key = v;
            }
            GV best = items[0];
            GV best_key = key ? rt.call_simple(*key, {best}) : best;
            for (std::size_t i = 1; i < items.size(); ++i) {
                GV k = key ? rt.call_simple(*key, {items[i]}) : items[i];
                int c = compare_order(k, best_key);
                if (c == 2) continue;
                if (want_max ? c > 0 : c < 0) {
                    best = items[i];
                    best_key = k;
                }
            }
            return best;
        };
    };
    B["max"] = GV(builtin("max", minmax(true)));
    B["min"] = GV(builtin("min", minmax(false)));
    B["sum"] = GV(builtin("sum", [](Runtime& rt, Args& a, Kwargs& kw) -> GV {
        want_args(a, 1, 2, "sum");
        GV acc = a.size() > 1 ? a[1] : kw_or(kw, "start", GV(std::int64_t{0}));
        rt.iterate(a[0], [&](const GV& x) {
            acc = binary_op("+", acc, x);
            return true;
        });
        return acc;
    }));
    B["pow"] = GV(builtin("pow", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 2, 3, "pow");
        if (a.size() == 3) {
            auto base = to_int(a[0]), e = to_int(a[1]), m = to_int(a[2]);
            if (m == 0) raise("ValueError", "pow() 3rd argument cannot be 0");
            __int128 r = 1, b = mod_int(base, m);
            while (e > 0) {
                if (e & 1) r = (r * b) % m;
                b = (b * b) % m;
                e >>= 1;
            }
            return mod_int(static_cast<std::int64_t>(r), m);
        }
        return power(a[0], a[1]);
    }));
    B["round"] = GV(builtin("round", [](Runtime&, Args& a, Kwargs& kw) -> GV {
        want_args(a, 1, 2, "round");
        GV nd = a.size() > 1 ? a[1] : kw_or(kw, "ndigits", GV(None{}));
        if (is_intlike(a[0]) && nd.is<None>()) return to_int(a[0]);
        double x = to_float(a[0]);
        if (nd.is<None>()) return float_to_int(py_round_half_even(x));
        auto n = to_int(nd);
        double scale = std::pow(10.0, static_cast<double>(n));
        if (is_intlike(a[0])) return static_cast<std::int64_t>(py_round_half_even(x * scale) / scale);
        return py_round_half_even(x * scale) / scale;
    }));
    B["divmod"] = GV(builtin("divmod", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 2, 2, "divmod");
        return make_tuple({binary_op("//", a[0], a[1]), binary_op("%", a[0], a[1])});
    }));
    B["isinstance"] = GV(builtin("isinstance", [](Runtime& rt, Args& a, Kwargs&) -> GV {
        want_args(a, 2, 2, "isinstance");
        List types = a[1].is<TupleP>() ? *a[1].as<TupleP>() : List{a[1]};
        const auto tn = type_name(a[0]);
        for (const auto& t : types) {
            if (!t.is<TypeP>()) raise("TypeError", "isinstance() arg 2 must be a type or tuple of types");
            const auto& name = t.as<TypeP>()->name;
            if (name == tn) return true;
            if (name == "int" && tn == "bool") return true;
            if (a[0].is<ExcP>() && rt.exception_matches(tn, name)) return true;
        }
        return false;
    }));
    B["any"] = GV(builtin("any", [](Runtime& rt, Args& a, Kwargs&) -> GV {
        bool r = false;
        rt.iterate(a.at(0), [&](const GV& x) {
            r = truthy(x);
            return !r;
        });
        return r;
    }));
    B["all"] = GV(builtin("all", [](Runtime& rt, Args& a, Kwargs&) -> GV {
        bool r = true;
        rt.iterate(a.at(0), [&](const GV& x) {
            r = truthy(x);
            return r;
        });
        return r;
    }));
    B["enumerate"] = GV(builtin("enumerate", [](Runtime& rt, Args& a, Kwargs& kw) -> GV {
        std::int64_t start = a.size() > 1 ? to_int(a[1]) : to_int(kw_or(kw, "start", GV(std::int64_t{0})));
        List out;
        for (auto& x : rt.to_list(a.at(0))) out.push_back(make_tuple({GV(start++), x}));
        return make_list(std::move(out));
    }));
    B["zip"] = GV(builtin("zip", [](Runtime& rt, Args& a, Kwargs&) -> GV {
        std::vector<List> lists;
        std::size_t n = std::numeric_limits<std::size_t>::max();
        for (auto& x : a) {
            lists.push_back(rt.to_list(x));
            n = std::min(n, lists.back().size());
        }
        List out;
        if (lists.empty()) return make_list({});
        for (std::size_t i = 0; i < n; ++i) {
            List row;
            for (auto& l : lists) row.push_back(l[i]);
            out.push_back(make_tuple(std::move(row)));
        }
        return make_list(std::move(out));
    }));
    B["sorted"] = GV(builtin("sorted", [](Runtime& rt, Args& a, Kwargs& kw) -> GV {
        auto items = rt.to_list(a.at(0));
        std::optional<GV> key;
        bool reverse = false;
        for (auto& [k, v] : kw) {
            if (k == "key") key = v;
            if (k == "reverse") reverse = truthy(v);
        }
        std::vector<std::pair<GV, GV>> keyed;
        for (auto& x : items) keyed.emplace_back(key ? rt.call_simple(*key, {x}) : x, x);
        std::stable_sort(keyed.begin(), keyed.end(),
                         [&](const auto& p, const auto& q) { return compare_order(p.first, q.first) == -1; });
        if (reverse) std::reverse(keyed.begin(), keyed.end());
        List out;
        for (auto& p : keyed) out.push_back(p.second);
        return make_list(std::move(out));
    }));
    B["reversed"] = GV(builtin("reversed", [](Runtime& rt, Args& a, Kwargs&) -> GV {
        auto items = rt.to_list(a.at(0));
        std::reverse(items.begin(), items.end());
        return make_list(std::move(items));
    }));
    B["print"] = GV(builtin("print", [](Runtime&, Args&, Kwargs&) -> GV { return None{}; }));
    B["repr"] = GV(builtin("repr", [](Runtime&, Args& a, Kwargs&) -> GV { return repr(a.at(0)); }));
    B["callable"] = GV(builtin("callable", [](Runtime&, Args& a, Kwargs&) -> GV {
        const auto& x = a.at(0);
        return x.is<FuncP>() || x.is<BuiltinP>() || x.is<TypeP>();
    }));
    for (const char* forbidden : {"open", "exec", "eval", "compile", "__import__", "input", "globals", "locals"}) {
        std::string name = forbidden;
        B[name] = GV(builtin(name, [name](Runtime&, Args&, Kwargs&) -> GV {
            raise("RuntimeError", name + "() is not available in the guest stub");
        }));
    }

    // ---- math
    auto math = std::make_shared<Module>();
    math->name = "math";
    auto& M = math->attrs;
    M["pi"] = M_PI;
    M["e"] = M_E;
    M["tau"] = 2 * M_PI;
    M["inf"] = INFINITY;
    M["nan"] = std::nan("");
    M["sqrt"] = GV(math_unary("sqrt", [](double x) { return std::sqrt(x); }, [](double x) { return x >= 0; }));
    M["exp"] = GV(math_unary("exp", [](double x) { return std::exp(x); }, nullptr));
    M["expm1"] = GV(math_unary("expm1", [](double x) { return std::expm1(x); }, nullptr));
    M["log10"] = GV(math_unary("log10", [](double x) { return std::log10(x); }, [](double x) { return x > 0; }));
    M["log2"] = GV(math_unary("log2", [](double x) { return std::log2(x); }, [](double x) { return x > 0; }));
    M["log1p"] = GV(math_unary("log1p", [](double x) { return std::log1p(x); }, [](double x) { return x > -1; }));
    M["sin"] = GV(math_unary("sin", [](double x) { return std::sin(x); }, [](double x) { return std::isfinite(x); }));
    M["cos"] = GV(math_unary("cos", [](double x) { return std::cos(x); }, [](double x) { return std::isfinite(x); }));
    M["tan"] = GV(math_unary("tan", [](double x) { return std::tan(x); }, [](double x) { return std::isfinite(x); }));
    M["asin"] = GV(math_unary("asin", [](double x) { return std::asin(x); }, [](double x) { return x >= -1 && x <= 1; }));
    M["acos"] = GV(math_unary("acos", [](double x) { return std::acos(x); }, [](double x) { return x >= -1 && x <= 1; }));
    M["atan"] = GV(math_unary("atan", [](double x) { return std::atan(x); }, nullptr));
    M["sinh"] = GV(math_unary("sinh", [](double x) { return std::sinh(x); }, nullptr));
    M["cosh"] = GV(math_unary("cosh", [](double x) { return std::cosh(x); }, nullptr));
    M["tanh"] = GV(math_unary("tanh", [](double x) { return std::tanh(x); }, nullptr));
    M["asinh"] = GV(math_unary("asinh", [](double x) { return std::asinh(x); }, nullptr));
    M["acosh"] = GV(math_unary("acosh", [](double x) { return std::acosh(x); }, [](double x) { return x >= 1; }));
    M["atanh"] = GV(math_unary("atanh", [](double x) { return std::atanh(x); }, [](double x) { return x > -1 && x < 1; }));
    M["fabs"] = GV(math_unary("fabs", [](double x) { return std::fabs(x); }, nullptr));
    M["erf"] = GV(math_unary("erf", [](double x) { return std::erf(x); }, nullptr));
    M["erfc"] = GV(math_unary("erfc", [](double x) { return std::erfc(x); }, nullptr));
    M["gamma"] = GV(math_unary("gamma", [](double x) { return std::tgamma(x); },
                               [](double x) { return !(x <= 0 && x == std::floor(x)); }));
    M["lgamma"] = GV(math_unary("lgamma", [](double x) { return std::lgamma(x); },
                                [](double x) { return !(x <= 0 && x == std::floor(x)); }));
    M["degrees"] = GV(math_unary("degrees", [](double x) { return x * 180.0 / M_PI; }, nullptr));
    M["radians"] = GV(math_unary("radians", [](double x) { return x * M_PI / 180.0; }, nullptr));
    M["log"] = GV(builtin("log", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 1, 2, "log");
        double x = to_float(a[0]);
        if (x <= 0) raise("ValueError", "math domain error");
        double r = std::log(x);
        if (a.size() == 2) {
            double b = to_float(a[1]);
            if (b <= 0 || b == 1) raise("ValueError", "math domain error");
            r /= std::log(b);
        }
        return r;
    }));
    M["atan2"] = GV(builtin("atan2", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 2, 2, "atan2");
        return std::atan2(to_float(a[0]), to_float(a[1]));
    }));
    M["hypot"] = GV(builtin("hypot", [](Runtime&, Args& a, Kwargs&) -> GV {
        double acc = 0;
        for (auto& x : a) acc = std::hypot(acc, to_float(x));
        return acc;
    }));
    M["pow"] = GV(builtin("pow", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 2, 2, "pow");
        double x = to_float(a[0]), y = to_float(a[1]);
        if (x < 0 && y != std::floor(y)) raise("ValueError", "math domain error");
        if (x == 0 && y < 0) raise("ValueError", "math domain error");
        return std::pow(x, y);
    }));
    M["copysign"] = GV(builtin("copysign", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 2, 2, "copysign");
        return std::copysign(to_float(a[0]), to_float(a[1]));
    }));
    M["fmod"] = GV(builtin("fmod", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 2, 2, "fmod");
        return std::fmod(to_float(a[0]), to_float(a[1]));
    }));
    M["floor"] = GV(builtin("floor", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 1, 1, "floor");
        if (is_intlike(a[0])) return to_int(a[0]);
        return float_to_int(std::floor(to_float(a[0])));
    }));
    M["ceil"] = GV(builtin("ceil", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 1, 1, "ceil");
        if (is_intlike(a[0])) return to_int(a[0]);
        return float_to_int(std::ceil(to_float(a[0])));
    }));
    M["trunc"] = GV(builtin("trunc", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 1, 1, "trunc");
        if (is_intlike(a[0])) return to_int(a[0]);
        return float_to_int(to_float(a[0]));
    }));
    M["isclose"] = GV(builtin("isclose", [](Runtime&, Args& a, Kwargs& kw) -> GV {
        want_args(a, 2, 2, "isclose");
        double x = to_float(a[0]), y = to_float(a[1]);
        double rt = to_float(kw_or(kw, "rel_tol", GV(1e-9))), at = to_float(kw_or(kw, "abs_tol", GV(0.0)));
        if (x == y) return true;
        if (std::isinf(x) || std::isinf(y)) return false;
        double d = std::abs(x - y);
        return d <= std::abs(rt * y) || d <= std::abs(rt * x) || d <= at;
    }));
    M["isfinite"] = GV(builtin("isfinite", [](Runtime&, Args& a, Kwargs&) -> GV { return std::isfinite(to_float(a.at(0))); }));
    M["isinf"] = GV(builtin("isinf", [](Runtime&, Args& a, Kwargs&) -> GV { return std::isinf(to_float(a.at(0))); }));
    M["isnan"] = GV(builtin("isnan", [](Runtime&, Args& a, Kwargs&) -> GV { return std::isnan(to_float(a.at(0))); }));
    M["factorial"] = GV(builtin("factorial", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 1, 1, "factorial");
        if (!is_intlike(a[0])) raise("TypeError", "factorial() only accepts integral values");
        auto n = to_int(a[0]);
        if (n < 0) raise("ValueError", "factorial() not defined for negative values");
        std::int64_t r = 1;
        for (std::int64_t i = 2; i <= n; ++i) r = checked_mul(r, i);
        return r;
    }));
    M["comb"] = GV(builtin("comb", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 2, 2, "comb");
        auto n = to_int(a[0]), k = to_int(a[1]);
        if (n < 0 || k < 0) raise("ValueError", "must be non-negative integers");
        if (k > n) return std::int64_t{0};
        k = std::min(k, n - k);
        std::int64_t r = 1;
        for (std::int64_t i = 1; i <= k; ++i) r = checked_mul(r, n - k + i) / i;
        return r;
    }));
    M["perm"] = GV(builtin("perm", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 1, 2, "perm");
        auto n = to_int(a[0]), k = a.size() > 1 ? to_int(a[1]) : n;
        if (n < 0 || k < 0) raise("ValueError", "must be non-negative integers");
        if (k > n) return std::int64_t{0};
        std::int64_t r = 1;
        for (std::int64_t i = 0; i < k; ++i) r = checked_mul(r, n - i);
        return r;
    }));
    M["gcd"] = GV(builtin("gcd", [](Runtime&, Args& a, Kwargs&) -> GV {
        std::int64_t g = 0;
        for (auto& x : a) g = std::gcd(g, to_int(x));
        return g;
    }));
    M["prod"] = GV(builtin("prod", [](Runtime& rt, Args& a, Kwargs& kw) -> GV {
        GV acc = kw_or(kw, "start", GV(std::int64_t{1}));
        rt.iterate(a.at(0), [&](const GV& x) {
            acc = binary_op("*", acc, x);
            return true;
        });
        return acc;
    }));
    M["fsum"] = GV(builtin("fsum", [](Runtime& rt, Args& a, Kwargs&) -> GV {
        // Neumaier compensated sum.
        double s = 0, c = 0;
        rt.iterate(a.at(0), [&](const GV& x) {
            double v = to_float(x), t = s + v;
            c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
            s = t;
            return true;
        });
        return s + c;
    }));
    modules["math"] = math;

    // ---- cmath
    auto cm = std::make_shared<Module>();
    cm->name = "cmath";
    auto& C = cm->attrs;
    C["pi"] = M_PI;
    C["e"] = M_E;
    C["inf"] = INFINITY;
    C["nan"] = std::nan("");
    C["infj"] = std::complex<double>(0, INFINITY);
    C["sqrt"] = GV(cmath_unary("sqrt", [](std::complex<double> z) { return std::sqrt(z); }));
    C["exp"] = GV(cmath_unary("exp", [](std::complex<double> z) { return std::exp(z); }));
    C["log"] = GV(cmath_unary("log", [](std::complex<double> z) { return std::log(z); }));
    C["log10"] = GV(cmath_unary("log10", [](std::complex<double> z) { return std::log10(z); }));
    C["sin"] = GV(cmath_unary("sin", [](std::complex<double> z) { return std::sin(z); }));
    C["cos"] = GV(cmath_unary("cos", [](std::complex<double> z) { return std::cos(z); }));
    C["tan"] = GV(cmath_unary("tan", [](std::complex<double> z) { return std::tan(z); }));
    C["sinh"] = GV(cmath_unary("sinh", [](std::complex<double> z) { return std::sinh(z); }));
    C["cosh"] = GV(cmath_unary("cosh", [](std::complex<double> z) { return std::cosh(z); }));
    C["tanh"] = GV(cmath_unary("tanh", [](std::complex<double> z) { return std::tanh(z); }));
    C["phase"] = GV(builtin("phase", [](Runtime&, Args& a, Kwargs&) -> GV { return std::arg(to_complex(a.at(0))); }));
    C["polar"] = GV(builtin("polar", [](Runtime&, Args& a, Kwargs&) -> GV {
        auto z = to_complex(a.at(0));
        return make_tuple({GV(std::abs(z)), GV(std::arg(z))});
    }));
    C["rect"] = GV(builtin("rect", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 2, 2, "rect");
        return std::polar(to_float(a[0]), to_float(a[1]));
    }));
    C["isclose"] = GV(builtin("isclose", [](Runtime&, Args& a, Kwargs& kw) -> GV {
        auto x = to_complex(a.at(0)), y = to_complex(a.at(1));
        double rt = to_float(kw_or(kw, "rel_tol", GV(1e-9))), at = to_float(kw_or(kw, "abs_tol", GV(0.0)));
        double d = std::abs(x - y);
        return x == y || d <= std::max(rt * std::max(std::abs(x), std::abs(y)), at);
    }));
    modules["cmath"] = cm;

    // ---- numpy (scalar subset)
    auto np = std::make_shared<Module>();
    np->name = "numpy";
    auto& N = np->attrs;
    N["pi"] = M_PI;
    N["e"] = M_E;
    N["inf"] = INFINITY;
    N["nan"] = std::nan("");
    N["euler_gamma"] = 0.57721566490153286060651209008240243;
    N["sqrt"] = GV(np_unary("sqrt", [](double x) { return std::sqrt(x); }, [](std::complex<double> z) { return std::sqrt(z); }));
    N["exp"] = GV(np_unary("exp", [](double x) { return std::exp(x); }, [](std::complex<double> z) { return std::exp(z); }));
    N["log"] = GV(np_unary("log", [](double x) { return std::log(x); }, [](std::complex<double> z) { return std::log(z); }));
    N["log10"] = GV(np_unary("log10", [](double x) { return std::log10(x); }, [](std::complex<double> z) { return std::log10(z); }));
    N["log2"] = GV(np_unary("log2", [](double x) { return std::log2(x); }, [](std::complex<double> z) { return std::log(z) / std::log(2.0); }));
    N["sin"] = GV(np_unary("sin", [](double x) { return std::sin(x); }, [](std::complex<double> z) { return std::sin(z); }));
    N["cos"] = GV(np_unary("cos", [](double x) { return std::cos(x); }, [](std::complex<double> z) { return std::cos(z); }));
    N["tan"] = GV(np_unary("tan", [](double x) { return std::tan(x); }, [](std::complex<double> z) { return std::tan(z); }));
    N["arcsin"] = GV(np_unary("arcsin", [](double x) { return std::asin(x); }, [](std::complex<double> z) { return std::asin(z); }));
    N["arccos"] = GV(np_unary("arccos", [](double x) { return std::acos(x); }, [](std::complex<double> z) { return std::acos(z); }));
    N["arctan"] = GV(np_unary("arctan", [](double x) { return std::atan(x); }, [](std::complex<double> z) { return std::atan(z); }));
    N["sinh"] = GV(np_unary("sinh", [](double x) { return std::sinh(x); }, [](std::complex<double> z) { return std::sinh(z); }));
    N["cosh"] = GV(np_unary("cosh", [](double x) { return std::cosh(x); }, [](std::complex<double> z) { return std::cosh(z); }));
    N["tanh"] = GV(np_unary("tanh", [](double x) { return std::tanh(x); }, [](std::complex<double> z) { return std::tanh(z); }));
    N["abs"] = GV(builtin("numpy.abs", [](Runtime&, Args& a, Kwargs&) -> GV {
        if (a.at(0).is<std::complex<double>>()) return std::abs(a[0].as<std::complex<double>>());
        if (is_intlike(a[0])) return std::abs(to_int(a[0]));
        return std::abs(to_float(a[0]));
    }));
    N["absolute"] = N["abs"];
    N["real"] = GV(builtin("numpy.real", [](Runtime&, Args& a, Kwargs&) -> GV { return to_complex(a.at(0)).real(); }));
    N["imag"] = GV(builtin("numpy.imag", [](Runtime&, Args& a, Kwargs&) -> GV { return to_complex(a.at(0)).imag(); }));
    N["conj"] = GV(builtin("numpy.conj", [](Runtime&, Args& a, Kwargs&) -> GV {
        if (a.at(0).is<std::complex<double>>()) return std::conj(a[0].as<std::complex<double>>());
        return a[0];
    }));
    N["angle"] = GV(builtin("numpy.angle", [](Runtime&, Args& a, Kwargs&) -> GV { return std::arg(to_complex(a.at(0))); }));
    N["arctan2"] = GV(builtin("numpy.arctan2", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 2, 2, "arctan2");
        return std::atan2(to_float(a[0]), to_float(a[1]));
    }));
    N["power"] = GV(builtin("numpy.power", [](Runtime&, Args& a, Kwargs&) -> GV {
        want_args(a, 2, 2, "power");
        return power(a[0], a[1]);
    }));
    N["sign"] = GV(builtin("numpy.sign", [](Runtime&, Args& a, Kwargs&) -> GV {
        double x = to_float(a.at(0));
        return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
    }));
    N["isclose"] = GV(builtin("numpy.isclose", [](Runtime&, Args& a, Kwargs& kw) -> GV {
        double x = to_float(a.at(0)), y = to_float(a.at(1));
        double rt = to_float(kw_or(kw, "rtol", GV(1e-5))), at = to_float(kw_or(kw, "atol", GV(1e-8)));
        return std::abs(x - y) <= at + rt * std::abs(y);
    }));
    N["float64"] = B["float"];
    N["complex128"] = B["complex"];
    N["int64"] = B["int"];
    N["sum"] = B["sum"];
    N["prod"] = M["prod"];
    modules["numpy"] = np;

    auto typing = std::make_shared<Module>();
    typing->name = "typing";
    for (const char* name : {"Tuple", "List", "Dict", "Optional", "Union", "Any", "Callable", "Literal"}) {
        typing->attrs[name] = GV(None{});
    }
    modules["typing"] = typing;
    auto future = std::make_shared<Module>();
    future->name = "__future__";
    future->attrs["annotations"] = GV(None{});
    modules["__future__"] = future;
}

GV Runtime::attribute(const GV& obj, const std::string& name) {
    if (obj.is<ModuleP>()) {
        const auto& m = *obj.as<ModuleP>();
        if (auto it = m.attrs.find(name); it != m.attrs.end()) return it->second;
        raise("AttributeError", "module '" + m.name + "' has no attribute '" + name + "' (not available in the guest stub)");
    }
    if (obj.is<std::complex<double>>() || is_numeric(obj)) {
        auto z = to_complex(obj);
        if (name == "real") return obj.is<std::complex<double>>() ? GV(z.real()) : obj;
        if (name == "imag") return obj.is<std::complex<double>>() ? GV(z.imag()) : (obj.is<double>() ? GV(0.0) : GV(std::int64_t{0}));
        if (name == "conjugate") {
            return GV(builtin("conjugate", [obj](Runtime&, Args&, Kwargs&) -> GV {
                return obj.is<std::complex<double>>() ? GV(std::conj(obj.as<std::complex<double>>())) : obj;
            }));
        }
        if (name == "is_integer" && obj.is<double>()) {
            return GV(builtin("is_integer", [obj](Runtime&, Args&, Kwargs&) -> GV {
                double d = obj.as<double>();
                return std::isfinite(d) && d == std::floor(d);
            }));
        }
    }
    if (obj.is<std::string>()) {
        const auto s = obj.as<std::string>();
        auto str_method = [&](std::function<GV(const std::string&, Args&)> f) {
            return GV(builtin("str." + name, [s, f](Runtime&, Args& a, Kwargs&) -> GV { return f(s, a); }));
        };
        if (name == "lower" || name == "upper") {
            bool up = name == "upper";
            return str_method([up](const std::string& x, Args&) -> GV {
                std::string out = x;
                for (auto& c : out) c = static_cast<char>(up ? std::toupper(static_cast<unsigned char>(c)) : std::tolower(static_cast<unsigned char>(c)));
                return out;
            });
        }
        if (name == "strip" || name == "lstrip" || name == "rstrip") {
            auto mode = name;
            return str_method([mode](const std::string& x, Args& a) -> GV {
                std::string chars = a.empty() || a[0].is<None>() ? std::string(" \t\n\r\f\v") : a[0].as<std::string>();
                std::size_t b = 0, e = x.size();
                if (mode != "rstrip") b = x.find_first_not_of(chars) == std::string::npos ? x.size() : x.find_first_not_of(chars);
                if (mode != "lstrip") {
                    auto p = x.find_last_not_of(chars);
                    e = p == std::string::npos ? 0 : p + 1;
                }
                return b < e ? x.substr(b, e - b) : std::string();
            });
        }
        if (name == "startswith" || name == "endswith") {
            bool start = name == "startswith";
            return str_method([start](const std::string& x, Args& a) -> GV {
                const auto& p = a.at(0).as<std::string>();
                if (p.size() > x.size()) return false;
                return start ? x.compare(0, p.size(), p) == 0 : x.compare(x.size() - p.size(), p.size(), p) == 0;
            });
        }
        if (name == "replace") {
            return str_method([](const std::string& x, Args& a) -> GV {
                std::string out = x;
                const auto& from = a.at(0).as<std::string>();
                const auto& to = a.at(1).as<std::string>();
                if (from.empty()) return out;
                std::size_t pos = 0;
                while ((pos = out.find(from, pos)) != std::string::npos) {
                    out.replace(pos, from.size(), to);
                    pos += to.size();
                }
                return out;
            });
        }
        if (name == "split") {
            return str_method([](const std::string& x, Args& a) -> GV {
                List out;
                if (a.empty() || a[0].is<None>()) {
                    std::size_t i = 0;
                    while (i < x.size()) {
                        while (i < x.size() && std::isspace(static_cast<unsigned char>(x[i]))) ++i;
                        std::size_t j = i;
                        while (j < x.size() && !std::isspace(static_cast<unsigned char>(x[j]))) ++j;
                        if (j > i) out.push_back(GV(x.substr(i, j - i)));
                        i = j;
                    }
                } else {
                    const auto& sep = a[0].as<std::string>();
                    std::size_t start = 0, p;
                    while ((p = x.find(sep, start)) != std::string::npos) {
                        out.push_back(GV(x.substr(start, p - start)));
                        start = p + sep.size();
                    }
                    out.push_back(GV(x.substr(start)));
                }
                return make_list(std::move(out));
            });
        }
        if (name == "join") {
            return GV(builtin("str.join", [s](Runtime& rt, Args& a, Kwargs&) -> GV {
                std::string out;
                bool first = true;
                for (auto& x : rt.to_list(a.at(0))) {
                    if (!x.is<std::string>()) raise("TypeError", "sequence item: expected str instance");
                    if (!first) out += s;
                    first = false;
                    out += x.as<std::string>();
                }
                return out;
            }));
        }
        if (name == "format") {
            return GV(builtin("str.format", [s](Runtime&, Args& a, Kwargs&) -> GV {
                std::string out;
                std::size_t next = 0;
                for (std::size_t i = 0; i < s.size(); ++i) {
                    if (s[i] == '{' && i + 1 < s.size() && s[i + 1] == '{') {
                        out.push_back('{');
                        ++i;
                    } else if (s[i] == '}' && i + 1 < s.size() && s[i + 1] == '}') {
                        out.push_back('}');
                        ++i;
                    } else if (s[i] == '{') {
                        auto close = s.find('}', i);
                        if (close == std::string::npos) raise("ValueError", "unmatched '{' in format string");
                        auto field = s.substr(i + 1, close - i - 1);
                        std::size_t idx = field.empty() ? next++ : std::stoul(field);
                        if (idx >= a.size()) raise("IndexError", "format index out of range");
                        out += str_of(a[idx]);
                        i = close;
                    } else {
                        out.push_back(s[i]);
                    }
                }
                return out;
            }));
        }
    }
    if (obj.is<ListP>()) {
        auto l = obj.as<ListP>();
        if (name == "append") {
            return GV(builtin("list.append", [l](Runtime&, Args& a, Kwargs&) -> GV {
                want_args(a, 1, 1, "append");
                if (static_cast<std::int64_t>(l->size()) >= kMaxElements) raise("MemoryError", "list exceeds the guest limit");
                l->push_back(a[0]);
                return None{};
            }));
        }
        if (name == "extend") {
            return GV(builtin("list.extend", [l](Runtime& rt, Args& a, Kwargs&) -> GV {
                for (auto& x : rt.to_list(a.at(0))) l->push_back(x);
                return None{};
            }));
        }
        if (name == "pop") {
            return GV(builtin("list.pop", [l](Runtime&, Args& a, Kwargs&) -> GV {
                if (l->empty()) raise("IndexError", "pop from empty list");
                auto i = a.empty() ? static_cast<std::int64_t>(l->size()) - 1 : norm_index(to_int(a[0]), l->size());
                GV v = (*l)[static_cast<std::size_t>(i)];
                l->erase(l->begin() + i);
                return v;
            }));
        }
        if (name == "insert") {
            return GV(builtin("list.insert", [l](Runtime&, Args& a, Kwargs&) -> GV {
                want_args(a, 2, 2, "insert");
                auto i = std::clamp<std::int64_t>(to_int(a[0]) < 0 ? to_int(a[0]) + static_cast<std::int64_t>(l->size()) : to_int(a[0]), 0,
                                                  static_cast<std::int64_t>(l->size()));
                l->insert(l->begin() + i, a[1]);
                return None{};
            }));
        }
        if (name == "index" || name == "count") {
            bool idx = name == "index";
            return GV(builtin("list." + name, [l, idx](Runtime&, Args& a, Kwargs&) -> GV {
                std::int64_t n = 0;
                for (std::size_t i = 0; i < l->size(); ++i) {
                    if (equal((*l)[i], a.at(0))) {
                        if (idx) return static_cast<std::int64_t>(i);
                        ++n;
                    }
                }
                if (idx) raise("ValueError", "value is not in list");
                return n;
            }));
        }
    }
    if (obj.is<DictP>()) {
        auto d = obj.as<DictP>();
        if (name == "get") {
            return GV(builtin("dict.get", [d](Runtime&, Args& a, Kwargs&) -> GV {
                want_args(a, 1, 2, "get");
                for (const auto& [k, v] : d->items) {
                    if (equal(k, a[0])) return v;
                }
                return a.size() > 1 ? a[1] : GV(None{});
            }));
        }
        if (name == "keys" || name == "values" || name == "items") {
            int which = name == "keys" ? 0 : (name == "values" ? 1 : 2);
            return GV(builtin("dict." + name, [d, which](Runtime&, Args&, Kwargs&) -> GV {
                List out;
                for (const auto& [k, v] : d->items) {
                    out.push_back(which == 0 ? k : (which == 1 ? v : make_tuple({k, v})));
                }
                return make_list(std::move(out));
            }));
        }
    }
    if (obj.is<ExcP>() && name == "args") return make_tuple({GV(obj.as<ExcP>()->message)});
    raise("AttributeError", "'" + type_name(obj) + "' object has no attribute '" + name + "'");
}

List Runtime::eval_args(const std::vector<NodeP>& items, const ScopeP& scope) {
    List out;
    for (const auto& it : items) {
        if (it->kind == NK::Starred) {
            for (auto& x : to_list(eval(*it->a, scope))) out.push_back(x);
        } else {
            out.push_back(eval(*it, scope));
        }
    }
    return out;
}

void Runtime::comprehension(const Node& n, std::size_t level, const ScopeP& scope, const std::function<void()>& emit) {
    if (level == n.comps.size()) {
        emit();
        return;
    }
    const auto& c = n.comps[level];
    iterate(eval(*c.iter, scope), [&](const GV& x) {
        assign(*c.target, x, scope);
        for (const auto& cond : c.conds) {
            if (!truthy(eval(*cond, scope))) return true;
        }
        comprehension(n, level + 1, scope, emit);
        return true;
    });
}

GV Runtime::eval(const Node& n, const ScopeP& scope) {
    tick();
    switch (n.kind) {
        case NK::Const: return n.value;
        case NK::Name: return lookup(n.name, scope);
        case NK::TupleLit: return make_tuple(eval_args(n.items, scope));
        case NK::ListLit: return make_list(eval_args(n.items, scope));
        case NK::SetLit: {
            List out;
            for (auto& x : eval_args(n.items, scope)) {
                if (std::none_of(out.begin(), out.end(), [&](const GV& y) { return equal(x, y); })) out.push_back(x);
            }
            return make_list(std::move(out));
        }
        case NK::DictLit: {
            auto d = std::make_shared<Dict>();
            for (std::size_t i = 0; i < n.items.size(); ++i) {
                GV k = eval(*n.items[i], scope);
                GV v = eval(*n.kwvals[i], scope);
                bool replaced = false;
                for (auto& [ek, ev] : d->items) {
                    if (equal(ek, k)) {
                        ev = v;
                        replaced = true;
                        break;
                    }
                }
                if (!replaced) d->items.emplace_back(k, v);
            }
            return GV(d);
        }
        case NK::BinOp: {
            GV a = eval(*n.a, scope);
            GV b = eval(*n.b, scope);
            return binary_op(n.name, a, b);
        }
        case NK::Unary: {
            GV a = eval(*n.a, scope);
            if (n.name == "+") {
                if (!is_numeric(a) && !a.is<std::complex<double>>()) raise("TypeError", "bad operand type for unary +");
                return is_intlike(a) ? GV(to_int(a)) : a;
            }
            if (n.name == "-") {
                if (a.is<std::complex<double>>()) return -a.as<std::complex<double>>();
                if (a.is<double>()) return -a.as<double>();
                if (is_intlike(a)) return checked_sub(0, to_int(a));
                raise("TypeError", "bad operand type for unary -: '" + type_name(a) + "'");
            }
            if (!is_intlike(a)) raise("TypeError", "bad operand type for unary ~");
            return ~to_int(a);
        }
        case NK::And: {
            GV a = eval(*n.a, scope);
            return truthy(a) ? eval(*n.b, scope) : a;
        }
        case NK::Or: {
            GV a = eval(*n.a, scope);
            return truthy(a) ? a : eval(*n.b, scope);
        }
        case NK::Not: return !truthy(eval(*n.a, scope));
        case NK::Compare: {
            GV left = eval(*n.a, scope);
            for (std::size_t i = 0; i < n.ops.size(); ++i) {
                GV right = eval(*n.items[i], scope);
                const auto& op = n.ops[i];
                bool r;
                if (op == "==") {
                    r = equal(left, right);
                } else if (op == "!=") {
                    r = !equal(left, right);
                } else if (op == "in") {
                    r = contains(right, left);
                } else if (op == "not in") {
                    r = !contains(right, left);
                } else if (op == "is" || op == "is not") {
                    bool same = (left.is<None>() && right.is<None>()) ||
                                (left.is<bool>() && right.is<bool>() && left.as<bool>() == right.as<bool>()) ||
                                (left.v.index() == right.v.index() && !is_numeric(left) && !left.is<None>() &&
                                 !left.is<std::string>() && equal(left, right));
                    r = op == "is" ? same : !same;
                } else {
                    int c = compare_order(left, right);
                    if (c == 2) {
                        r = false;
                    } else if (op == "<") {
                        r = c < 0;
                    } else if (op == ">") {
                        r = c > 0;
                    } else if (op == "<=") {
                        r = c <= 0;
                    } else {
                        r = c >= 0;
                    }
                }
                if (!r) return false;
                left = std::move(right);
            }
            return true;
        }
        case NK::IfExp: return truthy(eval(*n.a, scope)) ? eval(*n.b, scope) : eval(*n.c, scope);
        case NK::Call: {
            GV fn = eval(*n.a, scope);
            Args args = eval_args(n.items, scope);
            Kwargs kw;
            for (std::size_t i = 0; i < n.kwnames.size(); ++i) kw.emplace_back(n.kwnames[i], eval(*n.kwvals[i], scope));
            return call(fn, args, kw);
        }
        case NK::Attribute: return attribute(eval(*n.a, scope), n.name);
        case NK::Subscript: {
            GV obj = eval(*n.a, scope);
            if (n.b->kind == NK::Slice) {
                auto opt = [&](const NodeP& p) { return p ? std::optional<GV>(eval(*p, scope)) : std::nullopt; };
                return slice(obj, opt(n.b->a), opt(n.b->b), opt(n.b->c));
            }
            return subscript(obj, eval(*n.b, scope));
        }
        case NK::Lambda: return make_function(n, scope, current_program);
        case NK::ListComp: {
            auto inner = std::make_shared<Scope>();
            inner->parent = scope;
            List out;
            comprehension(n, 0, inner, [&] {
                if (static_cast<std::int64_t>(out.size()) >= kMaxElements) raise("MemoryError", "list exceeds the guest limit");
                out.push_back(eval(*n.a, inner));
            });
            return make_list(std::move(out));
        }
        case NK::DictComp: {
            auto inner = std::make_shared<Scope>();
            inner->parent = scope;
            auto d = std::make_shared<Dict>();
            comprehension(n, 0, inner, [&] {
                GV k = eval(*n.a, inner);
                GV v = eval(*n.b, inner);
                for (auto& [ek, ev] : d->items) {
                    if (equal(ek, k)) {
                        ev = v;
                        return;
                    }
                }
                d->items.emplace_back(k, v);
            });
            return GV(d);
        }
        case NK::Starred: raise("SyntaxError", "can't use starred expression here");
        case NK::Slice: raise("SyntaxError", "slice outside subscript");
        default: break;
    }
    raise("SyntaxError", "unsupported expression");
}

void Runtime::assign(const Node& target, const GV& value, const ScopeP& scope) {
    switch (target.kind) {
        case NK::Name: assign_name(target.name, value, scope); return;
        case NK::TupleLit:
        case NK::ListLit: {
            auto vals = to_list(value);
            std::size_t star = target.items.size();
            for (std::size_t i = 0; i < target.items.size(); ++i) {
                if (target.items[i]->kind == NK::Starred) star = i;
            }
            if (star == target.items.size()) {
                if (vals.size() != target.items.size()) {
                    raise("ValueError", vals.size() > target.items.size()
                                            ? "too many values to unpack (expected " + std::to_string(target.items.size()) + ")"
                                            : "not enough values to unpack (expected " + std::to_string(target.items.size()) +
                                                  ", got " + std::to_string(vals.size()) + ")");
                }
                for (std::size_t i = 0; i < vals.size(); ++i) assign(*target.items[i], vals[i], scope);
                return;
            }
            const std::size_t after = target.items.size() - star - 1;
            if (vals.size() < star + after) raise("ValueError", "not enough values to unpack");
            for (std::size_t i = 0; i < star; ++i) assign(*target.items[i], vals[i], scope);
            List mid(vals.begin() + static_cast<std::ptrdiff_t>(star), vals.end() - static_cast<std::ptrdiff_t>(after));
            assign(*target.items[star]->a, make_list(std::move(mid)), scope);
            for (std::size_t i = 0; i < after; ++i) assign(*target.items[star + 1 + i], vals[vals.size() - after + i], scope);
            return;
        }
        case NK::Subscript: {
            GV obj = eval(*target.a, scope);
            if (target.b->kind == NK::Slice) raise("TypeError", "slice assignment is not supported");
            GV key = eval(*target.b, scope);
            if (obj.is<ListP>()) {
                auto& l = *obj.as<ListP>();
                if (!is_intlike(key)) raise("TypeError", "list indices must be integers");
                l[static_cast<std::size_t>(norm_index(to_int(key), l.size()))] = value;
                return;
            }
            if (obj.is<DictP>()) {
                auto& d = *obj.as<DictP>();
                for (auto& [k, v] : d.items) {
                    if (equal(k, key)) {
                        v = value;
                        return;
                    }
                }
                d.items.emplace_back(key, value);
                return;
            }
            raise("TypeError", "'" + type_name(obj) + "' object does not support item assignment");
        }
        case NK::Attribute: raise("AttributeError", "attribute assignment is not supported");
        default: raise("SyntaxError", "cannot assign to expression");
    }
}

Flow Runtime::exec_block(const std::vector<NodeP>& body, const ScopeP& scope, GV& ret) {
    for (const auto& s : body) {
        Flow f = exec(*s, scope, ret);
        if (f != Flow::Normal) return f;
    }
    return Flow::Normal;
}

Flow Runtime::exec(const Node& n, const ScopeP& scope, GV& ret) {
    tick();
    switch (n.kind) {
        case NK::ExprStmt: (void)eval(*n.a, scope); return Flow::Normal;
        case NK::Assign: {
            GV v = eval(*n.a, scope);
            for (const auto& t : n.items) assign(*t, v, scope);
            return Flow::Normal;
        }
        case NK::AugAssign: {
            GV cur = eval(*n.a, scope);
            GV rhs = eval(*n.b, scope);
            if (cur.is<ListP>() && n.name == "+") {
                for (auto& x : to_list(rhs)) cur.as<ListP>()->push_back(x);
                return Flow::Normal;
            }
            assign(*n.a, binary_op(n.name, cur, rhs), scope);
            return Flow::Normal;
        }
        case NK::Return:
            ret = n.a ? eval(*n.a, scope) : GV(None{});
            return Flow::Return;
        case NK::If:
            if (truthy(eval(*n.a, scope))) return exec_block(n.body, scope, ret);
            return exec_block(n.orelse, scope, ret);
        case NK::While: {
            while (truthy(eval(*n.a, scope))) {
                Flow f = exec_block(n.body, scope, ret);
                if (f == Flow::Break) return Flow::Normal;
                if (f == Flow::Return) return f;
            }
            return exec_block(n.orelse, scope, ret);
        }
        case NK::For: {
            Flow result = Flow::Normal;
            bool broke = false;
            iterate(eval(*n.b, scope), [&](const GV& x) {
                assign(*n.a, x, scope);
                Flow f = exec_block(n.body, scope, ret);
                if (f == Flow::Break) {
                    broke = true;
                    return false;
                }
                if (f == Flow::Return) {
                    result = f;
                    return false;
                }
                return true;
            });
            if (result == Flow::Return) return result;
            if (!broke) return exec_block(n.orelse, scope, ret);
            return Flow::Normal;
        }
        case NK::Break: return Flow::Break;
        case NK::Continue: return Flow::Continue;
        case NK::Pass: return Flow::Normal;
        case NK::FunctionDef: assign_name(n.name, make_function(n, scope, current_program), scope); return Flow::Normal;
        case NK::Import:
            for (std::size_t i = 0; i < n.ops.size(); ++i) import_module(n.ops[i], n.alias[i], scope);
            return Flow::Normal;
        case NK::ImportFrom: {
            auto it = modules.find(n.name);
            if (it == modules.end()) raise("ModuleNotFoundError", "No module named '" + n.name + "' (not available in the guest stub)");
            for (std::size_t i = 0; i < n.ops.size(); ++i) {
                if (n.ops[i] == "*") {
                    for (const auto& [k, v] : it->second->attrs) assign_name(k, v, scope);
                    continue;
                }
                auto a = it->second->attrs.find(n.ops[i]);
                if (a == it->second->attrs.end()) raise("ImportError", "cannot import name '" + n.ops[i] + "' from '" + n.name + "'");
                assign_name(n.alias[i].empty() ? n.ops[i] : n.alias[i], a->second, scope);
            }
            return Flow::Normal;
        }
        case NK::Raise: {
            if (!n.a) raise("RuntimeError", "No active exception to reraise");
            GV e = eval(*n.a, scope);
            if (e.is<TypeP>() && e.as<TypeP>()->is_exception) raise(e.as<TypeP>()->name, "");
            if (e.is<ExcP>()) raise(e.as<ExcP>()->type, e.as<ExcP>()->message);
            raise("TypeError", "exceptions must derive from BaseException");
        }
        case NK::Assert:
            if (!truthy(eval(*n.a, scope))) raise("AssertionError", n.b ? str_of(eval(*n.b, scope)) : "");
            return Flow::Normal;
        case NK::Global:
            if (scope) {
                for (const auto& name : n.ops) scope->globals.insert(name);
            }
            return Flow::Normal;
        case NK::Del:
            for (const auto& t : n.items) {
                if (t->kind == NK::Name) {
                    if (scope && scope->vars.erase(t->name)) continue;
                    globals.erase(t->name);
                } else if (t->kind == NK::Subscript) {
                    GV obj = eval(*t->a, scope);
                    GV key = eval(*t->b, scope);
                    if (obj.is<DictP>()) {
                        auto& items = obj.as<DictP>()->items;
                        auto it = std::find_if(items.begin(), items.end(), [&](const auto& kv) { return equal(kv.first, key); });
                        if (it == items.end()) raise("KeyError", repr(key));
                        items.erase(it);
                    } else if (obj.is<ListP>()) {
                        auto& l = *obj.as<ListP>();
                        l.erase(l.begin() + norm_index(to_int(key), l.size()));
                    }
                }
            }
            return Flow::Normal;
        case NK::Try: {
            Flow f = Flow::Normal;
            auto run_finally = [&]() {
                if (!n.finalbody.empty()) {
                    GV discard;
                    Flow ff = exec_block(n.finalbody, scope, discard);
                    if (ff != Flow::Normal) {
                        ret = discard;
                        f = ff;
                    }
                }
            };
            try {
                f = exec_block(n.body, scope, ret);
            } catch (const GuestError& e) {
                const Handler* match = nullptr;
                for (const auto& h : n.handlers) {
                    if (h.types.empty()) {
                        match = &h;
                        break;
                    }
                    for (const auto& t : h.types) {
                        if (exception_matches(e.type(), t)) {
                            match = &h;
                            break;
                        }
                    }
                    if (match) break;
                }
                if (!match) {
                    run_finally();
                    throw;
                }
                if (!match->bind.empty()) {
                    auto obj = std::make_shared<ExcObj>();
                    obj->type = e.type();
                    obj->message = e.message();
                    assign_name(match->bind, GV(obj), scope);
                }
                try {
                    f = exec_block(match->body, scope, ret);
                } catch (...) {
                    run_finally();
                    throw;
                }
                run_finally();
                return f;
            }
            if (f == Flow::Normal) f = exec_block(n.orelse, scope, ret);
            run_finally();
            return f;
        }
        default: break;
    }
    raise("SyntaxError", "unsupported statement");
}

namespace {

Value to_value(const GV& x) {
    switch (x.v.index()) {
        case 0: return Value();
        case 1: return Value(x.as<bool>());
        case 2: return Value(x.as<std::int64_t>());
        case 3: return Value(x.as<double>());
        case 4: return Value(x.as<std::complex<double>>());
        case 5: return Value(x.as<std::string>());
        case 6:
        case 7: {
            const List& l = x.is<TupleP>() ? *x.as<TupleP>() : *x.as<ListP>();
            Tuple t;
            for (const auto& e : l) t.push_back(to_value(e));
            return Value(std::move(t));
        }
        default: break;
    }
    throw GuestError("TypeError", "return value of type '" + type_name(x) + "' cannot be transported");
}

GV from_value(const Value& v) {
    return std::visit(
        [](const auto& x) -> GV {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return GV(None{});
            } else if constexpr (std::is_same_v<T, Tuple>) {
                List l;
                for (const auto& e : x) l.push_back(from_value(e));
                return make_tuple(std::move(l));
            } else {
                return GV(x);
            }
        },
        v.data);
}

}  // namespace

Interpreter::Interpreter() : rt_(std::make_unique<Runtime>()) {}
Interpreter::~Interpreter() = default;

void Interpreter::set_deadline(std::optional<std::chrono::steady_clock::time_point> deadline) {
    rt_->deadline = deadline;
}

void Interpreter::load(std::string_view source) {
    auto program = std::make_shared<Program>();
    program->body = Parser(Lexer(source).run()).module();
    rt_->programs.push_back(program);
    rt_->current_program = program;
    GV ret;
    rt_->exec_block(program->body, nullptr, ret);
}

bool Interpreter::has_function(const std::string& name) const {
    auto it = rt_->globals.find(name);
    return it != rt_->globals.end() && (it->second.is<FuncP>() || it->second.is<BuiltinP>());
}

Value Interpreter::call(const std::string& function, const std::vector<Value>& args) {
    auto it = rt_->globals.find(function);
    if (it == rt_->globals.end()) throw GuestError("NameError", "name '" + function + "' is not defined");
    Args gargs;
    for (const auto& a : args) gargs.push_back(from_value(a));
    Kwargs kw;
    rt_->depth = 0;
    return to_value(rt_->call(it->second, gargs, kw));
}

}  // namespace vtp::guest
