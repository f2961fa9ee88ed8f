#include "vtp/value.hpp"

#include <charconv>
#include <cmath>

#include "vtp/error.hpp"

namespace vtp {

namespace {

bool same_double(double a, double b) {
    if (std::isnan(a) && std::isnan(b)) return true;
    return a == b;
}

std::string shortest_repr(double d) {
    if (std::isnan(d)) return "nan";
    if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), d);
    std::string s(buf, end);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

nlohmann::json double_to_json(double d) {
    if (std::isfinite(d)) return d;
    return nlohmann::json{{"float", shortest_repr(d)}};
}

double double_from_json(const nlohmann::json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_object() && j.contains("float") && j["float"].is_string()) {
        const auto& s = j["float"].get_ref<const std::string&>();
        if (s == "nan") return std::nan("");
        if (s == "inf") return INFINITY;
        if (s == "-inf") return -INFINITY;
    }
    throw ParseError("expected a real number, got " + j.dump());
}

}  // namespace

bool operator==(const Value& a, const Value& b) {
    if (a.data.index() != b.data.index()) return false;
    if (a.is_real()) return same_double(a.as_real(), b.as_real());
    if (a.is_complex()) {
        return same_double(a.as_complex().real(), b.as_complex().real()) &&
               same_double(a.as_complex().imag(), b.as_complex().imag());
    }
    return a.data == b.data;
}

std::string to_string(ValueKind::Tag tag) {
    switch (tag) {
        case ValueKind::Tag::Real: return "real";
        case ValueKind::Tag::Complex: return "complex";
        case ValueKind::Tag::Integer: return "integer";
        case ValueKind::Tag::Boolean: return "boolean";
        case ValueKind::Tag::Categorical: return "categorical";
        case ValueKind::Tag::Tuple: return "tuple";
    }
    return "?";
}

std::string describe(const ValueKind& kind) {
    std::string out = to_string(kind.tag);
    if (kind.tag == ValueKind::Tag::Categorical) {
        out += "{";
        for (std::size_t i = 0; i < kind.options.size(); ++i) {
            if (i) out += ",";
            out += kind.options[i];
        }
        out += "}";
    } else if (kind.tag == ValueKind::Tag::Tuple) {
        out += "(";
        for (std::size_t i = 0; i < kind.elements.size(); ++i) {
            if (i) out += ",";
            out += describe(kind.elements[i]);
        }
        out += ")";
    }
    return out;
}

std::string to_display(const Value& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return "None";
            } else if constexpr (std::is_same_v<T, bool>) {
                return x ? "True" : "False";
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                return std::to_string(x);
            } else if constexpr (std::is_same_v<T, double>) {
                return shortest_repr(x);
            } else if constexpr (std::is_same_v<T, std::complex<double>>) {
                return "(" + shortest_repr(x.real()) + (x.imag() < 0 ? "-" : "+") +
                       shortest_repr(std::abs(x.imag())) + "j)";
            } else if constexpr (std::is_same_v<T, std::string>) {
                return "'" + x + "'";
            } else {
                std::string out = "(";
                for (std::size_t i = 0; i < x.size(); ++i) {
                    if (i) out += ", ";
                    out += to_display(x[i]);
                }
                if (x.size() == 1) out += ",";
                return out + ")";
            }
        },
        v.data);
}

bool matches_kind(const Value& v, const ValueKind& kind) {
    switch (kind.tag) {
        case ValueKind::Tag::Real: return v.is_number();
        case ValueKind::Tag::Complex: return v.is_number() || v.is_complex();
        case ValueKind::Tag::Integer: return v.is_int();
        case ValueKind::Tag::Boolean: return v.is_bool();
        case ValueKind::Tag::Categorical:
            if (!v.is_string()) return false;
            if (kind.options.empty()) return true;
            for (const auto& o : kind.options) {
                if (o == v.as_string()) return true;
            }
            return false;
        case ValueKind::Tag::Tuple: {
            if (!v.is_tuple()) return false;
            const auto& t = v.as_tuple();
            if (t.size() != kind.elements.size()) return false;
            for (std::size_t i = 0; i < t.size(); ++i) {
                if (!matches_kind(t[i], kind.elements[i])) return false;
            }
            return true;
        }
    }
    return false;
}

std::string kind_violation(const ValueKind& kind) {
    if (kind.tag == ValueKind::Tag::Categorical && kind.options.empty()) {
        return "categorical option set empty";
    }
    if (kind.tag == ValueKind::Tag::Tuple) {
        if (kind.elements.empty()) return "tuple arity must be >= 1";
        for (const auto& e : kind.elements) {
            if (auto v = kind_violation(e); !v.empty()) return v;
        }
    }
    return {};
}

nlohmann::json value_to_json(const Value& v) {
    return std::visit(
        [](const auto& x) -> nlohmann::json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return nullptr;
            } else if constexpr (std::is_same_v<T, double>) {
                return double_to_json(x);
            } else if constexpr (std::is_same_v<T, std::complex<double>>) {
                return nlohmann::json{{"complex", {double_to_json(x.real()), double_to_json(x.imag())}}};
            } else if constexpr (std::is_same_v<T, Tuple>) {
                auto arr = nlohmann::json::array();
                for (const auto& e : x) arr.push_back(value_to_json(e));
                return arr;
            } else {
                return x;
            }
        },
        v.data);
}

Value value_from_json(const nlohmann::json& j) {
    switch (j.type()) {
        case nlohmann::json::value_t::null: return {};
        case nlohmann::json::value_t::boolean: return Value(j.get<bool>());
        case nlohmann::json::value_t::number_integer: return Value(j.get<std::int64_t>());
        case nlohmann::json::value_t::number_unsigned: {
            auto u = j.get<std::uint64_t>();
            if (u > static_cast<std::uint64_t>(INT64_MAX)) return Value(static_cast<double>(u));
            return Value(static_cast<std::int64_t>(u));
        }
        case nlohmann::json::value_t::number_float: return Value(j.get<double>());
        case nlohmann::json::value_t::string: return Value(j.get<std::string>());
        case nlohmann::json::value_t::array: {
            Tuple t;
            t.reserve(j.size());
            for (const auto& e : j) t.push_back(value_from_json(e));
            return Value(std::move(t));
        }
        case nlohmann::json::value_t::object:
            if (j.contains("complex")) {
                const auto& c = j["complex"];
                if (!c.is_array() || c.size() != 2) throw ParseError("complex must be [re, im]");
                return Value(std::complex<double>(double_from_json(c[0]), double_from_json(c[1])));
            }
            if (j.contains("float")) return Value(double_from_json(j));
            break;
        default: break;
    }
    throw ParseError("unsupported value encoding: " + j.dump());
}

nlohmann::json kind_to_json(const ValueKind& k) {
    nlohmann::json j{{"kind", to_string(k.tag)}};
    if (k.tag == ValueKind::Tag::Categorical) j["options"] = k.options;
    if (k.tag == ValueKind::Tag::Tuple) {
        auto arr = nlohmann::json::array();
        for (const auto& e : k.elements) arr.push_back(kind_to_json(e));
        j["elements"] = arr;
    }
    return j;
}

ValueKind kind_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind")) throw ParseError("value kind must be an object with 'kind'");
    const auto tag = j.at("kind").get<std::string>();
    if (tag == "real") return ValueKind::real();
    if (tag == "complex") return ValueKind::complex();
    if (tag == "integer") return ValueKind::integer();
    if (tag == "boolean") return ValueKind::boolean();
    if (tag == "categorical") return ValueKind::categorical(j.value("options", std::vector<std::string>{}));
    if (tag == "tuple") {
        std::vector<ValueKind> elems;
        for (const auto& e : j.at("elements")) elems.push_back(kind_from_json(e));
        return ValueKind::tuple(std::move(elems));
    }
    throw ParseError("unknown value kind '" + tag + "'");
}

}  // namespace vtp
