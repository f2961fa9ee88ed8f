#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "vtp/value.hpp"

using namespace vtp;

TEST(Value, Kinds) {
    EXPECT_TRUE(Value(3).is_int());
    EXPECT_TRUE(Value(3.0).is_real());
    EXPECT_TRUE(Value(true).is_bool());
    EXPECT_FALSE(Value(true).is_number());
    EXPECT_TRUE(Value().is_none());
    EXPECT_DOUBLE_EQ(Value(4).to_double(), 4.0);
    EXPECT_EQ(Value(Tuple{1, "a"}).as_tuple().size(), 2u);
}

TEST(Value, Display) {
    EXPECT_EQ(to_display(Value(Tuple{Value(0.25), Value(true)})), "(0.25, True)");
    EXPECT_EQ(to_display(Value("scalar")), "'scalar'");
    EXPECT_EQ(to_display(Value()), "None");
}

TEST(Value, JsonRoundtrip) {
    const double inf = std::numeric_limits<double>::infinity();
    const std::vector<Value> vs = {Value(), Value(true), Value(-7), Value(1.5), Value(inf), Value(-inf),
                                   Value(std::complex<double>(1, -2)), Value("x"),
                                   Value(Tuple{Value(1), Value(Tuple{Value(2.5)})})};
    for (const auto& v : vs) EXPECT_EQ(value_from_json(value_to_json(v)), v) << to_display(v);
    const auto nan = value_from_json(value_to_json(Value(std::nan(""))));
    EXPECT_TRUE(std::isnan(nan.as_real()));
    EXPECT_TRUE(value_to_json(Value(2.0)).is_number_float());
    EXPECT_TRUE(value_to_json(Value(2)).is_number_integer());
}

TEST(ValueKind, Matching) {
    EXPECT_TRUE(matches_kind(Value(1), ValueKind::real()));
    EXPECT_TRUE(matches_kind(Value(1), ValueKind::complex()));
    EXPECT_FALSE(matches_kind(Value(1.5), ValueKind::integer()));
    EXPECT_FALSE(matches_kind(Value(true), ValueKind::integer()));
    EXPECT_TRUE(matches_kind(Value("a"), ValueKind::categorical({"a", "b"})));
    EXPECT_FALSE(matches_kind(Value("c"), ValueKind::categorical({"a", "b"})));
    const auto pair = ValueKind::tuple({ValueKind::real(), ValueKind::boolean()});
    EXPECT_TRUE(matches_kind(Value(Tuple{Value(1.0), Value(false)}), pair));
    EXPECT_FALSE(matches_kind(Value(Tuple{Value(1.0)}), pair));
}

TEST(ValueKind, ViolationsAndJson) {
    EXPECT_EQ(kind_violation(ValueKind::real()), "");
    EXPECT_NE(kind_violation(ValueKind::tuple({})), "");
    const auto k = ValueKind::tuple({ValueKind::categorical({"x"}), ValueKind::complex()});
    EXPECT_EQ(kind_from_json(kind_to_json(k)), k);
    EXPECT_FALSE(describe(k).empty());
}
