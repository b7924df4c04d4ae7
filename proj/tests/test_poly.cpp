#include <gtest/gtest.h>

#include <cmath>

#include "hocp/json_io.hpp"
#include "hocp/poly.hpp"

using namespace hocp;

namespace {

VarSpace xy() {
  return VarSpace::make({"x1", "x2"}, {VarRole::State, VarRole::State});
}

VarSpace tx() {
  return VarSpace::make({"t", "x"}, {VarRole::Time, VarRole::State});
}

Polynomial var(const VarSpace& s, const std::string& n) { return Polynomial::variable(s, n); }

}  // namespace

TEST(VarSpace, InvariantsEnforced) {
  EXPECT_NO_THROW(VarSpace::make({"t", "x", "u"}, {VarRole::Time, VarRole::State, VarRole::Control}));
  EXPECT_THROW(VarSpace::make({"x", "t"}, {VarRole::State, VarRole::Time}), Error);
  EXPECT_THROW(VarSpace::make({"t", "s"}, {VarRole::Time, VarRole::Time}), Error);
  EXPECT_THROW(VarSpace::make({"t", "u", "x"}, {VarRole::Time, VarRole::Control, VarRole::State}), Error);
  EXPECT_THROW(VarSpace::make({"x", "x"}, {VarRole::State, VarRole::State}), Error);
  EXPECT_THROW(VarSpace::make({"x"}, {VarRole::State, VarRole::State}), Error);
}

TEST(Monomials, GradedLexOrder) {
  // Over (t, x): 1, t, x, t^2, t*x, x^2.
  const std::vector<Expo> want = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
  const auto got = monomials_up_to(2, 2);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(got[i], want[i]);
  for (std::size_t i = 0; i + 1 < got.size(); ++i) {
    EXPECT_TRUE(grlex_before(got[i], got[i + 1]));
    EXPECT_FALSE(grlex_before(got[i + 1], got[i]));
  }
}

TEST(Monomials, CountMatchesBinomial) {
  for (int n = 0; n <= 4; ++n)
    for (int d = 0; d <= 5; ++d)
      EXPECT_EQ(static_cast<long long>(monomials_up_to(n, d).size()), nchoosek(n + d, d))
          << "n=" << n << " d=" << d;
}

TEST(Monomials, BinomialExact) {
  EXPECT_EQ(nchoosek(0, 0), 1);
  EXPECT_EQ(nchoosek(5, 2), 10);
  EXPECT_EQ(nchoosek(40, 20), 137846528820LL);
  EXPECT_EQ(nchoosek(3, 5), 0);
}

TEST(Poly, AddOracle) {
  const auto s = xy();
  const auto p = var(s, "x1") + 2.0 * var(s, "x2");
  const auto q = 3.0 * var(s, "x1") - var(s, "x2");
  const auto r = p + q;  // 4*x1 + x2
  EXPECT_EQ(r.terms.size(), 2u);
  EXPECT_DOUBLE_EQ(r.coefficient({1, 0}), 4.0);
  EXPECT_DOUBLE_EQ(r.coefficient({0, 1}), 1.0);
}

TEST(Poly, MulOracle) {
  const auto s = xy();
  const auto r = (var(s, "x1") + var(s, "x2")) * (var(s, "x1") - var(s, "x2"));  // x1^2 - x2^2
  EXPECT_EQ(r.terms.size(), 2u);
  EXPECT_DOUBLE_EQ(r.coefficient({2, 0}), 1.0);
  EXPECT_DOUBLE_EQ(r.coefficient({0, 2}), -1.0);
  EXPECT_DOUBLE_EQ(r.coefficient({1, 1}), 0.0);
}

TEST(Poly, PartialOracle) {
  const auto s = xy();
  const auto x1 = var(s, "x1"), x2 = var(s, "x2");
  const auto p = x1 * x1 * x2 + 3.0 * x2 * x2 * x2;
  const auto d = partial(p, "x2");  // x1^2 + 9*x2^2
  EXPECT_EQ(d.terms.size(), 2u);
  EXPECT_DOUBLE_EQ(d.coefficient({2, 0}), 1.0);
  EXPECT_DOUBLE_EQ(d.coefficient({0, 2}), 9.0);
  EXPECT_TRUE(partial(p, "x1").coefficient({1, 1}) == 2.0);
}

TEST(Poly, EvalOracle) {
  const auto s = xy();
  const auto x1 = var(s, "x1"), x2 = var(s, "x2");
  const auto p = x1 * x1 + x2 * x2 - 0.3;
  EXPECT_NEAR(eval(p, {0.3, 1.0}), 0.79, 1e-15);
}

TEST(Poly, RingAxiomsExactOnIntegers) {
  const auto s = xy();
  const auto x1 = var(s, "x1"), x2 = var(s, "x2");
  const auto a = 2.0 * x1 * x1 - 3.0 * x2 + 1.0;
  const auto b = x1 * x2 + 4.0;
  const auto c = 5.0 * x2 * x2 - x1;
  EXPECT_TRUE(((a + b) - (b + a)).is_zero());
  EXPECT_TRUE((a * b - b * a).is_zero());
  EXPECT_TRUE(((a + b) + c - (a + (b + c))).is_zero());
  EXPECT_TRUE(((a * b) * c - a * (b * c)).is_zero());
  EXPECT_TRUE((a * (b + c) - (a * b + a * c)).is_zero());
  EXPECT_TRUE((a - a).is_zero());
  EXPECT_TRUE((a * 0.0).is_zero());
}

TEST(Poly, ZeroPruning) {
  const auto s = xy();
  const auto x1 = var(s, "x1"), x2 = var(s, "x2");
  const auto r = (x1 - x2) * (x1 + x2);
  EXPECT_EQ(r.terms.count({1, 1}), 0u);
  EXPECT_TRUE(Polynomial::constant(s, 0.0).is_zero());
  EXPECT_EQ((x1 + 1.0 - x1 - 1.0).terms.size(), 0u);
}

TEST(Poly, DegreeAndSpaceGuards) {
  const auto s = xy();
  const auto x1 = var(s, "x1");
  EXPECT_EQ((x1 * x1 * x1 + x1).degree(), 3);
  EXPECT_EQ(Polynomial::constant(s, 2.0).degree(), 0);
  const auto other = tx();
  EXPECT_THROW(x1 + var(other, "x"), Error);
  EXPECT_THROW(x1 * var(other, "x"), Error);
}

TEST(Poly, ComposeMatchesPointwiseEval) {
  const auto s = tx();
  const auto t = var(s, "t"), x = var(s, "x");
  const auto p = t * t * x + 3.0 * x - t + 0.5;
  const auto target = VarSpace::make({"y"}, {VarRole::State});
  const auto y = var(target, "y");
  const std::vector<Polynomial> images = {y + 1.0, y * y};
  const auto comp = compose(p, target, images);
  for (double yv : {-1.3, -0.4, 0.0, 0.7, 2.1}) {
    const double direct = eval(p, {yv + 1.0, yv * yv});
    EXPECT_NEAR(eval(comp, {yv}), direct, 1e-12 * std::max(1.0, std::abs(direct)));
  }
}

TEST(Poly, LiftByName) {
  const auto small = VarSpace::make({"x1"}, {VarRole::State});
  const auto big = VarSpace::make({"t", "x1", "x2"}, {VarRole::Time, VarRole::State, VarRole::State});
  const auto p = var(small, "x1") * var(small, "x1") + 2.0;
  const auto q = lift(p, big);
  EXPECT_DOUBLE_EQ(q.coefficient({0, 2, 0}), 1.0);
  EXPECT_DOUBLE_EQ(q.coefficient({0, 0, 0}), 2.0);
  EXPECT_THROW(lift(var(xy(), "x2"), small), Error);
}

TEST(Poly, TruncateDropsHighDegrees) {
  const auto s = xy();
  const auto x1 = var(s, "x1"), x2 = var(s, "x2");
  const auto p = x1 * x1 * x2 + x1 * x2 + 1.0;
  const auto q = truncate(p, 2);
  EXPECT_DOUBLE_EQ(q.coefficient({2, 1}), 0.0);
  EXPECT_DOUBLE_EQ(q.coefficient({1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(q.coefficient({0, 0}), 1.0);
}

TEST(Poly, TaylorTrigCoefficients) {
  const auto s = VarSpace::make({"a"}, {VarRole::State});
  const auto sin3 = taylor_trig(s, Trig::Sin, "a", 3);
  EXPECT_DOUBLE_EQ(sin3.coefficient({1}), 1.0);
  EXPECT_DOUBLE_EQ(sin3.coefficient({3}), -1.0 / 6.0);
  EXPECT_EQ(sin3.terms.size(), 2u);
  const auto cos2 = taylor_trig(s, Trig::Cos, "a", 2);
  EXPECT_DOUBLE_EQ(cos2.coefficient({0}), 1.0);
  EXPECT_DOUBLE_EQ(cos2.coefficient({2}), -0.5);
  EXPECT_EQ(cos2.terms.size(), 2u);
  // Quality near zero: |sin(a) - p(a)| = O(a^5).
  for (double a : {-0.3, -0.1, 0.05, 0.2}) {
    EXPECT_NEAR(eval(sin3, {a}), std::sin(a), 1e-4);
    EXPECT_NEAR(eval(cos2, {a}), std::cos(a), 1e-3);
  }
}

TEST(PolyJson, RoundTripBitExact) {
  const auto s = VarSpace::make({"t", "x1", "u1"}, {VarRole::Time, VarRole::State, VarRole::Control});
  const auto t = var(s, "t"), x1 = var(s, "x1"), u1 = var(s, "u1");
  const auto p = 0.1 * t * t * x1 - (1.0 / 3.0) * u1 + 2.5 * x1 * u1 + 7.0;
  const auto j = poly_to_json(p);
  const auto q = poly_from_json(j, s, "test");
  ASSERT_EQ(p.terms.size(), q.terms.size());
  auto it = p.terms.begin();
  auto jt = q.terms.begin();
  for (; it != p.terms.end(); ++it, ++jt) {
    EXPECT_EQ(it->first, jt->first);
    EXPECT_EQ(it->second, jt->second);  // bit-identical doubles
  }
  EXPECT_EQ(poly_to_json(q), j);
}

TEST(PolyJson, RejectsMalformedInput) {
  const auto s = xy();
  json bad_vars = {{"vars", {"x2", "x1"}}, {"terms", json::array()}};
  EXPECT_THROW(poly_from_json(bad_vars, s, "test"), Error);
  json bad_len = {{"vars", {"x1", "x2"}}, {"terms", {{{"exp", {1}}, {"coef", 1.0}}}}};
  EXPECT_THROW(poly_from_json(bad_len, s, "test"), Error);
  json dup = {{"vars", {"x1", "x2"}},
              {"terms", {{{"exp", {1, 0}}, {"coef", 1.0}}, {{"exp", {1, 0}}, {"coef", 2.0}}}}};
  EXPECT_THROW(poly_from_json(dup, s, "test"), Error);
  json neg = {{"vars", {"x1", "x2"}}, {"terms", {{{"exp", {-1, 0}}, {"coef", 1.0}}}}};
  EXPECT_THROW(poly_from_json(neg, s, "test"), Error);
}
