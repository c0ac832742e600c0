#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hflow/forms.hpp"
#include "hflow/reference.hpp"

using namespace hflow;

namespace {

template <int K>
Form<K> random_form(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Form<K> f;
  for (int i = 0; i < Form<K>::size; ++i) f[i] = n(rng);
  return f;
}

const double s3 = std::sqrt(3.0);
const double s5 = std::sqrt(5.0);

}  // namespace

TEST(Forms, MaskTablesAreLexicographic) {
  EXPECT_EQ(Form3::size, 20);
  EXPECT_EQ(Form3::mask(0), 0b000111);
  EXPECT_EQ(Form3::mask(1), 0b001011);
  EXPECT_EQ(Form3::mask(19), 0b111000);
  for (int n = 0; n < Form2::size; ++n) EXPECT_EQ(Form2::position(Form2::mask(n)), n);
  EXPECT_EQ(Form<7>::size, 0);
}

TEST(Forms, WedgeBasics) {
  const Form2 e12 = wedge(Form1::mono({1}), Form1::mono({2}));
  EXPECT_EQ(to_string(e12), "+1 e12");
  EXPECT_EQ(wedge(Form1::mono({2}), Form1::mono({1}))[0], -1.0);
  EXPECT_EQ(Form3::mono({3, 5, 2})[Form3::position(0b010110)], 1.0);  // e352 = e235
  EXPECT_EQ(Form2::mono({5, 1})[Form2::position(0b010001)], -1.0);
}

TEST(Forms, OmegaCubedIsSixVolume) {
  const Form2 w0 = reference::omega0();
  EXPECT_DOUBLE_EQ(top(wedge(wedge(w0, w0), w0)), 6.0);
}

TEST(Forms, GradedAnticommutativity) {
  std::mt19937_64 rng(1);
  const auto a = random_form<2>(rng);
  const auto b = random_form<3>(rng);
  const auto c = random_form<1>(rng);
  const auto d = random_form<3>(rng);
  EXPECT_LT((wedge(a, b) - wedge(b, a)).max_abs(), 1e-14);
  EXPECT_LT((wedge(c, d) + wedge(d, c)).max_abs(), 1e-14);
  EXPECT_LT((wedge(c, c)).max_abs(), 1e-15);
  EXPECT_LT((wedge(b, d) + wedge(d, b)).max_abs(), 1e-14);
  EXPECT_EQ(wedge(b, wedge(b, c)).size, 0);
}

TEST(Forms, StructureEquations) {
  EXPECT_EQ(to_string(ext_d(Form1::mono({1}))), "+1 e35");
  EXPECT_EQ(to_string(ext_d(Form1::mono({2}))), "+1 e46");
  EXPECT_EQ(to_string(ext_d(Form1::mono({3}))), "-1 e15");
  EXPECT_EQ(to_string(ext_d(Form1::mono({4}))), "-1 e26");
  EXPECT_EQ(to_string(ext_d(Form1::mono({5}))), "+1 e13");
  EXPECT_EQ(to_string(ext_d(Form1::mono({6}))), "+1 e24");
  const Form3 expect = Form3::mono({3, 5, 2}) - Form3::mono({1, 4, 6});
  EXPECT_LT((ext_d(Form2::mono({1, 2})) - expect).max_abs(), 1e-15);
  // d(e34) = e514 - e362 and d(e56) = e136 - e524
  EXPECT_LT((ext_d(Form2::mono({3, 4})) - (Form3::mono({5, 1, 4}) - Form3::mono({3, 6, 2}))).max_abs(), 1e-15);
  EXPECT_LT((ext_d(Form2::mono({5, 6})) - (Form3::mono({1, 3, 6}) - Form3::mono({5, 2, 4}))).max_abs(), 1e-15);
}

TEST(Forms, DSquaredVanishes) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) EXPECT_LT(ext_d(ext_d(random_form<1>(rng))).max_abs(), 1e-13);
  for (int n = 0; n < Form2::size; ++n) {
    Form2 f;
    f[n] = 1.0;
    EXPECT_EQ(ext_d(ext_d(f)).max_abs(), 0.0);
  }
  for (int n = 0; n < Form3::size; ++n) {
    Form3 f;
    f[n] = 1.0;
    EXPECT_EQ(ext_d(ext_d(f)).max_abs(), 0.0);
  }
}

TEST(Forms, LeibnizRule) {
  std::mt19937_64 rng(3);
  const auto a = random_form<1>(rng);
  const auto b = random_form<2>(rng);
  EXPECT_LT((ext_d(wedge(a, b)) - (wedge(ext_d(a), b) - wedge(a, ext_d(b)))).max_abs(), 1e-12);
}

TEST(Forms, InteriorIsAntiderivation) {
  std::mt19937_64 rng(4);
  const auto a = random_form<2>(rng);
  const auto b = random_form<3>(rng);
  Vec6 v;
  v << 0.3, -1.0, 2.0, 0.5, 0.0, 1.5;
  const Form4 lhs = interior(v, wedge(a, b));
  const Form4 rhs = wedge(interior(v, a), b) + wedge(a, interior(v, b));
  EXPECT_LT((lhs - rhs).max_abs(), 1e-12);
}

TEST(Forms, LambdaOfReferenceForms) {
  const auto ex = reference::ex22(2.0);
  EXPECT_NEAR(hitchin_lambda(ex.gamma), -27.0, 1e-10);
  // x d(omega0) + a (e135 - e246) with a = 0, x = 1
  EXPECT_NEAR(hitchin_lambda(ext_d(reference::omega0())), -3.0, 1e-12);
  EXPECT_EQ(hitchin_lambda(Form3::mono({1, 3, 5})), 0.0);
}

TEST(Forms, LambdaIsQuartic) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto g = random_form<3>(rng);
    const double t = 0.5 + 0.1 * i;
    EXPECT_NEAR(hitchin_lambda(t * g), std::pow(t, 4) * hitchin_lambda(g), 1e-10 * std::abs(std::pow(t, 4) * hitchin_lambda(g)) + 1e-12);
  }
}

TEST(Forms, DualOfBalancedExample) {
  const double a = 2.0;
  const auto ex = reference::ex22(a);
  const Form3 expect = (-s3 / 2.0 * a) * reference::six_term(1.0);
  EXPECT_LT((hitchin_dual(ex.gamma) - expect).max_abs(), 1e-12);
  EXPECT_THROW(hitchin_dual(Form3::mono({1, 3, 5})), Error);
  try {
    hitchin_dual(Form3::mono({1, 3, 5}));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotStable);
  }
}

TEST(Forms, DualOfFlatExample) {
  const double b = 0.7;
  const auto ex = reference::ex23(b);
  const double lam = hitchin_lambda(ex.gamma);
  EXPECT_NEAR(lam, -8.0 * (1.0 + s5) * std::pow(b, 4), 1e-12);
  const Form3 lhs = -std::sqrt(-lam) * hitchin_dual(ex.gamma);
  const double b3 = b * b * b;
  const Form3 expect = 2.0 * (s5 - 1.0) * b3 * (Form3::mono({1, 3, 5}) + Form3::mono({2, 4, 6})) +
                       2.0 * (3.0 + s5) * b3 * reference::six_term(1.0);
  EXPECT_LT((lhs - expect).max_abs(), 1e-12);
}

TEST(Forms, DualIsInvolutiveUpToSign) {
  std::mt19937_64 rng(6);
  int checked = 0;
  for (int i = 0; i < 50 && checked < 10; ++i) {
    const auto g = random_form<3>(rng);
    if (hitchin_lambda(g) >= 0.0) continue;
    ++checked;
    EXPECT_LT((hitchin_dual(hitchin_dual(g)) + g).max_abs(), 1e-10 * g.max_abs());
    EXPECT_LT((hitchin_dual(2.5 * g) - 2.5 * hitchin_dual(g)).max_abs(), 1e-10 * g.max_abs());
    const Mat6 J = hitchin_J(g);
    EXPECT_LT((J * J + Mat6::Identity()).cwiseAbs().maxCoeff(), 1e-10);
  }
  EXPECT_EQ(checked, 10);
}

TEST(Forms, MetricOfBalancedExample) {
  const double a = 1.0, alpha = reference::ex22_alpha(a);
  const auto ex = reference::ex22(a);
  const MetricTensor g = su3_metric(ex.omega, ex.gamma);
  EXPECT_TRUE(g.positive_definite());
  const double c = s3 / 2.0 * alpha * a;
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(g(i, i), c, 1e-12);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(g(2 * i, 2 * i + 1), c / 2.0, 1e-12);
  EXPECT_NEAR(g(0, 2), 0.0, 1e-12);
  EXPECT_NEAR(g(1, 4), 0.0, 1e-12);
}

TEST(Forms, MetricOfOneFunctionFamily) {
  const double x = -1.3, a = 0.4, alpha = 0.8;
  const Form2 w = (-1.5 * alpha * x) * reference::omega0();
  const Form3 gm = x * ext_d(reference::omega0()) + a * (Form3::mono({1, 3, 5}) - Form3::mono({2, 4, 6}));
  EXPECT_NEAR(hitchin_lambda(gm), (a - 3 * x) * std::pow(x + a, 3), 1e-12);
  const MetricTensor g = su3_metric(w, gm);
  const double den = std::sqrt((3 * x - a) * (x + a));
  EXPECT_NEAR(g(0, 0), -3 * alpha * x * x / den, 1e-12);
  EXPECT_NEAR(g(0, 1), -1.5 * alpha * x * (a - x) / den, 1e-12);
}

TEST(Forms, NegatedOmegaIsIndefinite) {
  const auto ex = reference::ex22(1.0);
  const MetricTensor g = su3_metric(-ex.omega, ex.gamma);
  EXPECT_FALSE(g.positive_definite());
}

TEST(Forms, NonPrimitivePairIsRejected) {
  const auto ex = reference::ex22(1.0);
  try {
    su3_metric(ex.omega + Form2::mono({1, 3}), ex.gamma);
    FAIL() << "expected NotPrimitive";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotPrimitive);
  }
}

TEST(Forms, NormalizationResidual) {
  const auto ex = reference::ex22(2.0);
  EXPECT_NEAR(normalization_residual_forms(ex.omega, ex.gamma), 0.0, 1e-12);
  const auto ey = reference::ex23(0.9);
  EXPECT_NEAR(normalization_residual_forms(ey.omega, ey.gamma), 0.0, 1e-12);
  // Doubling omega multiplies 2 omega^3 by 8, so the residual becomes -7 * 2 omega^3.
  const double w3 = top(wedge(wedge(ex.omega, ex.omega), ex.omega));
  EXPECT_NEAR(normalization_residual_forms(2.0 * ex.omega, ex.gamma), -14.0 * w3, 1e-10);
}

TEST(Forms, CohomologyClass) {
  const auto ex = reference::ex22(1.7);
  const CohomologyClass c = cohomology_class(ex.gamma);
  EXPECT_NEAR(c.a, 1.7, 1e-12);
  EXPECT_NEAR(c.b, -1.7, 1e-12);
  EXPECT_LT((c.N - 0.85 * Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  const CohomologyClass z = cohomology_class(ext_d(Form2::mono({1, 2})));
  EXPECT_NEAR(z.a, 0.0, 1e-14);
  EXPECT_NEAR(z.b, 0.0, 1e-14);
  const Form3 s4 = -0.6 * ext_d(reference::omega0()) + 0.3 * (Form3::mono({1, 3, 5}) - Form3::mono({2, 4, 6}));
  const CohomologyClass c4 = cohomology_class(s4);
  EXPECT_NEAR(c4.a, 0.3, 1e-12);
  EXPECT_NEAR(c4.b, -0.3, 1e-12);
  try {
    cohomology_class(Form3::mono({1, 2, 3}));
    FAIL() << "expected NotClosed";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotClosed);
  }
}

TEST(Forms, PrettyPrinter) {
  const Form3 f = 2.0 * Form3::mono({1, 3, 5}) - Form3::mono({2, 4, 6});
  EXPECT_EQ(to_string(f), "+2 e135 -1 e246");
  EXPECT_EQ(to_string(Form3{}), "0");
}
