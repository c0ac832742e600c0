#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "hflow/matrix_param.hpp"
#include "hflow/reference.hpp"

using namespace hflow;

namespace {

Mat3 random_mat3(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Mat3 K;
  for (int i = 0; i < 9; ++i) K(i / 3, i % 3) = n(rng);
  return K;
}

Vec4 random_trace_free(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec4 d(n(rng), n(rng), n(rng), n(rng));
  return d.array() - d.mean();
}

Mat4 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Mat4 A;
  for (int i = 0; i < 16; ++i) A(i / 4, i % 4) = n(rng);
  Eigen::HouseholderQR<Mat4> qr(A);
  return qr.householderQ();
}

/// Random point of the commuting variety with class (a, b), normalized.
HalfFlatPair random_pair(std::mt19937_64& rng, double a, double b) {
  for (;;) {
    const Mat4 O = random_rotation(rng);
    const Mat4 Q = O * random_trace_free(rng).asDiagonal() * O.transpose();
    const Mat4 P = O * random_trace_free(rng).asDiagonal() * O.transpose();
    HalfFlatPair p{Sym4::project(Q), Sym4::project(P), a, b};
    if (!(lambda_c(p.Q, a, b) < 0.0)) continue;
    const Mat4 Pm = p.P.matrix();
    if ((Pm * Pm * Pm).trace() == 0.0) continue;
    return normalize_momentum(p);
  }
}

// e_i in terms of f^{kl}, in the order f12, f13, f14, f23, f24, f34.
Eigen::Matrix<double, 6, 6> e_in_f() {
  Eigen::Matrix<double, 6, 6> E;
  E.col(0) << 1, 0, 0, 0, 0, 1;   // f12 + f34
  E.col(1) << 1, 0, 0, 0, 0, -1;  // f12 - f34
  E.col(2) << 0, 1, 0, 0, -1, 0;  // f13 - f24
  E.col(3) << 0, 1, 0, 0, 1, 0;   // f13 + f24
  E.col(4) << 0, 0, 1, 1, 0, 0;   // f14 + f23
  E.col(5) << 0, 0, 1, -1, 0, 0;  // f14 - f23
  return E;
}

/// Action of X in so(4) on two-forms, in the e-basis.
Eigen::Matrix<double, 6, 6> so4_on_e(const Mat4& X) {
  const int pairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  auto f = [&](int i, int j) {
    Eigen::Matrix<double, 6, 1> v = Eigen::Matrix<double, 6, 1>::Zero();
    if (i == j) return v;
    for (int c = 0; c < 6; ++c) {
      if (pairs[c][0] == i && pairs[c][1] == j) v(c) = 1;
      if (pairs[c][0] == j && pairs[c][1] == i) v(c) = -1;
    }
    return v;
  };
  Eigen::Matrix<double, 6, 6> M = Eigen::Matrix<double, 6, 6>::Zero();
  for (int c = 0; c < 6; ++c) {
    const int i = pairs[c][0], j = pairs[c][1];
    for (int k = 0; k < 4; ++k) M.col(c) += X(k, i) * f(k, j) + X(k, j) * f(i, k);
  }
  const Eigen::Matrix<double, 6, 6> E = e_in_f();
  return E.inverse() * M * E;
}

}  // namespace

TEST(MatrixParam, IsoExamples) {
  EXPECT_LT((iso3to4(Mat3::Identity()).matrix() - D4().matrix()).cwiseAbs().maxCoeff(), 0.0 + 1e-15);
  EXPECT_EQ(iso3to4(Mat3::Zero()).norm(), 0.0);
  Mat3 K = Mat3::Zero();
  K(2, 0) = 1.0;  // e5 (x) e2
  const Mat4 S = iso3to4(K).matrix();
  Mat4 expect = Mat4::Zero();
  expect(0, 2) = expect(2, 0) = 1.0;
  expect(1, 3) = expect(3, 1) = -1.0;
  EXPECT_EQ((S - expect).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT((iso4to3(D4()) - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MatrixParam, IsoRoundTrip) {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Mat3 K = random_mat3(rng);
    worst = std::max(worst, (iso4to3(iso3to4(K)) - K).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-13);
}

TEST(MatrixParam, DictionaryOnIdentity) {
  for (double r : dictionary_residuals(Mat3::Identity())) EXPECT_LT(r, 1e-14);
}

TEST(MatrixParam, DictionaryOnRandomMatrices) {
  std::mt19937_64 rng(12);
  std::array<double, 10> worst{};
  for (int i = 0; i < 1000; ++i) {
    const auto r = dictionary_residuals(random_mat3(rng));
    for (int k = 0; k < 10; ++k) worst[k] = std::max(worst[k], r[k]);
  }
  for (int k = 0; k < 10; ++k) EXPECT_LT(worst[k], 1e-10) << "row " << k;
}

TEST(MatrixParam, LastDictionaryRowNeedsTranspose) {
  std::mt19937_64 rng(13);
  const Mat3 K = random_mat3(rng);
  EXPECT_GT(dictionary_last_row_untransposed(K), 1e-3);
  const Mat3 Ks = K + K.transpose();
  EXPECT_LT(dictionary_last_row_untransposed(Ks), 1e-12);
}

TEST(MatrixParam, Equivariance) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 5; ++trial) {
    Mat4 Y;
    for (int i = 0; i < 16; ++i) Y(i / 4, i % 4) = n(rng);
    const Mat4 X = 0.5 * (Y - Y.transpose());
    const auto Me = so4_on_e(X);
    const int ia[3] = {0, 2, 4}, ib[3] = {1, 3, 5};
    Mat3 MA, MB;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        MA(i, j) = Me(ia[i], ia[j]);
        MB(i, j) = Me(ib[i], ib[j]);
      }
    const Mat3 R1 = MA.exp(), R2 = MB.exp();
    const Mat4 O = X.exp();
    EXPECT_LT((R1 * R1.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    const Mat3 K = random_mat3(rng);
    const Mat4 lhs = iso3to4(R1 * K * R2.transpose()).matrix();
    const Mat4 rhs = O * iso3to4(K).matrix() * O.transpose();
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(MatrixParam, Sym4Validation) {
  Mat4 m = Mat4::Identity();
  EXPECT_THROW(Sym4{m}, Error);
  m = D4().matrix();
  m(0, 1) = 1.0;
  EXPECT_THROW(Sym4{m}, Error);
  Mat4 small = D4().matrix();
  small(0, 0) += 1e-11;
  EXPECT_NEAR(Sym4(small).matrix().trace(), 0.0, 1e-15);
}

TEST(MatrixParam, Adjugate) {
  std::mt19937_64 rng(15);
  for (int i = 0; i < 10; ++i) {
    const Mat3 K = random_mat3(rng);
    EXPECT_LT((K * adjugate<3>(K) - K.determinant() * Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    Mat4 A;
    for (int j = 0; j < 16; ++j) A(j / 4, j % 4) = K(j % 3, (j / 3) % 3) + 0.1 * j;
    EXPECT_LT((A * adjugate<4>(A) - A.determinant() * Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(MatrixParam, RrOnBasePoint) {
  const RData d = R_r(D4(), 0.0, 0.0);
  EXPECT_LT((d.R.matrix() - Sym4::diag(3, -1, -1, -1).matrix()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(d.r, -0.75, 1e-15);
  const RData z = R_r(Sym4{}, 0.7, -1.3);
  EXPECT_EQ(z.R.norm(), 0.0);
  EXPECT_NEAR(z.r, std::pow(0.7 * 1.3, 2) / 4.0, 1e-15);
}

TEST(MatrixParam, BalancedBranchAgrees) {
  std::mt19937_64 rng(16);
  std::normal_distribution<double> n;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Mat4 O = random_rotation(rng);
    const Sym4 Q = Sym4::project(O * random_trace_free(rng).asDiagonal() * O.transpose());
    const double a = n(rng);
    const RData g = R_r(Q, a, -a), h = R_r_balanced(Q, a);
    worst = std::max({worst, (g.R.matrix() - h.R.matrix()).cwiseAbs().maxCoeff(), std::abs(g.r - h.r)});
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(MatrixParam, RhatOnNearlyKaehlerLine) {
  const double q = 0.8;
  const Sym4 Rh = Rhat(q * D4(), 0.0, 0.0);
  EXPECT_LT((Rh.matrix() + 2.0 / std::sqrt(3.0) * q * D4().matrix()).cwiseAbs().maxCoeff(), 1e-14);
  try {
    Rhat(Sym4{}, 0.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateStructure);
  }
}

TEST(MatrixParam, RhatBalancedForm) {
  std::mt19937_64 rng(17);
  int checked = 0;
  while (checked < 20) {
    const Mat4 O = random_rotation(rng);
    const Sym4 Q = Sym4::project(O * random_trace_free(rng).asDiagonal() * O.transpose());
    const double a = 0.3;
    const Mat4 Qh = Q.matrix() + a * Mat4::Identity();
    if (!(Qh.determinant() < 0.0)) continue;
    ++checked;
    const Mat4 expect = 2.0 * trace_free(adjugate<4>(Qh)) / std::sqrt(-Qh.determinant());
    EXPECT_LT((Rhat(Q, a, -a).matrix() - expect).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(MatrixParam, RVanishingForcesNonNegativeR) {
  // Rank-2 Qhat has vanishing adjugate, so R = 0 and r = det(Qhat) / 4 = 0.
  std::mt19937_64 rng(18);
  std::normal_distribution<double> n;
  for (int i = 0; i < 100; ++i) {
    const Mat4 O = random_rotation(rng);
    const Vec4 d(n(rng), n(rng), 0.0, 0.0);
    const Mat4 Qh = O * d.asDiagonal() * O.transpose();
    const double a = Qh.trace() / 4.0;
    const Sym4 Q = Sym4::project(Qh - a * Mat4::Identity());
    const RData r = R_r(Q, a, -a);
    EXPECT_LT(r.R.norm(), 1e-10);
    EXPECT_GE(r.r, -1e-12);
  }
}

TEST(MatrixParam, LambdaMatchesForms) {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> n;
  for (int i = 0; i < 100; ++i) {
    const Mat3 N = random_mat3(rng);
    const double a = n(rng), b = n(rng);
    const double lam = hitchin_lambda(gamma_from_matrix(N, a, b));
    EXPECT_NEAR(lambda_c(iso3to4(N), a, b), lam, 1e-9 * std::max(1.0, std::abs(lam)));
  }
}

TEST(MatrixParam, CommutingIffPrimitive) {
  std::mt19937_64 rng(20);
  for (int i = 0; i < 10; ++i) {
    const HalfFlatPair p = random_pair(rng, 0.3, 0.7);
    const auto [w, g] = forms_from_pair(p);
    EXPECT_LT(wedge(g, w).max_abs(), 1e-12 * w.max_abs() * g.max_abs());
    const HalfFlatPair nc{p.Q, iso3to4(random_mat3(rng)), p.a, p.b};
    const auto [w2, g2] = forms_from_pair(nc);
    EXPECT_GT(wedge(g2, w2).max_abs(), 1e-6);
  }
}

TEST(MatrixParam, PairFormsRoundTrip) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 20; ++i) {
    const HalfFlatPair p = random_pair(rng, 0.2 * i - 1.0, 0.4);
    const auto [w, g] = forms_from_pair(p);
    EXPECT_NEAR(normalization_residual_forms(w, g), 0.0, 1e-10 * std::abs(top(wedge(wedge(w, w), w))));
    EXPECT_NEAR(hamiltonian(p), 0.0, 1e-10);
    const HalfFlatPair back = pair_from_forms(w, g);
    EXPECT_LT((back.Q.matrix() - p.Q.matrix()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((back.P.matrix() - p.P.matrix()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(back.a, p.a, 1e-10);
    EXPECT_NEAR(back.b, p.b, 1e-10);
  }
}

TEST(MatrixParam, PairFromExamples) {
  const double a = 1.3;
  const auto ex = reference::ex22(a);
  const HalfFlatPair p = pair_from_forms(ex.omega, ex.gamma);
  EXPECT_LT((p.Q.matrix() - 0.5 * a * D4().matrix()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(p.a, a, 1e-12);
  EXPECT_NEAR(p.b, -a, 1e-12);
  EXPECT_NEAR(hamiltonian(p), 0.0, 1e-12);

  const double x = -1.1, alpha = 0.7, c = 0.2;
  const Form3 g4 = x * ext_d(reference::omega0()) + c * (Form3::mono({1, 3, 5}) - Form3::mono({2, 4, 6}));
  const double lam = hitchin_lambda(g4);
  // scale omega so that the pair is normalized
  Form2 w4 = (-1.5 * alpha * x) * reference::omega0();
  const double k = std::cbrt(1.5 * top(wedge(g4, hitchin_dual(g4))) / top(wedge(wedge(w4, w4), w4)));
  w4 *= k;
  (void)lam;
  const HalfFlatPair q = pair_from_forms(w4, g4);
  EXPECT_LT((q.Q.matrix() - x * D4().matrix()).cwiseAbs().maxCoeff(), 1e-12);

  try {
    pair_from_forms(ex.omega + Form2::mono({1, 3}), ex.gamma);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotHalfFlat);
  }
}

TEST(MatrixParam, HamiltonianProperties) {
  for (double t : {0.5, 1.0, 2.0, 5.0}) {
    const double q = -t * t * t / (18.0 * std::sqrt(3.0)), p = -t * t / (6.0 * std::sqrt(3.0));
    const HalfFlatPair nk{q * D4(), p * D4(), 0.0, 0.0};
    EXPECT_LT(std::abs(hamiltonian(nk)), 1e-12 * std::max(1.0, std::sqrt(3.0) * q * q));
    const HalfFlatPair twice{nk.Q, 2.0 * nk.P, 0.0, 0.0};
    const double t3 = (nk.P.matrix() * nk.P.matrix() * nk.P.matrix()).trace();
    EXPECT_NEAR(hamiltonian(twice), -7.0 / 12.0 * t3, 1e-10 * std::abs(t3));
  }
}

TEST(MatrixParam, ClassifyExamples) {
  const double a = 1.0, alpha = reference::ex22_alpha(a);
  const auto e2 = reference::ex22(a);
  const TorsionClass c2 = classify_torsion(pair_from_forms(e2.omega, e2.gamma));
  EXPECT_EQ(c2.type, TorsionType::W1W3);
  const Mat4 D = Sym4::diag(3, -1, -1, -1).matrix();
  EXPECT_LT((c2.P2_0.matrix() - 9 * a * a * alpha * alpha / 8 * D).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((c2.R.matrix() - 9 * a * a * a / 8 * D).cwiseAbs().maxCoeff(), 1e-12);

  const double b = 0.8, a3 = reference::ex23_a(b);
  const auto e3 = reference::ex23(b);
  const TorsionClass c3 = classify_torsion(pair_from_forms(e3.omega, e3.gamma));
  EXPECT_EQ(c3.type, TorsionType::W1W3);
  EXPECT_LT((c3.P2_0.matrix() - 2 * a3 * a3 * D).cwiseAbs().maxCoeff(), 1e-12);
  // R comes out as 2 (3 + sqrt 5) b^3 diag(3, -1, -1, -1)
  EXPECT_LT((c3.R.matrix() - 2 * (3 + std::sqrt(5.0)) * b * b * b * D).cwiseAbs().maxCoeff(), 1e-12);

  EXPECT_EQ(classify_torsion(reference::nearly_kaehler(0.6)).type, TorsionType::NearlyKaehler);

  std::mt19937_64 rng(22);
  EXPECT_EQ(classify_torsion(random_pair(rng, 0.0, 0.0)).type, TorsionType::Generic);
}

TEST(MatrixParam, AdjSqrt) {
  EXPECT_LT((adj_sqrt(Mat3::Identity()) - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
  const Mat3 K = adj_sqrt(Eigen::Vector3d(1, 4, 9).asDiagonal());
  EXPECT_LT((K - Mat3(Eigen::Vector3d(6, 1.5, 2.0 / 3.0).asDiagonal())).cwiseAbs().maxCoeff(), 1e-14);
  std::mt19937_64 rng(23);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Mat3 M = random_mat3(rng);
    if (M.determinant() < 0) M.col(0) *= -1;
    const Mat3 R = adj_sqrt(M);
    EXPECT_GT(R.determinant(), 0.0);
    worst = std::max(worst, (adjugate<3>(R) - M).cwiseAbs().maxCoeff() / M.cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-11);
  try {
    adj_sqrt(-Mat3::Identity());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonPositiveDeterminant);
  }
}

TEST(MatrixParam, NearlyKaehlerSolver) {
  const auto roots = nk_solve();
  ASSERT_EQ(roots.size(), 4u);
  const double u = 8.0 / (9.0 * std::sqrt(3.0));
  for (const Vec4& q : roots) {
    int negative = 0;
    for (int i = 0; i < 4; ++i) {
      if (std::abs(q(i) + 3 * u) < 1e-9) ++negative;
      else EXPECT_NEAR(q(i), u, 1e-9);
    }
    EXPECT_EQ(negative, 1);
  }
}
