#pragma once

// Half-flat pairs as commuting trace-free symmetric 4x4 matrices.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hflow/error.hpp"
#include "hflow/forms.hpp"

namespace hflow {

using Mat4 = Eigen::Matrix4d;
using Vec4 = Eigen::Vector4d;

inline Mat4 trace_free(const Mat4& m) { return m - (m.trace() / 4.0) * Mat4::Identity(); }

/// Trace-free symmetric 4x4 matrix.
class Sym4 {
 public:
  Sym4() : m_(Mat4::Zero()) {}

  /// Validates symmetry and removes a trace below 1e-9 (relative); larger traces are rejected.
  explicit Sym4(const Mat4& m) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw Error(Errc::NotSymmetric, "matrix is not symmetric");
    if (std::abs(m.trace()) > 1e-9 * scale)
      throw Error(Errc::NotTraceFree, "trace " + std::to_string(m.trace()) + " is not zero");
    m_ = trace_free(0.5 * (m + m.transpose()));
  }

  /// Symmetric trace-free part of an arbitrary matrix.
  static Sym4 project(const Mat4& m) {
    Sym4 s;
    s.m_ = trace_free(0.5 * (m + m.transpose()));
    return s;
  }

  static Sym4 diag(const Vec4& d) { return Sym4(Mat4(d.asDiagonal())); }
  static Sym4 diag(double d0, double d1, double d2, double d3) { return diag(Vec4(d0, d1, d2, d3)); }

  const Mat4& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }
  Vec4 diagonal() const { return m_.diagonal(); }
  double norm() const { return m_.norm(); }

  friend Sym4 operator+(const Sym4& a, const Sym4& b) { return raw(a.m_ + b.m_); }
  friend Sym4 operator-(const Sym4& a, const Sym4& b) { return raw(a.m_ - b.m_); }
  friend Sym4 operator*(double s, const Sym4& a) { return raw(s * a.m_); }
  friend Sym4 operator*(const Sym4& a, double s) { return raw(s * a.m_); }

 private:
  static Sym4 raw(const Mat4& m) {
    Sym4 s;
    s.m_ = m;
    return s;
  }
  Mat4 m_;
};

/// diag(-3, 1, 1, 1), the image of the identity.
inline Sym4 D4() { return Sym4::diag(-3, 1, 1, 1); }

inline Sym4 iso3to4(const Mat3& K) {
  auto k = [&](int i, int j) { return K(i - 1, j - 1); };
  Mat4 S;
  S << -k(1, 1) - k(2, 2) - k(3, 3), k(2, 3) - k(3, 2), -k(1, 3) + k(3, 1), k(1, 2) - k(2, 1),
      k(2, 3) - k(3, 2), -k(1, 1) + k(2, 2) + k(3, 3), -k(1, 2) - k(2, 1), -k(1, 3) - k(3, 1),
      -k(1, 3) + k(3, 1), -k(1, 2) - k(2, 1), k(1, 1) - k(2, 2) + k(3, 3), -k(2, 3) - k(3, 2),
      k(1, 2) - k(2, 1), -k(1, 3) - k(3, 1), -k(2, 3) - k(3, 2), k(1, 1) + k(2, 2) - k(3, 3);
  return Sym4::project(S);
}

inline Mat3 iso4to3(const Sym4& s) {
  const Mat4& S = s.matrix();
  Mat3 K;
  K(0, 0) = 0.5 * (S(2, 2) + S(3, 3));
  K(1, 1) = 0.5 * (S(1, 1) + S(3, 3));
  K(2, 2) = 0.5 * (S(1, 1) + S(2, 2));
  K(1, 2) = 0.5 * (S(0, 1) - S(2, 3));
  K(2, 1) = 0.5 * (-S(0, 1) - S(2, 3));
  K(0, 2) = 0.5 * (-S(0, 2) - S(1, 3));
  K(2, 0) = 0.5 * (S(0, 2) - S(1, 3));
  K(0, 1) = 0.5 * (S(0, 3) - S(1, 2));
  K(1, 0) = 0.5 * (-S(0, 3) - S(1, 2));
  return K;
}

/// Transpose of the cofactor matrix.
template <int N>
Eigen::Matrix<double, N, N> adjugate(const Eigen::Matrix<double, N, N>& M) {
  Eigen::Matrix<double, N, N> A;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      Eigen::Matrix<double, N - 1, N - 1> minor;
      for (int r = 0, rr = 0; r < N; ++r) {
        if (r == j) continue;
        for (int c = 0, cc = 0; c < N; ++c) {
          if (c == i) continue;
          minor(rr, cc++) = M(r, c);
        }
        ++rr;
      }
      A(i, j) = (((i + j) % 2) ? -1.0 : 1.0) * minor.determinant();
    }
  return A;
}

namespace detail {

template <class A, class B>
double rel_diff(const A& lhs, const B& rhs) {
  const double n = std::max(lhs.cwiseAbs().maxCoeff(), rhs.cwiseAbs().maxCoeff());
  const double d = (lhs - rhs).cwiseAbs().maxCoeff();
  return n > 0.0 ? d / n : d;
}

inline double rel_diff(double lhs, double rhs) {
  const double n = std::max(std::abs(lhs), std::abs(rhs));
  return n > 0.0 ? std::abs(lhs - rhs) / n : 0.0;
}

}  // namespace detail

/// Relative residuals of the ten invariant/covariant correspondences for K and S = iso3to4(K).
inline std::array<double, 10> dictionary_residuals(const Mat3& K) {
  const Mat4 S = iso3to4(K).matrix();
  const Mat4 S2 = S * S, S3 = S2 * S, S4 = S3 * S;
  const Mat3 KKt = K * K.transpose();
  const double tk = KKt.trace();
  const double dK = K.determinant();
  const Mat3 adjKt = adjugate<3>(Mat3(K.transpose()));
  auto I = [](const Mat3& m) { return iso3to4(m).matrix(); };
  std::array<double, 10> r{};
  r[0] = detail::rel_diff(iso4to3(iso3to4(K)), K);
  r[1] = detail::rel_diff(4.0 * tk, S2.trace());
  r[2] = detail::rel_diff(I(-2.0 * adjKt), trace_free(S2));
  r[3] = detail::rel_diff(-24.0 * dK, S3.trace());
  r[4] = detail::rel_diff(I(4.0 * tk * K), S2.trace() * S);
  r[5] = detail::rel_diff(I(2.0 * KKt * K), 0.75 * S2.trace() * S - trace_free(S3));
  r[6] = detail::rel_diff(4.0 * (KKt * KKt).trace(), 3.0 * S.determinant() + 0.25 * S4.trace());
  r[7] = detail::rel_diff(2.0 * tk * tk, S.determinant() + 0.25 * S4.trace());
  r[8] = detail::rel_diff(I(-24.0 * dK * K), S3.trace() * S);
  r[9] = detail::rel_diff(I(4.0 * tk * adjKt), S3.trace() / 3.0 * S - trace_free(S4));
  return r;
}

/// The last correspondence with Adj(K) in place of Adj(K^T).
inline double dictionary_last_row_untransposed(const Mat3& K) {
  const Mat4 S = iso3to4(K).matrix();
  const Mat4 S3 = S * S * S;
  const double tk = (K * K.transpose()).trace();
  return detail::rel_diff(iso3to4(4.0 * tk * adjugate<3>(K)).matrix(), S3.trace() / 3.0 * S - trace_free(S3 * S));
}

/// A point (Q, P) of the commuting variety with cohomology class c = (a, b).
struct HalfFlatPair {
  Sym4 Q;
  Sym4 P;
  double a = 0.0;
  double b = 0.0;
};

struct RData {
  Sym4 R;
  double r = 0.0;
};

inline RData R_r(const Sym4& q, double a, double b) {
  const Mat4& Q = q.matrix();
  const Mat4 Q2 = Q * Q, Q3 = Q2 * Q;
  RData out;
  out.R = Sym4::project(-trace_free(Q3) + 0.5 * (a - b) * trace_free(Q2) + (a * b + 0.5 * Q2.trace()) * Q);
  out.r = (Q.determinant() + (a - b) / 6.0 * Q3.trace() + 0.5 * a * b * Q2.trace() + (a * b) * (a * b)) / 4.0;
  return out;
}

/// The a + b = 0 form of R_r: R = Adj(Q + aI)_0 and 4r = det(Q + aI).
inline RData R_r_balanced(const Sym4& q, double a) {
  const Mat4 Qh = q.matrix() + a * Mat4::Identity();
  return {Sym4::project(adjugate<4>(Qh)), Qh.determinant() / 4.0};
}

/// lambda(c, Q) = 4r.
inline double lambda_c(const Sym4& Q, double a, double b) { return 4.0 * R_r(Q, a, b).r; }

inline Sym4 Rhat(const Sym4& Q, double a, double b) {
  const RData d = R_r(Q, a, b);
  if (!(d.r < 0.0)) throw Error(Errc::DegenerateStructure, "r = " + std::to_string(d.r) + " is not negative");
  return (1.0 / std::sqrt(-d.r)) * d.R;
}

/// H_c = sqrt(-lambda(c, Q)) - tr(P^3) / 12.
inline double hamiltonian(const HalfFlatPair& p) {
  const double lam = lambda_c(p.Q, p.a, p.b);
  if (!(lam < 0.0)) throw Error(Errc::DegenerateStructure, "lambda = " + std::to_string(lam) + " is not negative");
  const Mat4& P = p.P.matrix();
  return std::sqrt(-lam) - (P * P * P).trace() / 12.0;
}

inline double commutator_norm(const Sym4& Q, const Sym4& P) {
  return (Q.matrix() * P.matrix() - P.matrix() * Q.matrix()).norm();
}

/// Rescale P so that tr(P^3) = 12 sqrt(-lambda(c, Q)).
inline HalfFlatPair normalize_momentum(HalfFlatPair p) {
  const double lam = lambda_c(p.Q, p.a, p.b);
  if (!(lam < 0.0)) throw Error(Errc::DegenerateStructure, "lambda is not negative");
  const Mat4& P = p.P.matrix();
  const double t3 = (P * P * P).trace();
  if (t3 == 0.0) throw Error(Errc::NotNormalized, "tr(P^3) vanishes");
  p.P = std::cbrt(12.0 * std::sqrt(-lam) / t3) * p.P;
  return p;
}

inline std::pair<Form2, Form3> forms_from_pair(const HalfFlatPair& p) {
  return {omega_from_matrix(iso4to3(p.P)), gamma_from_matrix(iso4to3(p.Q), p.a, p.b)};
}

/// Reads (Q, P, a, b) off a normalized half-flat pair of forms.
inline HalfFlatPair pair_from_forms(const Form2& w, const Form3& g, double tol = 1e-9) {
  std::vector<std::string> failed;
  const double sw = std::max(1e-300, w.max_abs());
  const double sg = std::max(1e-300, g.max_abs());
  if (ext_d(g).max_abs() > tol * sg) failed.push_back("d(gamma) = 0");
  if (ext_d(wedge(w, w)).max_abs() > tol * sw * sw) failed.push_back("d(omega^2) = 0");
  if (wedge(g, w).max_abs() > tol * sw * sg) failed.push_back("gamma ^ omega = 0");
  if (omega_off_block(w) > tol * sw) failed.push_back("omega in A (x) B");
  const double lam = hitchin_lambda(g);
  if (!(lam < 0.0)) {
    failed.push_back("lambda < 0");
  } else {
    const double n = 2.0 * std::abs(top(wedge(wedge(w, w), w)));
    if (std::abs(normalization_residual_forms(w, g)) > tol * std::max(n, 1e-300)) failed.push_back("3 gamma ^ gamma-hat = 2 omega^3");
  }
  if (failed.empty()) {
    try {
      const CohomologyClass c = cohomology_class(g, tol);
      return {iso3to4(c.N), iso3to4(matrix_from_omega(w)), c.a, c.b};
    } catch (const Error& e) {
      failed.push_back(std::string("invariant class: ") + e.what());
    }
  }
  std::string msg = "failed:";
  for (const auto& f : failed) msg += " [" + f + "]";
  throw Error(Errc::NotHalfFlat, msg);
}

enum class TorsionType { Coupled, CoCoupled, W1W3, NearlyKaehler, Generic };

constexpr std::string_view to_string(TorsionType t) {
  switch (t) {
    case TorsionType::Coupled: return "Coupled";
    case TorsionType::CoCoupled: return "CoCoupled";
    case TorsionType::W1W3: return "W1W3";
    case TorsionType::NearlyKaehler: return "NearlyKaehler";
    case TorsionType::Generic: return "Generic";
  }
  return "Generic";
}

struct Proportionality {
  double factor = 0.0;    // A ~ factor * B
  double residual = 1.0;  // |A - factor B| / |A|
};

/// Relative Frobenius residual of A against the line through B.
inline Proportionality proportionality(const Mat4& A, const Mat4& B) {
  const double na = A.norm(), bb = B.squaredNorm();
  if (na == 0.0) return {0.0, 0.0};
  if (bb == 0.0) return {0.0, 1.0};
  const double f = (A.array() * B.array()).sum() / bb;
  return {f, (A - f * B).norm() / na};
}

struct TorsionClass {
  TorsionType type = TorsionType::Generic;
  double coupled_alpha = 0.0;    // P = -(3/2) alpha Q
  double cocoupled_alpha = 0.0;  // Rhat = alpha (P^2)_0
  double coupled_residual = 1.0;
  double cocoupled_residual = 1.0;
  Sym4 P2_0;
  Sym4 R;
};

inline TorsionClass classify_torsion(const HalfFlatPair& p, double tol = 1e-8) {
  TorsionClass out;
  const Mat4 P2 = trace_free(p.P.matrix() * p.P.matrix());
  out.P2_0 = Sym4::project(P2);
  const RData rd = R_r(p.Q, p.a, p.b);
  out.R = rd.R;

  const Proportionality pq = proportionality(p.P.matrix(), p.Q.matrix());
  out.coupled_alpha = -2.0 / 3.0 * pq.factor;
  out.coupled_residual = pq.residual;

  if (rd.r < 0.0) {
    const Proportionality rp = proportionality(rd.R.matrix() / std::sqrt(-rd.r), P2);
    out.cocoupled_alpha = rp.factor;
    out.cocoupled_residual = rp.residual;
  }
  const bool zero_class = p.a == 0.0 && p.b == 0.0;
  const bool coupled = out.coupled_residual < tol && out.coupled_alpha != 0.0 && zero_class;
  const bool cocoupled = out.cocoupled_residual < tol && out.cocoupled_alpha != 0.0;
  if (coupled && cocoupled)
    out.type = TorsionType::NearlyKaehler;
  else if (coupled)
    out.type = TorsionType::Coupled;
  else if (cocoupled)
    out.type = zero_class ? TorsionType::CoCoupled : TorsionType::W1W3;
  return out;
}

/// K with Adj K = M and det K = +sqrt(det M).
inline Mat3 adj_sqrt(const Mat3& M) {
  const double d = M.determinant();
  if (!(d > 0.0)) throw Error(Errc::NonPositiveDeterminant, "det M = " + std::to_string(d));
  return std::sqrt(d) * M.inverse();
}

struct NkOptions {
  double alpha = 1.0;
  int grid = 50;
  double box = 10.0;
  int max_iter = 60;
};

namespace detail {

// Residual of (Q^2)_0 - at ((Q^3)_0 - tr(Q^2) Q / 2) on the last three diagonal slots,
// at = -16 / (9 alpha^3 sqrt(-det Q)), Q = diag(-x-y-z, x, y, z).
inline bool nk_residual(const Eigen::Vector3d& v, double alpha, Eigen::Vector3d& out) {
  const Vec4 q(-v.sum(), v(0), v(1), v(2));
  const double det = q.prod();
  if (!(det < 0.0)) return false;
  const double at = -16.0 / (9.0 * alpha * alpha * alpha * std::sqrt(-det));
  const Vec4 q2 = q.cwiseProduct(q), q3 = q2.cwiseProduct(q);
  const Vec4 lhs = q2.array() - q2.mean();
  const Vec4 rhs = at * (q3.array() - q3.mean() - 0.5 * q2.sum() * q.array());
  out = (lhs - rhs).tail<3>();
  return true;
}

}  // namespace detail

/// Newton iteration for the nearly-Kaehler system from the seed (x, y, z). Returns Q when it
/// converges inside the box, away from the degenerate point Q = 0.
inline std::optional<Vec4> nk_polish(Eigen::Vector3d v, const NkOptions& o = {}) {
  Eigen::Vector3d F;
  if (!detail::nk_residual(v, o.alpha, F)) return std::nullopt;
  bool ok = false;
  for (int it = 0; it < o.max_iter; ++it) {
    if (F.norm() < 1e-12 * std::max(1.0, v.squaredNorm())) {
      ok = true;
      break;
    }
    Eigen::Matrix3d Jm;
    bool inside = true;
    for (int c = 0; c < 3 && inside; ++c) {
      const double h = 1e-7 * std::max(1.0, std::abs(v(c)));
      Eigen::Vector3d vp = v, vm = v, Fp, Fm;
      vp(c) += h;
      vm(c) -= h;
      inside = detail::nk_residual(vp, o.alpha, Fp) && detail::nk_residual(vm, o.alpha, Fm);
      if (inside) Jm.col(c) = (Fp - Fm) / (2.0 * h);
    }
    if (!inside) break;
    Eigen::FullPivLU<Eigen::Matrix3d> lu(Jm);
    if (!lu.isInvertible()) break;
    const Eigen::Vector3d step = lu.solve(F);
    double damp = 1.0;
    Eigen::Vector3d Fn;
    while (damp > 1e-6 && !(detail::nk_residual(v - damp * step, o.alpha, Fn) && Fn.norm() < F.norm() * (1.0 - 1e-4 * damp)))
      damp *= 0.5;
    if (damp <= 1e-6) break;
    v -= damp * step;
    F = Fn;
  }
  if (!ok || v.cwiseAbs().maxCoeff() > o.box) return std::nullopt;
  const Vec4 q(-v.sum(), v(0), v(1), v(2));
  if (q.cwiseAbs().maxCoeff() < 1e-6) return std::nullopt;  // collapse onto Q = 0
  return q;
}

/// True when q matches a member of `roots` to 1e-7 relative.
inline bool nk_known(const std::vector<Vec4>& roots, const Vec4& q) {
  return std::any_of(roots.begin(), roots.end(),
                     [&](const Vec4& r) { return (r - q).cwiseAbs().maxCoeff() < 1e-7 * std::max(1.0, q.cwiseAbs().maxCoeff()); });
}

/// Diagonal solutions Q = diag(-x-y-z, x, y, z) of the nearly-Kaehler system, found by
/// Newton iteration from every node of a grid over [-box, box]^3 with det Q < 0.
inline std::vector<Vec4> nk_solve(const NkOptions& o = {}) {
  std::vector<Vec4> roots;
  const int n = o.grid;
  auto node = [&](int m) { return -o.box + 2.0 * o.box * (m + 0.5) / n; };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const auto q = nk_polish(Eigen::Vector3d(node(i), node(j), node(k)), o);
        if (q && !nk_known(roots, *q)) roots.push_back(*q);
      }
  std::sort(roots.begin(), roots.end(), [](const Vec4& x, const Vec4& y) {
    return std::lexicographical_compare(x.data(), x.data() + 4, y.data(), y.data() + 4);
  });
  return roots;
}

}  // namespace hflow
