#pragma once

// Hitchin flow Q' = P, (P^2)'_0 = -2 Rhat as first-order ODEs in (Q, P), the
// reduced ansatze, closed-form reference solutions and the monitored integrator.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hflow/curvature.hpp"
#include "hflow/error.hpp"
#include "hflow/forms.hpp"
#include "hflow/matrix_param.hpp"

namespace hflow {

using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;

inline const double kSqrt3 = std::sqrt(3.0);

/// Velocity of the nearly-Kaehler line through diag(-3, 1, 1, 1): -3^(1/6) / 2^(1/3).
inline double nu() { return -std::pow(3.0, 1.0 / 6.0) / std::cbrt(2.0); }

struct FlowState {
  Sym4 Q;
  Sym4 P;
  double a = 0.0;
  double b = 0.0;
  double t = 0.0;

  HalfFlatPair pair() const { return {Q, P, a, b}; }
};

// ---------------------------------------------------------------------------
// Right-hand sides

namespace detail {

constexpr std::array<std::pair<int, int>, 10> kUpper{
    {{0, 0}, {0, 1}, {0, 2}, {0, 3}, {1, 1}, {1, 2}, {1, 3}, {2, 2}, {2, 3}, {3, 3}}};

inline Mat4 sym_from_upper(const Eigen::Matrix<double, 10, 1>& v) {
  Mat4 X;
  for (int n = 0; n < 10; ++n) {
    const auto [i, j] = kUpper[n];
    X(i, j) = X(j, i) = v(n);
  }
  return X;
}

}  // namespace detail

/// Unique trace-free X with (PX + XP)_0 = target, from a dense 10x10 system.
inline Sym4 solve_momentum_derivative(const Sym4& P, const Mat4& target) {
  Eigen::Matrix<double, 10, 10> M;
  Eigen::Matrix<double, 10, 1> rhs;
  for (int n = 0; n < 10; ++n) {
    Eigen::Matrix<double, 10, 1> e = Eigen::Matrix<double, 10, 1>::Unit(n);
    const Mat4 X = detail::sym_from_upper(e);
    const Mat4 Y = trace_free(P.matrix() * X + X * P.matrix());
    for (int m = 0; m < 9; ++m) M(m, n) = Y(detail::kUpper[m].first, detail::kUpper[m].second);
    M(9, n) = X.trace();
  }
  for (int m = 0; m < 9; ++m) rhs(m) = target(detail::kUpper[m].first, detail::kUpper[m].second);
  rhs(9) = 0.0;
  Eigen::JacobiSVD<Eigen::Matrix<double, 10, 10>> svd(M);
  const auto& sv = svd.singularValues();
  if (!(sv(9) > 0.0) || sv(0) / sv(9) > 1e12)
    throw Error(Errc::SylvesterDegenerate, "condition number of the momentum system exceeds 1e12");
  return Sym4::project(detail::sym_from_upper(M.partialPivLu().solve(rhs)));
}

/// (Q', P') for the general flow. `r_sign` multiplies R and exists for negative controls.
inline std::pair<Sym4, Sym4> general_rhs(const FlowState& s, double r_sign = 1.0) {
  const Sym4 Rh = Rhat(s.Q, s.a, s.b);
  return {s.P, solve_momentum_derivative(s.P, -2.0 * r_sign * Rh.matrix())};
}

struct DiagR {
  Vec4 R;
  double r = 0.0;
};

/// R and r for diagonal Q = diag(q).
inline DiagR R_r_diag(const Vec4& q, double a, double b) {
  const Vec4 q2 = q.cwiseProduct(q), q3 = q2.cwiseProduct(q);
  DiagR d;
  d.R = -(q3.array() - q3.mean()) + 0.5 * (a - b) * (q2.array() - q2.mean()) + (a * b + 0.5 * q2.sum()) * q.array();
  d.r = (q.prod() + (a - b) / 6.0 * q3.sum() + 0.5 * a * b * q2.sum() + (a * b) * (a * b)) / 4.0;
  return d;
}

/// Diagonal momentum derivative: 2 p_i p_i' - (1/2) sum_j p_j p_j' = -2 Rhat_i with sum p_i' = 0.
inline Vec4 diag_rhs(const Vec4& q, const Vec4& p, double a, double b, double r_sign = 1.0) {
  const DiagR d = R_r_diag(q, a, b);
  if (!(d.r < 0.0)) throw Error(Errc::DegenerateStructure, "r = " + std::to_string(d.r) + " is not negative");
  const Vec4 Rh = d.R / std::sqrt(-d.r);
  Eigen::Matrix4d M;
  Vec4 rhs;
  for (int i = 0; i < 3; ++i) {
    M.row(i) = -0.5 * p.transpose();
    M(i, i) += 2.0 * p(i);
    rhs(i) = -2.0 * r_sign * Rh(i);
  }
  M.row(3).setConstant(std::max(1.0, p.cwiseAbs().maxCoeff()));
  rhs(3) = 0.0;
  Eigen::PartialPivLU<Eigen::Matrix4d> lu(M);
  if (!(lu.rcond() > 1e-12)) throw Error(Errc::DiagonalDegenerate, "diagonal momentum system is singular");
  return lu.solve(rhs);
}

/// Diagonal of iso3to4(diag(k)).
inline Vec4 diag3to4(const Vec3& k) {
  return {-k(0) - k(1) - k(2), -k(0) + k(1) + k(2), k(0) - k(1) + k(2), k(0) + k(1) - k(2)};
}

/// Inverse of diag3to4 on trace-free diagonals.
inline Vec3 diag4to3(const Vec4& d) { return {0.5 * (d(2) + d(3)), 0.5 * (d(1) + d(3)), 0.5 * (d(1) + d(2))}; }

/// p' for omega = sum p_i e^{2i-1,2i}, gamma = a e135 + b e246 + sum q_i d(e^{2i-1,2i}).
inline Vec3 sixfn_rhs(const Vec3& q, const Vec3& p, double a, double b) {
  if (p(0) == 0.0 || p(1) == 0.0 || p(2) == 0.0) throw Error(Errc::ZeroMomentum, "a momentum component vanishes");
  const double prod = p.prod();
  Vec3 rhs;
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    rhs(i) = (-a * b * q(i) + (a - b) * q(j) * q(k) + q(i) * (q(j) * q(j) + q(k) * q(k) - q(i) * q(i))) / prod;
  }
  // rows: (p2 p3)', (p1 p3)', (p1 p2)'
  Eigen::Matrix3d M;
  M << 0, p(2), p(1), p(2), 0, p(0), p(1), p(0), 0;
  return M.partialPivLu().solve(rhs);
}

/// Triaxial system (a_i', b_i') evaluated verbatim.
inline std::pair<Vec3, Vec3> triaxial_rhs(const Vec3& A, const Vec3& B) {
  if ((A.array() == 0.0).any() || (B.array() == 0.0).any())
    throw Error(Errc::ZeroMetricFunction, "a metric function vanishes");
  Vec3 dA, dB;
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    const int lo = std::min(j, k), hi = std::max(j, k);
    const double ai = A(i), bi = B(i), aj = A(lo), ak = A(hi), bj = B(lo), bk = B(hi);
    dA(i) = (ai * ai / (ak * bj) + ai * ai / (aj * bk) - aj / bk - ak / bj - bj / ak - bk / aj) / 4.0;
    dB(i) = (bi * bi / (aj * ak) - bi * bi / (bj * bk) - aj / ak - ak / aj + bj / bk + bk / bj) / 4.0;
  }
  return {dA, dB};
}

/// The a1 = a2, b1 = b2 reduction in the variable s with t = int ds / b3; order (a, b, a3, b3).
inline Vec4 reduced_triaxial_rhs(const Vec4& f) {
  const double a = f(0), b = f(1), a3 = f(2), b3 = f(3);
  return {((a * a - a3 * a3 - b * b) / (b * a3 * b3) - 1.0 / a) / 4.0,
          ((b * b - a * a - a3 * a3) / (a * a3 * b3) + 1.0 / b) / 4.0, (a3 * a3 - a * a - b * b) / (2.0 * a * b * b3),
          (b3 / (a * a) - b3 / (b * b)) / 4.0};
}

struct TriaxialEmbedding {
  Vec3 q;
  Vec3 p;
  double c = 0.0;  // class (c, -c)
};

/// Diagonal half-flat data of the triaxial metric; p_i = -2 a_i b_i.
inline TriaxialEmbedding triaxial_to_diag(const Vec3& A, const Vec3& B) {
  const double a1 = A(0), a2 = A(1), a3 = A(2), b1 = B(0), b2 = B(1), b3 = B(2);
  TriaxialEmbedding e;
  e.q = {-a1 * a2 * a3 - a3 * b1 * b2 - a2 * b1 * b3 + a1 * b2 * b3,
         -a1 * a2 * a3 - a3 * b1 * b2 + a2 * b1 * b3 - a1 * b2 * b3,
         -a1 * a2 * a3 + a3 * b1 * b2 - a2 * b1 * b3 - a1 * b2 * b3};
  e.p = -2.0 * A.cwiseProduct(B);
  e.c = a1 * a2 * a3 - a3 * b1 * b2 - a2 * b1 * b3 - a1 * b2 * b3;
  return e;
}

// ---------------------------------------------------------------------------
// Closed forms and initial data

/// Nearly-Kaehler cone: (q, p) = -(t^2 / (6 sqrt 3)) (t / 3, 1) along diag(-3, 1, 1, 1).
inline FlowState closed_nk_cone(double t) {
  const double q = -t * t * t / (18.0 * kSqrt3), p = -t * t / (6.0 * kSqrt3);
  return {q * D4(), p * D4(), 0.0, 0.0, t};
}

struct Section4Point {
  double x = 0.0;
  double alpha = 0.0;
  double dt_ds = 0.0;
  double dx_ds = 0.0;
  double dalpha_ds = 0.0;
};

/// x(s) = (4s^3 + a) / 3, alpha(s) = (4s^2 / sqrt 3) sqrt(1 + a s^-3) / (4s^3 + a),
/// dt/ds = -2 sqrt 3 / sqrt(1 + a s^-3).
inline Section4Point closed_section4(double s, double a) {
  const double u = 1.0 + a / (s * s * s);
  if (!(s < 0.0) || !(u > 0.0)) throw Error(Errc::OutOfDomain, "need s < min(0, -a^(1/3))");
  const double w = 4.0 * s * s * s + a;
  const double c = 4.0 / kSqrt3;
  const double su = std::sqrt(u);
  const double du = -3.0 * a / (s * s * s * s);
  Section4Point r;
  r.x = w / 3.0;
  r.alpha = c * s * s * su / w;
  r.dt_ds = -2.0 * kSqrt3 / su;
  r.dx_ds = 4.0 * s * s;
  r.dalpha_ds = c * (2.0 * s * su / w + s * s * du / (2.0 * su * w) - 12.0 * s * s * s * s * su / (w * w));
  return r;
}

/// Half-flat pair of the W1 + W3 family: Q = x diag(-3,1,1,1), P = -(3/2) alpha x diag(-3,1,1,1), c = (a, -a).
inline FlowState section4_state(double x, double alpha, double a) {
  return {x * D4(), (-1.5 * alpha * x) * D4(), a, -a, 0.0};
}

struct AbcPoint {
  Vec4 f;     // (a, b, a3, b3)
  Vec4 f_s;   // derivative in s
};

/// Closed-form ABC metric with the positive square roots.
inline AbcPoint closed_abc(double s) {
  if (!(s > 4.5)) throw Error(Errc::OutOfDomain, "closed form needs s > 9/2");
  const double A2 = (s - 1.5) * (s + 4.5) / 12.0, B2 = (s + 1.5) * (s - 4.5) / 12.0, C2 = s * s / 9.0;
  const double D2 = (s * s - 20.25) / (s * s - 2.25);
  const double dA2 = (2.0 * s + 3.0) / 12.0, dB2 = (2.0 * s - 3.0) / 12.0, dC2 = 2.0 * s / 9.0;
  const double dD2 = (2.0 * s * (s * s - 2.25) - 2.0 * s * (s * s - 20.25)) / ((s * s - 2.25) * (s * s - 2.25));
  AbcPoint p;
  p.f = Vec4(std::sqrt(A2), std::sqrt(B2), std::sqrt(C2), std::sqrt(D2));
  p.f_s = Vec4(dA2, dB2, dC2, dD2).cwiseQuotient(2.0 * p.f);
  return p;
}

/// Q = diag(-U-V-W, U, V, W) for base = (U, V, W).
inline Sym4 three_function_base(const Vec3& base) {
  return Sym4::diag(-base.sum(), base(0), base(1), base(2));
}

/// Q = diag(-2U-V, U, U, V) for base = (U, V).
inline Sym4 two_function_base(double U, double V) { return Sym4::diag(-2 * U - V, U, U, V); }

/// k = sqrt(-det Q0): class-zero velocities satisfy (x+y)(x+z)(y+z) = -4k, resp. x (x+y)^2 = -2k.
inline double velocity_constant(const Sym4& Q0) {
  const double det = Q0.matrix().determinant();
  if (!(det < 0.0)) throw Error(Errc::InvalidConfig, "base point needs det Q < 0");
  return std::sqrt(-det);
}

/// Velocity of the nearly-Kaehler line for the constant k: (2 nu)^3 = -4k.
inline double nu(double k) { return -std::cbrt(k / 2.0); }

/// Three-function start at `base` with velocity (x, y, z) and class zero.
inline FlowState init_three_function(const Vec3& base, const Vec3& v, double tol = 1e-9) {
  const Sym4 Q0 = three_function_base(base);
  const double k = velocity_constant(Q0);
  const double res = (v(0) + v(1)) * (v(0) + v(2)) * (v(1) + v(2)) + 4.0 * k;
  if (!(std::abs(res) < tol)) throw Error(Errc::NotNormalized, "(x+y)(x+z)(y+z) + 4k = " + std::to_string(res));
  return {Q0, Sym4::diag(-v.sum(), v(0), v(1), v(2)), 0.0, 0.0, 0.0};
}

/// Base point (U, V, W) = (1, 1, 1) with velocity (x, y, z) and class zero.
inline FlowState init_three_function(double x, double y, double z, double tol = 1e-9) {
  return init_three_function(Vec3::Ones(), Vec3(x, y, z), tol);
}

/// The branch y = -x - sqrt(-2k / x) of x (x + y)^2 = -2k, which carries the positive-definite metrics.
inline double two_function_partner(double x, double k = kSqrt3) {
  if (!(x < 0.0)) throw Error(Errc::OutOfDomain, "two-function velocity needs x < 0");
  return -x - std::sqrt(-2.0 * k / x);
}

/// Two-function start at base (U, V) with velocity (x, y) and class zero.
inline FlowState init_two_function(double U, double V, double x, double y, double tol = 1e-9) {
  const Sym4 Q0 = two_function_base(U, V);
  const double k = velocity_constant(Q0);
  const double res = x * (x + y) * (x + y) + 2.0 * k;
  if (!(std::abs(res) < tol)) throw Error(Errc::NotNormalized, "x (x+y)^2 + 2k = " + std::to_string(res));
  return {Q0, Sym4::diag(-2 * x - y, x, x, y), 0.0, 0.0, 0.0};
}

/// Base point (U, V) = (1, 1) with velocity (x, y).
inline FlowState init_two_function(double x, double y, double tol = 1e-9) { return init_two_function(1.0, 1.0, x, y, tol); }

// ---------------------------------------------------------------------------
// Ansatze as first-order systems in reduced coordinates

enum class Ansatz { General, TwoFunction, ThreeFunction, SixDiagonal, Triaxial };

constexpr std::string_view to_string(Ansatz a) {
  switch (a) {
    case Ansatz::General: return "general";
    case Ansatz::TwoFunction: return "two";
    case Ansatz::ThreeFunction: return "three";
    case Ansatz::SixDiagonal: return "six";
    case Ansatz::Triaxial: return "triaxial";
  }
  return "general";
}

inline Ansatz parse_ansatz(std::string_view s) {
  for (Ansatz a : {Ansatz::General, Ansatz::TwoFunction, Ansatz::ThreeFunction, Ansatz::SixDiagonal, Ansatz::Triaxial})
    if (to_string(a) == s) return a;
  throw Error(Errc::InvalidConfig, "unknown ansatz '" + std::string(s) + "'");
}

/// A point of the flow in the coordinates of one ansatz.
struct ReducedState {
  Ansatz ansatz = Ansatz::General;
  VecX y;
  double a = 0.0;  // class, unused by the triaxial ansatz which carries its own
  double b = 0.0;
};

inline std::vector<std::string> coordinate_names(Ansatz a) {
  switch (a) {
    case Ansatz::TwoFunction: return {"U", "V", "p_U", "p_V"};
    case Ansatz::ThreeFunction: return {"U", "V", "W", "p_U", "p_V", "p_W"};
    case Ansatz::SixDiagonal: return {"q1", "q2", "q3", "p1", "p2", "p3"};
    case Ansatz::Triaxial: return {"a1", "a2", "a3", "b1", "b2", "b3"};
    case Ansatz::General: {
      std::vector<std::string> n;
      for (char m : {'Q', 'P'})
        for (const auto& [i, j] : detail::kUpper) n.push_back(std::string(1, m) + std::to_string(i + 1) + std::to_string(j + 1));
      return n;
    }
  }
  return {};
}

inline FlowState to_flow_state(const ReducedState& r, double t = 0.0) {
  const VecX& y = r.y;
  switch (r.ansatz) {
    case Ansatz::TwoFunction:
      return {Sym4::project(Vec4(-2 * y(0) - y(1), y(0), y(0), y(1)).asDiagonal().toDenseMatrix()),
              Sym4::project(Vec4(-2 * y(2) - y(3), y(2), y(2), y(3)).asDiagonal().toDenseMatrix()), r.a, r.b, t};
    case Ansatz::ThreeFunction:
      return {Sym4::project(Vec4(-y(0) - y(1) - y(2), y(0), y(1), y(2)).asDiagonal().toDenseMatrix()),
              Sym4::project(Vec4(-y(3) - y(4) - y(5), y(3), y(4), y(5)).asDiagonal().toDenseMatrix()), r.a, r.b, t};
    case Ansatz::SixDiagonal:
      return {Sym4::project(diag3to4(y.head<3>()).asDiagonal().toDenseMatrix()),
              Sym4::project(diag3to4(y.tail<3>()).asDiagonal().toDenseMatrix()), r.a, r.b, t};
    case Ansatz::Triaxial: {
      const TriaxialEmbedding e = triaxial_to_diag(y.head<3>(), y.tail<3>());
      return {Sym4::project(diag3to4(e.q).asDiagonal().toDenseMatrix()),
              Sym4::project(diag3to4(e.p).asDiagonal().toDenseMatrix()), e.c, -e.c, t};
    }
    case Ansatz::General: {
      Eigen::Matrix<double, 10, 1> q = y.head<10>(), p = y.tail<10>();
      return {Sym4::project(detail::sym_from_upper(q)), Sym4::project(detail::sym_from_upper(p)), r.a, r.b, t};
    }
  }
  throw Error(Errc::InvalidConfig, "unknown ansatz");
}

inline ReducedState general_coordinates(const FlowState& s) {
  ReducedState r{Ansatz::General, VecX(20), s.a, s.b};
  for (int n = 0; n < 10; ++n) {
    const auto [i, j] = detail::kUpper[n];
    r.y(n) = s.Q(i, j);
    r.y(10 + n) = s.P(i, j);
  }
  return r;
}

/// Reduced coordinates of a diagonal state; TwoFunction and ThreeFunction read slots 1..3.
inline ReducedState reduce(const FlowState& s, Ansatz a) {
  const Vec4 q = s.Q.diagonal(), p = s.P.diagonal();
  switch (a) {
    case Ansatz::TwoFunction: {
      VecX y(4);
      y << q(1), q(3), p(1), p(3);
      return {a, y, s.a, s.b};
    }
    case Ansatz::ThreeFunction: {
      VecX y(6);
      y << q(1), q(2), q(3), p(1), p(2), p(3);
      return {a, y, s.a, s.b};
    }
    case Ansatz::SixDiagonal: {
      VecX y(6);
      y << diag4to3(q), diag4to3(p);
      return {a, y, s.a, s.b};
    }
    case Ansatz::General: return general_coordinates(s);
    case Ansatz::Triaxial: throw Error(Errc::InvalidConfig, "triaxial coordinates are not recoverable from (Q, P)");
  }
  throw Error(Errc::InvalidConfig, "unknown ansatz");
}

inline ReducedState triaxial_coordinates(const Vec3& A, const Vec3& B) {
  VecX y(6);
  y << A, B;
  return {Ansatz::Triaxial, y, 0.0, 0.0};
}

/// Time derivative of the reduced coordinates in flow time.
inline VecX reduced_rhs(const ReducedState& r, double r_sign = 1.0) {
  const VecX& y = r.y;
  VecX dy(y.size());
  switch (r.ansatz) {
    case Ansatz::TwoFunction: {
      const Vec4 pd = diag_rhs(Vec4(-2 * y(0) - y(1), y(0), y(0), y(1)), Vec4(-2 * y(2) - y(3), y(2), y(2), y(3)), r.a, r.b, r_sign);
      dy << y(2), y(3), pd(1), pd(3);
      return dy;
    }
    case Ansatz::ThreeFunction: {
      const Vec4 pd = diag_rhs(Vec4(-y(0) - y(1) - y(2), y(0), y(1), y(2)), Vec4(-y(3) - y(4) - y(5), y(3), y(4), y(5)), r.a, r.b, r_sign);
      dy << y(3), y(4), y(5), pd(1), pd(2), pd(3);
      return dy;
    }
    case Ansatz::SixDiagonal: {
      if (r_sign != 1.0) {
        const Vec4 pd = diag_rhs(diag3to4(y.head<3>()), diag3to4(y.tail<3>()), r.a, r.b, r_sign);
        dy << y.tail<3>(), diag4to3(pd);
        return dy;
      }
      dy << y.tail<3>(), sixfn_rhs(y.head<3>(), y.tail<3>(), r.a, r.b);
      return dy;
    }
    case Ansatz::Triaxial: {
      // The printed triaxial system runs against the matrix flow.
      const auto [dA, dB] = triaxial_rhs(y.head<3>(), y.tail<3>());
      dy << -dA, -dB;
      return dy;
    }
    case Ansatz::General: {
      const FlowState s = to_flow_state(r);
      const auto [dQ, dP] = general_rhs(s, r_sign);
      const ReducedState d = general_coordinates({dQ, dP, r.a, r.b, 0.0});
      return d.y;
    }
  }
  throw Error(Errc::InvalidConfig, "unknown ansatz");
}

/// P' of a state: the diagonal path when Q and P are diagonal, the dense solve otherwise.
inline Sym4 momentum_derivative(const FlowState& s, double r_sign = 1.0) {
  const bool diagonal = s.Q.matrix().isDiagonal(0.0) && s.P.matrix().isDiagonal(0.0);
  if (diagonal) {
    const Vec4 pd = diag_rhs(s.Q.diagonal(), s.P.diagonal(), s.a, s.b, r_sign);
    return Sym4::project(pd.asDiagonal().toDenseMatrix());
  }
  return general_rhs(s, r_sign).second;
}

// ---------------------------------------------------------------------------
// Integration

enum class Termination {
  Completed,
  DegenerateStructure,
  IndefiniteMetric,
  InvariantDrift,
  SylvesterDegenerate,
  DiagonalDegenerate,
  ZeroMomentum,
  ZeroMetricFunction,
  NonFinite,
};

constexpr std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Completed: return "Completed";
    case Termination::DegenerateStructure: return "DegenerateStructure";
    case Termination::IndefiniteMetric: return "IndefiniteMetric";
    case Termination::InvariantDrift: return "InvariantDrift";
    case Termination::SylvesterDegenerate: return "SylvesterDegenerate";
    case Termination::DiagonalDegenerate: return "DiagonalDegenerate";
    case Termination::ZeroMomentum: return "ZeroMomentum";
    case Termination::ZeroMetricFunction: return "ZeroMetricFunction";
    case Termination::NonFinite: return "NonFinite";
  }
  return "NonFinite";
}

inline Termination termination_of(Errc e) {
  switch (e) {
    case Errc::DegenerateStructure:
    case Errc::NotStable: return Termination::DegenerateStructure;
    case Errc::SylvesterDegenerate: return Termination::SylvesterDegenerate;
    case Errc::DiagonalDegenerate: return Termination::DiagonalDegenerate;
    case Errc::ZeroMomentum: return Termination::ZeroMomentum;
    case Errc::ZeroMetricFunction: return Termination::ZeroMetricFunction;
    case Errc::NotPositiveDefinite:
    case Errc::IndefiniteMetric: return Termination::IndefiniteMetric;
    default: return Termination::NonFinite;
  }
}

struct IntegrateOptions {
  double t0 = 0.0;
  double t1 = -0.97;
  double h = 1e-3;
  bool adaptive = false;
  double rtol = 1e-9;
  double atol = 1e-12;
  double eps_stab = 1e-8;
  double drift_per_unit = 1e-7;  // relative |H_c| budget per unit of elapsed time, at least one unit
  bool renormalize = false;
  int sample_stride = 10;
  bool curvature = true;  // scalar curvature and conservation residual at each sample
  double r_sign = 1.0;    // negative control: -1 flips the sign of R in the flow
};

struct Sample {
  double t = 0.0;
  VecX coords;
  FlowState state;
  double lambda = 0.0;
  double sqrt_neg_lambda = 0.0;
  double H = 0.0;
  double comm_norm = 0.0;
  double scalar_curv = std::numeric_limits<double>::quiet_NaN();
  double conservation = std::numeric_limits<double>::quiet_NaN();
  double min_metric_eig = 0.0;
  double max_metric_eig = 0.0;
  double sqrt_det_g = 0.0;
};

struct Trajectory {
  Ansatz ansatz = Ansatz::General;
  std::vector<std::string> coord_names;
  std::vector<Sample> samples;
  Termination reason = Termination::Completed;
  double t_end = 0.0;
  std::string message;

  bool completed() const { return reason == Termination::Completed; }
};

/// Metric of a half-flat pair.
inline MetricTensor pair_metric(const HalfFlatPair& p) {
  const auto [w, g] = forms_from_pair(p);
  const Mat6 J = hitchin_J(g);
  return MetricTensor(two_form_matrix(w) * J);
}

/// dg/dt of the pair moving with Q' = P and the given P'.
inline Mat6 pair_metric_derivative(const HalfFlatPair& p, const Sym4& Pdot) {
  const auto [w, g] = forms_from_pair(p);
  const Form2 wdot = omega_from_matrix(iso4to3(Pdot));
  const Form3 gdot = gamma_from_matrix(iso4to3(p.P), 0.0, 0.0);
  return metric_derivative(w, g, wdot, gdot);
}

namespace detail {

struct Probe {
  Sample s;
  bool ok = true;
  Termination reason = Termination::Completed;
  std::string message;
};

/// |H_c| relative to the magnitude of the terms it is computed from, so that cancellation
/// in tr(P^3) near a blow-up is not mistaken for drift.
inline double relative_drift(const Sample& s) {
  const double n = s.state.P.norm();
  const double scale = std::max(s.sqrt_neg_lambda, n * n * n / 12.0);
  return scale > 0.0 ? std::abs(s.H) / scale : std::abs(s.H);
}

inline Probe probe(const ReducedState& r, double t, const IntegrateOptions& o, double t0) {
  Probe pr;
  Sample& s = pr.s;
  s.t = t;
  s.coords = r.y;
  if (!r.y.allFinite()) return {s, false, Termination::NonFinite, "non-finite coordinates"};
  try {
    s.state = to_flow_state(r, t);
    const HalfFlatPair p = s.state.pair();
    s.lambda = lambda_c(p.Q, p.a, p.b);
    if (!(s.lambda < -o.eps_stab)) return {s, false, Termination::DegenerateStructure, "lambda >= -eps_stab"};
    s.sqrt_neg_lambda = std::sqrt(-s.lambda);
    s.H = hamiltonian(p);
    s.comm_norm = commutator_norm(p.Q, p.P);
    const MetricTensor g = pair_metric(p);
    s.min_metric_eig = g.min_eigenvalue();
    s.max_metric_eig = g.max_eigenvalue();
    s.sqrt_det_g = g.sqrt_det();
    if (!g.positive_definite()) return {s, false, Termination::IndefiniteMetric, "metric lost definiteness"};
    if (o.curvature) {
      const Sym4 Pdot = momentum_derivative(s.state, o.r_sign);
      const ShapeData d = shape_operator(g, pair_metric_derivative(p, Pdot));
      s.scalar_curv = d.scalar;
      s.conservation = conservation_residual(d);
    }
    const double budget = o.drift_per_unit * std::max(1.0, std::abs(t - t0));
    if (!(relative_drift(s) <= budget))
      return {s, false, Termination::InvariantDrift, "|H_c| exceeds the drift budget"};
  } catch (const Error& e) {
    return {s, false, termination_of(e.code()), e.what()};
  }
  return pr;
}

inline void renormalize(ReducedState& r) {
  if (r.ansatz == Ansatz::Triaxial) return;
  const FlowState s = to_flow_state(r);
  const double lam = lambda_c(s.Q, s.a, s.b);
  const Mat4& P = s.P.matrix();
  const double t3 = (P * P * P).trace();
  if (!(lam < 0.0) || t3 == 0.0) return;
  const double f = std::cbrt(12.0 * std::sqrt(-lam) / t3);
  const Eigen::Index n = r.y.size() / 2;
  r.y.tail(n) *= f;
}

}  // namespace detail

/// Integrates from `start` over [o.t0, o.t1] (either direction), monitoring the invariants.
inline Trajectory integrate(const ReducedState& start, const IntegrateOptions& o) {
  Trajectory tr;
  tr.ansatz = start.ansatz;
  tr.coord_names = coordinate_names(start.ansatz);
  if (!(o.h > 0.0) || o.t0 == o.t1) throw Error(Errc::InvalidConfig, "need h > 0 and a nonempty time range");

  ReducedState cur = start;
  auto stop = [&](Termination why, double t, std::string msg) {
    tr.reason = why;
    tr.t_end = t;
    tr.message = std::move(msg);
    return tr;
  };

  detail::Probe p0 = detail::probe(cur, o.t0, o, o.t0);
  tr.samples.push_back(p0.s);
  if (!p0.ok) return stop(p0.reason, o.t0, p0.message);

  auto f = [&](const VecX& y) {
    ReducedState r = cur;
    r.y = y;
    return reduced_rhs(r, o.r_sign);
  };

  const double dir = o.t1 > o.t0 ? 1.0 : -1.0;
  const double span = std::abs(o.t1 - o.t0);
  const int stride = std::max(1, o.sample_stride);
  double t_now = o.t0;

  try {
    if (!o.adaptive) {
      const long n = std::max(1L, static_cast<long>(std::ceil(span / o.h - 1e-9)));
      const double h = (o.t1 - o.t0) / static_cast<double>(n);
      for (long k = 1; k <= n; ++k) {
        const VecX& y = cur.y;
        const VecX k1 = f(y);
        const VecX k2 = f(y + 0.5 * h * k1);
        const VecX k3 = f(y + 0.5 * h * k2);
        const VecX k4 = f(y + h * k3);
        cur.y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (o.renormalize) detail::renormalize(cur);
        const double t = (k == n) ? o.t1 : o.t0 + static_cast<double>(k) * h;
        t_now = t;
        const bool record = (k % stride == 0) || k == n;
        // Cheap stability check on every step, full diagnostics on recorded ones.
        if (!record) {
          if (!cur.y.allFinite()) return stop(Termination::NonFinite, t, "non-finite coordinates");
          const FlowState s = to_flow_state(cur, t);
          if (!(lambda_c(s.Q, s.a, s.b) < -o.eps_stab)) {
            tr.samples.push_back(detail::probe(cur, t, o, o.t0).s);
            return stop(Termination::DegenerateStructure, t, "lambda >= -eps_stab");
          }
          continue;
        }
        detail::Probe pr = detail::probe(cur, t, o, o.t0);
        tr.samples.push_back(pr.s);
        if (!pr.ok) return stop(pr.reason, t, pr.message);
      }
    } else {
      // Dormand-Prince 5(4).
      static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
      static constexpr double a21 = 1.0 / 5;
      static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
      static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
      static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
      static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                              a65 = -5103.0 / 18656;
      static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
      static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                              e6 = 22.0 / 525, e7 = -1.0 / 40;
      (void)c2, (void)c3, (void)c4, (void)c5;
      double t = o.t0;
      double h = o.h;
      long accepted = 0;
      VecX k1 = f(cur.y);
      // A stage that leaves the domain rejects the step; the last such error names the
      // obstruction if the step size underflows.
      std::optional<Error> blocked;
      while (dir * (o.t1 - t) > 0.0) {
        if (h < 1e-14 * std::max(1.0, std::abs(t))) {
          if (blocked) return stop(termination_of(blocked->code()), t, std::string("step size underflow: ") + blocked->what());
          return stop(Termination::NonFinite, t, "step size underflow");
        }
        const bool last = h >= std::abs(o.t1 - t);
        const double hs = dir * (last ? std::abs(o.t1 - t) : h);
        const VecX& y = cur.y;
        VecX k2, k3, k4, k5, k6, yn, k7;
        try {
          k2 = f(y + hs * (a21 * k1));
          k3 = f(y + hs * (a31 * k1 + a32 * k2));
          k4 = f(y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
          k5 = f(y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
          k6 = f(y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
          yn = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
          k7 = f(yn);
        } catch (const Error& e) {
          blocked = e;
          h = std::abs(hs) * 0.25;
          continue;
        }
        const VecX err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        const VecX sc = (o.atol + o.rtol * y.cwiseAbs().cwiseMax(yn.cwiseAbs()).array()).matrix();
        const double en = err.cwiseQuotient(sc).cwiseAbs().maxCoeff();
        if (!std::isfinite(en)) {
          h *= 0.2;
          continue;
        }
        if (en <= 1.0) {
          t = last ? o.t1 : t + hs;
          t_now = t;
          blocked.reset();
          cur.y = yn;
          if (o.renormalize) detail::renormalize(cur);
          k1 = o.renormalize ? f(cur.y) : k7;
          ++accepted;
          if (accepted % stride == 0 || last) {
            detail::Probe pr = detail::probe(cur, t, o, o.t0);
            tr.samples.push_back(pr.s);
            if (!pr.ok) return stop(pr.reason, t, pr.message);
          } else {
            const FlowState s = to_flow_state(cur, t);
            if (!(lambda_c(s.Q, s.a, s.b) < -o.eps_stab)) {
              tr.samples.push_back(detail::probe(cur, t, o, o.t0).s);
              return stop(Termination::DegenerateStructure, t, "lambda >= -eps_stab");
            }
          }
        }
        h = std::abs(hs) * std::clamp(0.9 * std::pow(std::max(en, 1e-10), -0.2), 0.2, 5.0);
      }
    }
  } catch (const Error& e) {
    return stop(termination_of(e.code()), t_now, e.what());
  }
  return stop(Termination::Completed, o.t1, "");
}

/// Metric functions (a, b, a3, b3) of a triaxial sample with a1 = a2 and b1 = b2.
inline Vec4 triaxial_functions(const VecX& y) { return {y(0), y(3), y(2), y(5)}; }

}  // namespace hflow
