#pragma once

// Curvature of left-invariant metrics on S3 x S3 and the cohomogeneity-one
// quantities built from a metric path g(t).

#include <array>
#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "hflow/error.hpp"
#include "hflow/forms.hpp"
#include "hflow/metric_tensor.hpp"

namespace hflow {

using StructureConstants = std::array<std::array<std::array<double, 6>, 6>, 6>;

/// c[k][i][j] = e^k([E_i, E_j]) = -de^k(E_i, E_j).
inline StructureConstants structure_constants() {
  StructureConstants c{};
  for (int k = 0; k < 6; ++k) {
    const Form2 dk = ext_d(Form1::mono({k + 1}));
    for (int n = 0; n < Form2::size; ++n) {
      const unsigned m = Form2::mask(n);
      const int i = std::countr_zero(m);
      const int j = std::countr_zero(m & ~(1u << i));
      c[k][i][j] = -dk[n];
      c[k][j][i] = dk[n];
    }
  }
  return c;
}

/// Scalar curvature of the left-invariant metric g, by the Koszul formula in an orthonormal frame.
inline double ricci_scalar(const MetricTensor& g) {
  Eigen::LLT<Mat6> llt(g.matrix());
  if (llt.info() != Eigen::Success || !g.positive_definite())
    throw Error(Errc::NotPositiveDefinite, "metric is not positive definite");
  static const StructureConstants c = structure_constants();
  const Mat6 L = llt.matrixL();
  const Mat6 B = L.inverse().transpose();  // columns: orthonormal frame F_a = sum_i B(i,a) E_i
  const Mat6 Binv = L.transpose();

  // Cf[a][b][c] = <[F_a, F_b], F_c>
  double Cf[6][6][6];
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) {
      Vec6 br = Vec6::Zero();
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
          const double w = B(i, a) * B(j, b);
          if (w == 0.0) continue;
          for (int k = 0; k < 6; ++k) br(k) += w * c[k][i][j];
        }
      const Vec6 inF = Binv * br;
      for (int cc = 0; cc < 6; ++cc) Cf[a][b][cc] = inF(cc);
    }

  // nabla_{F_a} F_b = sum_c G[a][b][c] F_c, stored as N_a(c, b).
  std::array<Mat6, 6> N;
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b)
      for (int cc = 0; cc < 6; ++cc) N[a](cc, b) = 0.5 * (Cf[a][b][cc] - Cf[b][cc][a] + Cf[cc][a][b]);

  double s = 0.0;
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) {
      if (a == b) continue;
      Mat6 R = N[a] * N[b] - N[b] * N[a];
      for (int cc = 0; cc < 6; ++cc)
        if (Cf[a][b][cc] != 0.0) R -= Cf[a][b][cc] * N[cc];
      s += R(a, b);
    }
  return s;
}

struct ShapeData {
  Mat6 L;
  double trL = 0.0;
  double trL2 = 0.0;
  double scalar = 0.0;
};

/// L = g^{-1} g' / 2 together with its traces and the scalar curvature of g.
inline ShapeData shape_operator(const MetricTensor& g, const Mat6& gprime) {
  Eigen::FullPivLU<Mat6> lu(g.matrix());
  if (!lu.isInvertible()) throw Error(Errc::SingularMetric, "metric is singular");
  ShapeData d;
  d.L = 0.5 * lu.solve(gprime);
  d.trL = d.L.trace();
  d.trL2 = (d.L * d.L).trace();
  d.scalar = ricci_scalar(g);
  return d;
}

/// Shape operator of a metric path, with g' from central differences.
inline ShapeData shape_operator_fd(const std::function<Mat6(double)>& path, double t, double h = 1e-5) {
  const Mat6 gp = (path(t + h) - path(t - h)) / (2.0 * h);
  return shape_operator(MetricTensor(path(t)), gp);
}

/// Derivative of g = w(., J.) along (w', g'), with J the structure of the 3-form.
inline Mat6 metric_derivative(const Form2& w, const Form3& g, const Form2& wdot, const Form3& gdot) {
  const Mat6 K = hitchin_K(g);
  const double lam = (K * K).trace() / 6.0;
  if (!(lam < 0.0)) throw Error(Errc::NotStable, "lambda is not negative");
  const Mat6 Kdot = hitchin_bilinear(g, gdot) + hitchin_bilinear(gdot, g);
  const double lamdot = (K * Kdot).trace() / 3.0;
  const double root = std::sqrt(-lam);
  const Mat6 J = K / root;
  const Mat6 Jdot = Kdot / root + K * (0.5 * lamdot / (root * root * root));
  const Mat6 out = two_form_matrix(wdot) * J + two_form_matrix(w) * Jdot;
  return 0.5 * (out + out.transpose());
}

/// (tr L)^2 - tr(L^2) - s.
inline double conservation_residual(const ShapeData& d) { return d.trL * d.trL - d.trL2 - d.scalar; }

struct Energies {
  double T = 0.0;
  double V = 0.0;
};

inline Energies cohom1_energies(const MetricTensor& g, const Mat6& gprime) {
  const ShapeData d = shape_operator(g, gprime);
  const double v = g.sqrt_det();
  return {(d.trL * d.trL - d.trL2) * v, -d.scalar * v};
}

/// sum_i a_i^2 (e^{2i-1} - e^{2i})^2 + b_i^2 (e^{2i-1} + e^{2i})^2.
inline Mat6 triaxial_metric(const Eigen::Vector3d& A, const Eigen::Vector3d& B) {
  Mat6 g = Mat6::Zero();
  for (int i = 0; i < 3; ++i) {
    const double a2 = A(i) * A(i), b2 = B(i) * B(i);
    g(2 * i, 2 * i) = g(2 * i + 1, 2 * i + 1) = a2 + b2;
    g(2 * i, 2 * i + 1) = g(2 * i + 1, 2 * i) = b2 - a2;
  }
  return g;
}

/// Closed-form scalar curvature of the triaxial metric with a1 = a2 = a, b1 = b2 = b.
inline double triaxial_scalar(double a, double b, double a3, double b3) {
  const double a2 = a * a, b2 = b * b, c2 = a3 * a3, d2 = b3 * b3;
  const double num = 2 * c2 * c2 * a2 * b2 + c2 * a2 * a2 * d2 - 8 * a2 * a2 * b2 * c2 + c2 * b2 * b2 * d2 -
                     8 * b2 * b2 * a2 * c2 + 2 * a2 * a2 * a2 * b2 - 4 * a2 * a2 * b2 * b2 + 2 * a2 * b2 * b2 * b2;
  return -num / (8.0 * a2 * a2 * b2 * b2 * c2);
}

/// Superpotential as a function of (a, b, b3, a3).
inline double superpotential(double a, double b, double b3, double a3) {
  return 2.0 * (2 * a * a * a * b * b3 + 2 * a * b * b * b * b3 - a * a * a3 * b3 * b3 + b * b * a3 * b3 * b3 +
                2 * a * b * a3 * a3 * b3);
}

/// Gradient of the superpotential with respect to (ln a, ln b, ln b3, ln a3).
inline Eigen::Vector4d superpotential_gradient(double a, double b, double b3, double a3) {
  const double t1 = 2 * a * a * a * b * b3, t2 = 2 * a * b * b * b * b3, t3 = -a * a * a3 * b3 * b3,
               t4 = b * b * a3 * b3 * b3, t5 = 2 * a * b * a3 * a3 * b3;
  return 2.0 * Eigen::Vector4d(3 * t1 + t2 + 2 * t3 + t5, t1 + 3 * t2 + 2 * t4 + t5, t1 + t2 + 2 * t3 + 2 * t4 + t5,
                               t3 + t4 + 2 * t5);
}

inline Eigen::Matrix4d superpotential_G() {
  Eigen::Matrix4d G;
  G << 2, 4, 2, 2, 4, 2, 2, 2, 2, 2, 0, 1, 2, 2, 1, 0;
  return G;
}

/// max |d alpha / dr - G^{-1} du / d alpha| for metric functions (a, b, a3, b3) and their
/// derivatives in flow time; dt = sqrt(det g) dr with sqrt(det g) = 8 a^2 b^2 a3 b3.
inline double superpotential_residual(const Eigen::Vector4d& f, const Eigen::Vector4d& fdot) {
  const double a = f(0), b = f(1), a3 = f(2), b3 = f(3);
  if (!(a > 0 && b > 0 && a3 > 0 && b3 > 0))
    throw Error(Errc::NonPositiveMetricFunctions, "metric functions must be positive");
  const double vol = 8.0 * a * a * b * b * a3 * b3;
  const Eigen::Vector4d dalpha = vol * Eigen::Vector4d(fdot(0) / a, fdot(1) / b, fdot(3) / b3, fdot(2) / a3);
  const Eigen::Vector4d rhs = superpotential_G().fullPivLu().solve(superpotential_gradient(a, b, b3, a3));
  return (dalpha - rhs).cwiseAbs().maxCoeff();
}

}  // namespace hflow
