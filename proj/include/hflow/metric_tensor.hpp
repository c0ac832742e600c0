#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "hflow/error.hpp"

namespace hflow {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Symmetric 6x6 matrix in the coframe e1..e6 with its definiteness recorded.
class MetricTensor {
 public:
  MetricTensor() : g_(Mat6::Identity()) { analyse(); }

  explicit MetricTensor(const Mat6& g) {
    const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
      throw Error(Errc::NotSymmetric, "metric matrix is not symmetric");
    g_ = 0.5 * (g + g.transpose());
    analyse();
  }

  const Mat6& matrix() const { return g_; }
  double operator()(int i, int j) const { return g_(i, j); }

  bool positive_definite() const { return min_eig_ > 0.0; }
  double min_eigenvalue() const { return min_eig_; }
  double max_eigenvalue() const { return max_eig_; }
  const Vec6& eigenvalues() const { return eig_; }

  double determinant() const { return g_.determinant(); }
  double sqrt_det() const { return std::sqrt(std::abs(determinant())); }

  MetricTensor scaled(double c) const { return MetricTensor(c * g_); }

 private:
  void analyse() {
    Eigen::SelfAdjointEigenSolver<Mat6> es(g_, Eigen::EigenvaluesOnly);
    eig_ = es.eigenvalues();
    min_eig_ = eig_.minCoeff();
    max_eig_ = eig_.maxCoeff();
  }

  Mat6 g_;
  Vec6 eig_;
  double min_eig_ = 0.0;
  double max_eig_ = 0.0;
};

}  // namespace hflow
