#pragma once

// Invariant exterior algebra on su(2)+su(2).
//
// A k-form is stored as C(6,k) coefficients over sorted multi-indices in
// lexicographic order. Multi-indices are carried around as 6-bit masks.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "hflow/error.hpp"
#include "hflow/metric_tensor.hpp"

namespace hflow {

using Mat3 = Eigen::Matrix3d;

constexpr int binom(int n, int k) {
  if (k < 0 || k > n) return 0;
  int r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

namespace detail {

template <int K>
constexpr auto make_masks() {
  std::array<std::uint8_t, binom(6, K)> out{};
  if constexpr (K >= 0 && K <= 6) {
    std::array<int, (K > 0 ? K : 1)> idx{};
    for (int i = 0; i < K; ++i) idx[i] = i;
    for (int n = 0; n < binom(6, K); ++n) {
      std::uint8_t m = 0;
      for (int i = 0; i < K; ++i) m |= static_cast<std::uint8_t>(1u << idx[i]);
      out[n] = m;
      int p = K - 1;
      while (p >= 0 && idx[p] == 6 - K + p) --p;
      if (p < 0) break;
      ++idx[p];
      for (int q = p + 1; q < K; ++q) idx[q] = idx[q - 1] + 1;
    }
  }
  return out;
}

template <int K>
inline constexpr auto kMasks = make_masks<K>();

template <int K>
constexpr auto make_positions() {
  std::array<std::int8_t, 64> pos{};
  for (auto& p : pos) p = -1;
  for (int n = 0; n < binom(6, K); ++n) pos[kMasks<K>[n]] = static_cast<std::int8_t>(n);
  return pos;
}

template <int K>
inline constexpr auto kPositions = make_positions<K>();

/// Sign of e^A ^ e^B relative to e^(A|B); zero when the masks overlap.
constexpr int wedge_sign(unsigned a, unsigned b) {
  if (a & b) return 0;
  int swaps = 0;
  for (int i = 0; i < 6; ++i)
    if (a & (1u << i)) swaps += std::popcount(b & ((1u << i) - 1u));
  return (swaps % 2) ? -1 : 1;
}

struct Term2 {
  std::uint8_t mask;
  int coeff;
};

// de1 = e35, de3 = e51, de5 = e13, de2 = e46, de4 = e62, de6 = e24.
inline constexpr std::array<Term2, 6> kStructure{{
    {0b010100, +1},  // e1 -> e35
    {0b101000, +1},  // e2 -> e46
    {0b010001, -1},  // e3 -> e51 = -e15
    {0b100010, -1},  // e4 -> e62 = -e26
    {0b000101, +1},  // e5 -> e13
    {0b001010, +1},  // e6 -> e24
}};

}  // namespace detail

/// Coefficients of an invariant k-form. Degrees above 6 hold no coefficients.
template <int K>
class Form {
 public:
  static constexpr int degree = K;
  static constexpr int size = binom(6, K);

  Form() { c_.fill(0.0); }

  /// Monomial c * e^{i1 ... ik} with 1-based, possibly unsorted indices.
  static Form mono(std::initializer_list<int> idx, double c = 1.0) {
    Form f;
    if (static_cast<int>(idx.size()) != K) throw Error(Errc::InvalidConfig, "monomial degree mismatch");
    unsigned m = 0;
    int sign = 1;
    for (int i : idx) {
      if (i < 1 || i > 6) throw Error(Errc::InvalidConfig, "basis index out of range");
      const unsigned bit = 1u << (i - 1);
      if (m & bit) return f;
      sign *= detail::wedge_sign(m, bit);
      m |= bit;
    }
    f.c_[detail::kPositions<K>[m]] = sign * c;
    return f;
  }

  static constexpr std::uint8_t mask(int n) { return detail::kMasks<K>[n]; }
  static constexpr int position(unsigned m) { return detail::kPositions<K>[m]; }

  double& operator[](int n) { return c_[n]; }
  double operator[](int n) const { return c_[n]; }
  double at_mask(unsigned m) const {
    const int p = position(m);
    return p < 0 ? 0.0 : c_[p];
  }
  const std::array<double, size>& coeffs() const { return c_; }

  Form& operator+=(const Form& o) {
    for (int n = 0; n < size; ++n) c_[n] += o.c_[n];
    return *this;
  }
  Form& operator-=(const Form& o) {
    for (int n = 0; n < size; ++n) c_[n] -= o.c_[n];
    return *this;
  }
  Form& operator*=(double s) {
    for (auto& v : c_) v *= s;
    return *this;
  }
  friend Form operator+(Form a, const Form& b) { return a += b; }
  friend Form operator-(Form a, const Form& b) { return a -= b; }
  friend Form operator-(Form a) { return a *= -1.0; }
  friend Form operator*(double s, Form a) { return a *= s; }
  friend Form operator*(Form a, double s) { return a *= s; }

  double max_abs() const {
    double m = 0.0;
    for (double v : c_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  std::array<double, size> c_;
};

using Form1 = Form<1>;
using Form2 = Form<2>;
using Form3 = Form<3>;
using Form4 = Form<4>;
using Form5 = Form<5>;
using Form6 = Form<6>;

inline constexpr unsigned kVolumeMask = 0b111111;

template <int K, int L>
Form<K + L> wedge(const Form<K>& a, const Form<L>& b) {
  Form<K + L> r;
  if constexpr (K + L <= 6) {
    for (int i = 0; i < Form<K>::size; ++i) {
      if (a[i] == 0.0) continue;
      const unsigned ma = Form<K>::mask(i);
      for (int j = 0; j < Form<L>::size; ++j) {
        if (b[j] == 0.0) continue;
        const unsigned mb = Form<L>::mask(j);
        const int s = detail::wedge_sign(ma, mb);
        if (s != 0) r[Form<K + L>::position(ma | mb)] += s * a[i] * b[j];
      }
    }
  }
  return r;
}

template <int K>
Form<K + 1> ext_d(const Form<K>& a) {
  Form<K + 1> r;
  if constexpr (K <= 5) {
    for (int n = 0; n < Form<K>::size; ++n) {
      if (a[n] == 0.0) continue;
      const unsigned m = Form<K>::mask(n);
      int p = 0;
      for (int i = 0; i < 6; ++i) {
        const unsigned bit = 1u << i;
        if (!(m & bit)) continue;
        const unsigned left = m & (bit - 1u);
        const unsigned right = m & ~(left | bit);
        const auto& t = detail::kStructure[i];
        const int s1 = detail::wedge_sign(left, t.mask);
        const int s2 = detail::wedge_sign(left | t.mask, right);
        if (s1 != 0 && s2 != 0) {
          const double sgn = (p % 2 ? -1.0 : 1.0) * s1 * s2 * t.coeff;
          r[Form<K + 1>::position(left | t.mask | right)] += sgn * a[n];
        }
        ++p;
      }
    }
  }
  return r;
}

/// Contraction of a vector into the first slot.
template <int K>
Form<K - 1> interior(const Vec6& v, const Form<K>& a) {
  static_assert(K >= 1);
  Form<K - 1> r;
  for (int n = 0; n < Form<K>::size; ++n) {
    if (a[n] == 0.0) continue;
    const unsigned m = Form<K>::mask(n);
    int p = 0;
    for (int i = 0; i < 6; ++i) {
      const unsigned bit = 1u << i;
      if (!(m & bit)) continue;
      if (v[i] != 0.0) r[Form<K - 1>::position(m & ~bit)] += (p % 2 ? -1.0 : 1.0) * v[i] * a[n];
      ++p;
    }
  }
  return r;
}

inline double top(const Form6& f) { return f[0]; }

/// a(v_1, ..., v_K) with the vectors taken as columns of `vs`.
template <int K>
double evaluate(const Form<K>& a, const Eigen::Matrix<double, 6, K>& vs) {
  double s = 0.0;
  for (int n = 0; n < Form<K>::size; ++n) {
    if (a[n] == 0.0) continue;
    const unsigned m = Form<K>::mask(n);
    Eigen::Matrix<double, K, K> sub;
    int r = 0;
    for (int i = 0; i < 6; ++i)
      if (m & (1u << i)) sub.row(r++) = vs.row(i);
    s += a[n] * sub.determinant();
  }
  return s;
}

/// The form a(A., ..., A.).
template <int K>
Form<K> pullback(const Form<K>& a, const Mat6& A) {
  Form<K> r;
  for (int n = 0; n < Form<K>::size; ++n) {
    const unsigned m = Form<K>::mask(n);
    Eigen::Matrix<double, 6, K> cols;
    int c = 0;
    for (int i = 0; i < 6; ++i)
      if (m & (1u << i)) cols.col(c++) = A.col(i);
    r[n] = evaluate<K>(a, cols);
  }
  return r;
}

/// Antisymmetric matrix W(i,j) = w(e_i, e_j).
inline Mat6 two_form_matrix(const Form2& w) {
  Mat6 W = Mat6::Zero();
  for (int n = 0; n < Form2::size; ++n) {
    const unsigned m = Form2::mask(n);
    const int i = std::countr_zero(m);
    const int j = std::countr_zero(m & ~(1u << i));
    W(i, j) = w[n];
    W(j, i) = -w[n];
  }
  return W;
}

/// Endomorphism v -> the vector dual to i_v(a) ^ b under i_w(e123456).
inline Mat6 hitchin_bilinear(const Form3& a, const Form3& b) {
  Mat6 K;
  for (int j = 0; j < 6; ++j) {
    const Form5 f = wedge(interior(Vec6::Unit(j), a), b);
    for (int i = 0; i < 6; ++i)
      K(i, j) = f.at_mask(kVolumeMask & ~(1u << i)) * ((i % 2) ? -1.0 : 1.0);
  }
  return K;
}

inline Mat6 hitchin_K(const Form3& g) { return hitchin_bilinear(g, g); }

inline double hitchin_lambda(const Form3& g) {
  const Mat6 K = hitchin_K(g);
  return (K * K).trace() / 6.0;
}

/// Almost complex structure J = K / sqrt(-lambda) of a stable 3-form.
inline Mat6 hitchin_J(const Form3& g) {
  const Mat6 K = hitchin_K(g);
  const double lam = (K * K).trace() / 6.0;
  if (!(lam < 0.0)) throw Error(Errc::NotStable, "lambda = " + std::to_string(lam) + " is not negative");
  return K / std::sqrt(-lam);
}

inline Form3 hitchin_dual(const Form3& g) { return pullback(g, hitchin_J(g)); }

inline double form_scale(const Form2& w, const Form3& g) { return std::max(1e-300, w.max_abs() * g.max_abs()); }

/// g(X, Y) = w(X, JY). The result is flagged, not rejected, when indefinite.
inline MetricTensor su3_metric(const Form2& w, const Form3& g, double tol = 1e-10) {
  const Mat6 J = hitchin_J(g);
  if (wedge(g, w).max_abs() > tol * form_scale(w, g))
    throw Error(Errc::NotPrimitive, "gamma ^ omega does not vanish");
  return MetricTensor(two_form_matrix(w) * J);
}

/// Coefficient of e123456 in 3 g ^ ghat - 2 w^3.
inline double normalization_residual_forms(const Form2& w, const Form3& g) {
  const Form3 gh = hitchin_dual(g);
  return 3.0 * top(wedge(g, gh)) - 2.0 * top(wedge(wedge(w, w), w));
}

/// sum_ij K_ij e^{2i-1} ^ e^{2j}.
inline Form2 omega_from_matrix(const Mat3& K) {
  Form2 w;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) w += Form2::mono({2 * i + 1, 2 * j + 2}, K(i, j));
  return w;
}

/// Inverse of omega_from_matrix on the A (x) B component; other components are ignored.
inline Mat3 matrix_from_omega(const Form2& w) {
  Mat3 K;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      K(i, j) = (i > j ? -1.0 : 1.0) * w.at_mask((1u << (2 * i)) | (1u << (2 * j + 1)));
  return K;
}

/// Components of w outside A (x) B, as a max-abs size.
inline double omega_off_block(const Form2& w) {
  return (w - omega_from_matrix(matrix_from_omega(w))).max_abs();
}

/// a e135 + b e246 + sum_ij N_ij d(e^{2i-1} ^ e^{2j}).
inline Form3 gamma_from_matrix(const Mat3& N, double a, double b) {
  Form3 g = Form3::mono({1, 3, 5}, a) + Form3::mono({2, 4, 6}, b);
  return g + ext_d(omega_from_matrix(N));
}

struct CohomologyClass {
  double a = 0.0;
  double b = 0.0;
  Mat3 N = Mat3::Zero();
};

/// Split a closed invariant 3-form into a e135 + b e246 + exact part.
inline CohomologyClass cohomology_class(const Form3& g, double tol = 1e-10) {
  const double scale = std::max(1.0, g.max_abs());
  if (ext_d(g).max_abs() > tol * scale) throw Error(Errc::NotClosed, "d gamma does not vanish");
  Eigen::Matrix<double, 20, 11> A;
  Eigen::Matrix<double, 20, 1> y;
  const Form3 e135 = Form3::mono({1, 3, 5});
  const Form3 e246 = Form3::mono({2, 4, 6});
  for (int n = 0; n < 20; ++n) {
    A(n, 0) = e135[n];
    A(n, 1) = e246[n];
    y(n) = g[n];
  }
  for (int k = 0; k < 9; ++k) {
    Mat3 E = Mat3::Zero();
    E(k / 3, k % 3) = 1.0;
    const Form3 col = ext_d(omega_from_matrix(E));
    for (int n = 0; n < 20; ++n) A(n, 2 + k) = col[n];
  }
  const Eigen::Matrix<double, 11, 1> x = A.colPivHouseholderQr().solve(y);
  if ((A * x - y).cwiseAbs().maxCoeff() > tol * scale)
    throw Error(Errc::NotInvariantClass, "remainder is not in the span of the exact invariant forms");
  CohomologyClass c;
  c.a = x(0);
  c.b = x(1);
  for (int k = 0; k < 9; ++k) c.N(k / 3, k % 3) = x(2 + k);
  return c;
}

/// Signed monomial sum such as "+2 e135 -1 e246".
template <int K>
std::string to_string(const Form<K>& f, double eps = 1e-14) {
  std::ostringstream os;
  bool first = true;
  for (int n = 0; n < Form<K>::size; ++n) {
    if (std::abs(f[n]) <= eps) continue;
    if (!first) os << ' ';
    first = false;
    os << (f[n] < 0 ? '-' : '+') << std::abs(f[n]) << " e";
    for (int i = 0; i < 6; ++i)
      if (Form<K>::mask(n) & (1u << i)) os << (i + 1);
  }
  return first ? std::string("0") : os.str();
}

}  // namespace hflow
