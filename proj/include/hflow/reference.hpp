#pragma once

// Closed-form half-flat structures used as regression references.

#include <cmath>

#include "hflow/flow.hpp"
#include "hflow/forms.hpp"
#include "hflow/matrix_param.hpp"

namespace hflow::reference {

struct FormPair {
  Form2 omega;
  Form3 gamma;
  double a = 0.0;  // cohomology class (a, b)
  double b = 0.0;
};

/// e352 + e146 + e514 + e362 + e136 + e524 with the given signs on even positions.
inline Form3 six_term(double even_sign) {
  return Form3::mono({3, 5, 2}) + even_sign * Form3::mono({1, 4, 6}) + Form3::mono({5, 1, 4}) +
         even_sign * Form3::mono({3, 6, 2}) + Form3::mono({1, 3, 6}) + even_sign * Form3::mono({5, 2, 4});
}

inline Form2 omega0() { return Form2::mono({1, 2}) + Form2::mono({3, 4}) + Form2::mono({5, 6}); }

/// alpha fixed by a alpha^3 / (2 sqrt 3) = 4 / 9.
inline double ex22_alpha(double a) { return std::cbrt(8.0 * std::sqrt(3.0) / (9.0 * a)); }

/// omega = -(3/4) alpha a omega0, gamma = a (e135 - e246) + (a/2)(six-term alternating sum).
inline FormPair ex22(double a = 1.0) {
  const double alpha = ex22_alpha(a);
  FormPair p;
  p.omega = (-0.75 * alpha * a) * omega0();
  p.gamma = a * (Form3::mono({1, 3, 5}) - Form3::mono({2, 4, 6})) + (0.5 * a) * six_term(-1.0);
  p.a = a;
  p.b = -a;
  return p;
}

/// a^3 = -sqrt(2 (1 + sqrt 5)) b^2, omega = a omega0, gamma = sqrt5 b (e135 - e246) + b (six-term sum).
inline double ex23_a(double b) { return -std::cbrt(std::sqrt(2.0 * (1.0 + std::sqrt(5.0))) * b * b); }

inline FormPair ex23(double b = 1.0) {
  const double s5 = std::sqrt(5.0);
  FormPair p;
  p.omega = ex23_a(b) * omega0();
  p.gamma = (s5 * b) * (Form3::mono({1, 3, 5}) - Form3::mono({2, 4, 6})) + b * six_term(-1.0);
  p.a = s5 * b;
  p.b = -s5 * b;
  return p;
}

/// Nearly-Kaehler pair (q D, p D) with D = diag(-3, 1, 1, 1) and sqrt 3 q^2 + 2 p^3 = 0.
inline HalfFlatPair nearly_kaehler(double q = 1.0) {
  const double p = -std::cbrt(std::sqrt(3.0) * q * q / 2.0);
  return {q * D4(), p * D4(), 0.0, 0.0};
}

}  // namespace hflow::reference
