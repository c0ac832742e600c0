// Integrates the flow from the base point (1, 1, 1) with a velocity on the normalization
// surface, then prints a few diagnostics and the torsion class of the start.

#include <cmath>
#include <cstdio>
#include <string>

#include "hflow/flow.hpp"
#include "hflow/sweep.hpp"

int main() {
  using namespace hflow;

  // (x+y)(x+z)(y+z) = -4 sqrt 3 fixes z once x and y are chosen
  const double x = -0.8, y = -1.1;
  const double s = x + y;
  const double z = (-s - std::sqrt(s * s - 4.0 * (x * y + 4.0 * kSqrt3 / s))) / 2.0;

  const FlowState start = init_three_function(x, y, z);
  std::printf("start: %s\n", std::string(to_string(classify_torsion(start.pair()).type)).c_str());

  IntegrateOptions o;
  o.t1 = -0.97;
  o.sample_stride = 97;
  const Trajectory tr = integrate(reduce(start, Ansatz::ThreeFunction), o);
  for (const Sample& p : tr.samples)
    std::printf("t = %6.3f  U,V,W = %.6f %.6f %.6f  sqrt(-lambda) = %.6f  scal = %.6f\n", p.t, p.coords(0), p.coords(1),
                p.coords(2), p.sqrt_neg_lambda, p.scalar_curv);
  std::printf("termination: %s at t = %g\n", std::string(to_string(tr.reason)).c_str(), tr.t_end);

  std::printf("mesh points at resolution 30: %zu\n", mesh_T(30).size());
  return tr.completed() ? 0 : 1;
}
