#pragma once

// Batches of flows over the normalization surface: mesh generation, a deterministic
// worker pool, RFC 4180 CSV output and a JSON run manifest.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <limits>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"

#include "hflow/error.hpp"
#include "hflow/flow.hpp"

#ifndef HFLOW_VERSION
#define HFLOW_VERSION "0.0.0"
#endif

namespace hflow {

inline constexpr std::string_view kVersion = HFLOW_VERSION;

// ---------------------------------------------------------------------------
// CSV

/// Shortest decimal form that keeps 17 significant digits; non-finite values as nan, inf, -inf.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes RFC 4180 records with CRLF line endings.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  CsvWriter& field(std::string_view s) {
    sep();
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) {
      os_ << s;
    } else {
      os_ << '"';
      for (char c : s) {
        if (c == '"') os_ << '"';
        os_ << c;
      }
      os_ << '"';
    }
    return *this;
  }

  CsvWriter& field(double v) { return field(format_double(v)); }

  CsvWriter& row(const std::vector<std::string>& fields) {
    for (const auto& f : fields) field(f);
    return end_row();
  }

  CsvWriter& end_row() {
    os_ << "\r\n";
    first_ = true;
    return *this;
  }

 private:
  void sep() {
    if (!first_) os_ << ',';
    first_ = false;
  }

  std::ostream& os_;
  bool first_ = true;
};

/// Column order of trajectory files.
inline std::vector<std::string> trajectory_columns(Ansatz a) {
  std::vector<std::string> c{"t"};
  for (auto& n : coordinate_names(a)) c.push_back(std::move(n));
  for (const char* n : {"lambda", "sqrt_neg_lambda", "H_residual", "comm_norm", "scalar_curv", "min_metric_eig",
                        "termination_reason"})
    c.emplace_back(n);
  return c;
}

/// One row per sample; the termination reason fills the last column of the final row only.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  CsvWriter w(os);
  w.row(trajectory_columns(tr.ansatz));
  for (std::size_t i = 0; i < tr.samples.size(); ++i) {
    const Sample& s = tr.samples[i];
    w.field(s.t);
    for (Eigen::Index k = 0; k < s.coords.size(); ++k) w.field(s.coords(k));
    w.field(s.lambda).field(s.sqrt_neg_lambda).field(s.H).field(s.comm_norm).field(s.scalar_curv).field(s.min_metric_eig);
    w.field(i + 1 == tr.samples.size() ? to_string(tr.reason) : std::string_view{});
    w.end_row();
  }
}

// ---------------------------------------------------------------------------
// Meshes

struct MeshOptions {
  double half_width = 1.2;  // grid spans nu +- half_width on each axis
  double lo = -6.0;         // every velocity component lies in [lo, hi]
  double hi = -0.05;
};

namespace detail {

inline std::vector<double> mesh_nodes(int resolution, double centre, double half_width) {
  if (resolution < 1) throw Error(Errc::InvalidConfig, "resolution must be at least 1");
  if (resolution == 1) return {centre};
  std::vector<double> xs(static_cast<std::size_t>(resolution));
  for (int i = 0; i < resolution; ++i)
    xs[static_cast<std::size_t>(i)] = centre + half_width * (2.0 * i / (resolution - 1) - 1.0);
  // the centre node is exact for odd resolutions
  if (resolution % 2 == 1) xs[static_cast<std::size_t>(resolution / 2)] = centre;
  return xs;
}

}  // namespace detail

/// Velocities (x, y, z) on the all-negative sheet of (x+y)(x+z)(y+z) = -4k, from a grid over (x, y).
inline std::vector<Vec3> mesh_T(int resolution, double k = kSqrt3, const MeshOptions& o = {}) {
  const std::vector<double> xs = detail::mesh_nodes(resolution, nu(k), o.half_width);
  auto residual = [k](double x, double y, double z) { return (x + y) * (x + z) * (y + z) + 4.0 * k; };
  std::vector<Vec3> pts;
  for (double x : xs)
    for (double y : xs) {
      const double s = x + y;
      if (!(x < 0.0 && y < 0.0 && s < 0.0)) continue;
      const double c = x * y + 4.0 * k / s;
      const double disc = s * s - 4.0 * c;
      if (disc < 0.0) continue;
      for (double sign : {1.0, -1.0}) {
        if (sign < 0.0 && disc == 0.0) break;
        double z = (-s + sign * std::sqrt(disc)) / 2.0;
        for (int it = 0; it < 4; ++it) {
          const double d = s * (s + 2.0 * z);
          if (d == 0.0) break;
          z -= residual(x, y, z) / d;
        }
        const Vec3 v(x, y, z);
        if (!(z < 0.0 && x + z < 0.0 && y + z < 0.0)) continue;
        if (v.minCoeff() < o.lo || v.maxCoeff() > o.hi) continue;
        if (!(std::abs(residual(x, y, z)) < 1e-12)) continue;
        pts.push_back(v);
      }
    }
  return pts;
}

/// Velocities (x, y) on the positive-definite branch of x (x+y)^2 = -2k.
inline std::vector<Eigen::Vector2d> mesh_two(int resolution, double k = kSqrt3, const MeshOptions& o = {}) {
  std::vector<Eigen::Vector2d> pts;
  for (double x : detail::mesh_nodes(resolution, nu(k), o.half_width)) {
    if (!(x < 0.0) || x < o.lo || x > o.hi) continue;
    pts.emplace_back(x, two_function_partner(x, k));
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Stabilising-direction diagnostic

struct StabilisingDiagnostic {
  bool stabilising = false;
  Termination reason = Termination::Completed;
  double t_end = 0.0;
  double growth = std::numeric_limits<double>::quiet_NaN();  // min metric eigenvalue, end over midpoint
};

/// Flows to `t_until` and reports whether the smallest metric eigenvalue levels off while the
/// flow stays regular. Quadratic growth would give a ratio near 4; the threshold is 1.5.
inline StabilisingDiagnostic stabilising_direction(const ReducedState& start, double t_until = -20.0) {
  IntegrateOptions o;
  o.t1 = t_until;
  o.adaptive = true;
  o.h = 1e-2;
  o.curvature = false;
  o.sample_stride = 1;
  const Trajectory tr = integrate(start, o);
  StabilisingDiagnostic d;
  d.reason = tr.reason;
  d.t_end = tr.t_end;
  if (!tr.completed() || tr.samples.size() < 3) return d;
  const double t_mid = 0.5 * (o.t0 + o.t1);
  const auto mid = std::min_element(tr.samples.begin(), tr.samples.end(), [&](const Sample& a, const Sample& b) {
    return std::abs(a.t - t_mid) < std::abs(b.t - t_mid);
  });
  d.growth = tr.samples.back().min_metric_eig / mid->min_metric_eig;
  d.stabilising = d.growth < 1.5;
  return d;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepConfig {
  Ansatz ansatz = Ansatz::ThreeFunction;
  double a = 0.0;  // cohomology class
  double b = 0.0;
  Vec3 base = Vec3::Ones();  // (U, V, W); the two-function ansatz reads (U, V)
  int resolution = 30;
  IntegrateOptions integ;
  MeshOptions mesh;
  std::string out_dir = "hflow-out";
  int workers = 1;
  double classify_until = -20.0;  // two-function sweeps only
};

inline Sym4 base_point(const SweepConfig& c) {
  return c.ansatz == Ansatz::TwoFunction ? two_function_base(c.base(0), c.base(1)) : three_function_base(c.base);
}

inline void validate(const SweepConfig& c) {
  if (c.ansatz != Ansatz::TwoFunction && c.ansatz != Ansatz::ThreeFunction)
    throw Error(Errc::InvalidConfig, "sweeps support the two and three ansatze");
  if (c.a != 0.0 || c.b != 0.0) throw Error(Errc::InvalidConfig, "sweep velocity constraints assume the class (0, 0)");
  if (c.resolution < 1) throw Error(Errc::InvalidConfig, "resolution must be at least 1");
  if (!(c.integ.t0 != c.integ.t1)) throw Error(Errc::InvalidConfig, "empty time range");
  if (!(c.integ.h > 0.0)) throw Error(Errc::InvalidConfig, "step must be positive");
  if (c.workers < 1) throw Error(Errc::InvalidConfig, "workers must be at least 1");
  velocity_constant(base_point(c));
}

struct TrajectoryRecord {
  std::size_t index = 0;
  Vec3 velocity = Vec3::Zero();  // z is unused by two-function sweeps
  Termination reason = Termination::Completed;
  double t_end = 0.0;
  std::string message;
  std::size_t samples = 0;
  std::string file;
  std::string stabilising_class;  // "abc" or "non-abc" for two-function sweeps
  double min_eig_growth = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
  std::vector<TrajectoryRecord> records;
  double wall_seconds = 0.0;
};

/// Runs f(0), ..., f(n-1) on `workers` threads; the first exception is rethrown after joining.
template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t count = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), 1, std::max<std::size_t>(1, n));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < count; ++w) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);
}

inline std::string trajectory_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "traj_%05zu.csv", i);
  return buf;
}

/// Start states of a sweep, in mesh order.
inline std::vector<std::pair<Vec3, ReducedState>> sweep_starts(const SweepConfig& c) {
  const double k = velocity_constant(base_point(c));
  std::vector<std::pair<Vec3, ReducedState>> out;
  if (c.ansatz == Ansatz::TwoFunction) {
    for (const auto& v : mesh_two(c.resolution, k, c.mesh))
      out.emplace_back(Vec3(v(0), v(1), 0.0), reduce(init_two_function(c.base(0), c.base(1), v(0), v(1)), c.ansatz));
  } else {
    for (const Vec3& v : mesh_T(c.resolution, k, c.mesh)) out.emplace_back(v, reduce(init_three_function(c.base, v), c.ansatz));
  }
  return out;
}

/// Integrates every mesh point, writing one CSV per trajectory into c.out_dir.
inline SweepResult run_sweep(const SweepConfig& c) {
  validate(c);
  const auto t_start = std::chrono::steady_clock::now();
  const auto starts = sweep_starts(c);
  const std::filesystem::path dir(c.out_dir);
  std::filesystem::create_directories(dir);

  SweepResult res;
  res.records.resize(starts.size());
  parallel_for(starts.size(), c.workers, [&](std::size_t i) {
    const auto& [vel, start] = starts[i];
    const Trajectory tr = integrate(start, c.integ);
    TrajectoryRecord& r = res.records[i];
    r.index = i;
    r.velocity = vel;
    r.reason = tr.reason;
    r.t_end = tr.t_end;
    r.message = tr.message;
    r.samples = tr.samples.size();
    r.file = trajectory_file_name(i);
    std::ofstream os(dir / r.file, std::ios::binary);
    write_trajectory_csv(os, tr);
    if (!os) throw Error(Errc::InvalidConfig, "cannot write " + (dir / r.file).string());
    if (c.ansatz == Ansatz::TwoFunction) {
      const StabilisingDiagnostic d = stabilising_direction(start, c.classify_until);
      r.stabilising_class = d.stabilising ? "abc" : "non-abc";
      r.min_eig_growth = d.growth;
    }
  });
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

inline void write_summary_csv(std::ostream& os, const SweepConfig& c, const SweepResult& res) {
  CsvWriter w(os);
  w.row({"index", "x", "y", "z", "termination_reason", "t_end", "samples", "stabilising_class", "min_eig_growth", "file"});
  for (const auto& r : res.records) {
    w.field(std::to_string(r.index)).field(r.velocity(0)).field(r.velocity(1));
    if (c.ansatz == Ansatz::TwoFunction) w.field(std::string_view{});
    else w.field(r.velocity(2));
    w.field(to_string(r.reason)).field(r.t_end).field(std::to_string(r.samples)).field(r.stabilising_class);
    if (std::isnan(r.min_eig_growth)) w.field(std::string_view{});
    else w.field(r.min_eig_growth);
    w.field(r.file).end_row();
  }
}

inline nlohmann::json config_json(const SweepConfig& c) {
  const IntegrateOptions& o = c.integ;
  return {{"ansatz", std::string(to_string(c.ansatz))},
          {"class", {c.a, c.b}},
          {"base_point", {c.base(0), c.base(1), c.base(2)}},
          {"resolution", c.resolution},
          {"t0", o.t0},
          {"t1", o.t1},
          {"step", o.h},
          {"adaptive", o.adaptive},
          {"rtol", o.rtol},
          {"atol", o.atol},
          {"eps_stab", o.eps_stab},
          {"drift_per_unit", o.drift_per_unit},
          {"sample_stride", o.sample_stride},
          {"mesh", {{"half_width", c.mesh.half_width}, {"lo", c.mesh.lo}, {"hi", c.mesh.hi}}},
          {"workers", c.workers},
          {"out", c.out_dir}};
}

/// Median, minimum and maximum of the termination times of trajectories that stopped early.
inline nlohmann::json singular_time_stats(const SweepResult& res) {
  std::vector<double> ts;
  for (const auto& r : res.records)
    if (r.reason != Termination::Completed) ts.push_back(r.t_end);
  if (ts.empty()) return {{"count", 0}};
  std::sort(ts.begin(), ts.end());
  const std::size_t n = ts.size();
  const double median = n % 2 ? ts[n / 2] : 0.5 * (ts[n / 2 - 1] + ts[n / 2]);
  return {{"count", n}, {"min", ts.front()}, {"median", median}, {"max", ts.back()}};
}

inline nlohmann::json sweep_manifest(const SweepConfig& c, const SweepResult& res) {
  nlohmann::json traj = nlohmann::json::array();
  std::map<std::string, int> counts;
  for (const auto& r : res.records) {
    ++counts[std::string(to_string(r.reason))];
    nlohmann::json j{{"index", r.index},
                     {"velocity", c.ansatz == Ansatz::TwoFunction ? nlohmann::json{r.velocity(0), r.velocity(1)}
                                                                  : nlohmann::json{r.velocity(0), r.velocity(1), r.velocity(2)}},
                     {"termination_reason", std::string(to_string(r.reason))},
                     {"t_end", r.t_end},
                     {"singular_time_estimate", r.reason == Termination::Completed ? nlohmann::json(nullptr) : nlohmann::json(r.t_end)},
                     {"samples", r.samples},
                     {"file", r.file}};
    if (!r.message.empty()) j["message"] = r.message;
    if (!r.stabilising_class.empty()) j["stabilising_class"] = r.stabilising_class;
    traj.push_back(std::move(j));
  }
  return {{"tool", "hflow"},
          {"version", std::string(kVersion)},
          {"command", "sweep"},
          {"config", config_json(c)},
          {"trajectory_count", res.records.size()},
          {"termination_counts", counts},
          {"singular_time", singular_time_stats(res)},
          {"wall_clock_seconds", res.wall_seconds},
          {"files", {{"summary", "summary.csv"}, {"columns", trajectory_columns(c.ansatz)}}},
          {"trajectories", traj}};
}

/// Writes summary.csv and manifest.json next to the trajectory files.
inline void write_sweep_outputs(const SweepConfig& c, const SweepResult& res) {
  const std::filesystem::path dir(c.out_dir);
  std::ofstream sum(dir / "summary.csv", std::ios::binary);
  write_summary_csv(sum, c, res);
  std::ofstream man(dir / "manifest.json", std::ios::binary);
  man << sweep_manifest(c, res).dump(2) << '\n';
  if (!sum || !man) throw Error(Errc::InvalidConfig, "cannot write sweep outputs to " + dir.string());
}

}  // namespace hflow
