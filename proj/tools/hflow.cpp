// hflow: flows, sweeps, verification and torsion classification of half-flat structures
// on S^3 x S^3 from the command line.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hflow/acceptance.hpp"
#include "hflow/curvature.hpp"
#include "hflow/flow.hpp"
#include "hflow/reference.hpp"
#include "hflow/sweep.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hflow;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitDegenerate = 3;

struct Settings {
  std::string ansatz = "three";
  std::vector<std::string> cls;
  std::vector<std::string> velocity;
  std::vector<double> base;
  std::vector<double> triaxial;
  double t0 = 0.0;
  double t1 = -0.97;
  double step = 1e-3;
  bool adaptive = false;
  double rtol = 1e-9;
  double atol = 1e-12;
  bool renormalize = false;
  bool no_curvature = false;
  int stride = 10;
  int resolution = 30;
  int workers = 1;
  std::string out = "hflow-out";
  std::string closed_form;
  std::string example;
  std::string input;
  bool inject_r_sign_error = false;
  bool as_json = false;
  std::vector<int> only;
};

/// Parses a decimal literal, accepting "nu" (or the Greek letter) for the nearly-Kaehler speed.
double parse_number(const std::string& s, double nu_value) {
  if (s == "nu" || s == "ν") return nu_value;
  if (s == "-nu" || s == "-ν") return -nu_value;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw Error(Errc::InvalidConfig, "not a number: '" + s + "'");
  return v;
}

std::vector<double> parse_list(const std::vector<std::string>& items, double nu_value) {
  std::vector<double> out;
  for (const auto& s : items) out.push_back(parse_number(s, nu_value));
  return out;
}

void fail_json(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << std::endl;
}

std::string output_dir(const Settings& s) {
  if (const char* env = std::getenv("HFLOW_OUT"); env != nullptr && *env != '\0') return env;
  return s.out;
}

IntegrateOptions integrate_options(const Settings& s) {
  IntegrateOptions o;
  o.t0 = s.t0;
  o.t1 = s.t1;
  o.h = s.step;
  o.adaptive = s.adaptive;
  o.rtol = s.rtol;
  o.atol = s.atol;
  o.renormalize = s.renormalize;
  o.curvature = !s.no_curvature;
  o.sample_stride = s.stride;
  return o;
}

std::pair<double, double> cohomology(const Settings& s) {
  if (s.cls.empty()) return {0.0, 0.0};
  const auto v = parse_list(s.cls, nu());
  if (v.size() != 2) throw Error(Errc::InvalidConfig, "--class expects a,b");
  return {v[0], v[1]};
}

Vec3 base_vector(const Settings& s) {
  if (s.base.empty()) return Vec3::Ones();
  if (s.base.size() != 3) throw Error(Errc::InvalidConfig, "--base expects U,V,W");
  return {s.base[0], s.base[1], s.base[2]};
}

void write_manifest(const fs::path& dir, json m) {
  m["tool"] = "hflow";
  m["version"] = std::string(kVersion);
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  os << m.dump(2) << '\n';
  if (!os) throw Error(Errc::InvalidConfig, "cannot write " + (dir / "manifest.json").string());
}

/// Initial state for a flow from the ansatz, base point, class and velocity flags.
ReducedState initial_state(const Settings& s) {
  const Ansatz an = parse_ansatz(s.ansatz);
  if (an == Ansatz::Triaxial) {
    std::vector<double> f = s.triaxial;
    if (f.empty()) {
      const AbcPoint p = closed_abc(6.0);
      f = {p.f(0), p.f(0), p.f(2), p.f(1), p.f(1), p.f(3)};
    }
    if (f.size() != 6) throw Error(Errc::InvalidConfig, "--triaxial expects a1,a2,a3,b1,b2,b3");
    return triaxial_coordinates(Vec3(f[0], f[1], f[2]), Vec3(f[3], f[4], f[5]));
  }
  const Vec3 base = base_vector(s);
  const auto [a, b] = cohomology(s);
  const bool two = an == Ansatz::TwoFunction;
  const double k = velocity_constant(two ? two_function_base(base(0), base(1)) : three_function_base(base));
  const auto v = parse_list(s.velocity, nu(k));
  if (v.size() != (two ? 2u : 3u))
    throw Error(Errc::InvalidConfig, two ? "--velocity expects x,y" : "--velocity expects x,y,z");

  FlowState st;
  if (a == 0.0 && b == 0.0) {
    st = two ? init_two_function(base(0), base(1), v[0], v[1]) : init_three_function(base, Vec3(v[0], v[1], v[2]));
  } else {
    // a nonzero class changes the constraint; check H = 0 on the pair directly
    st.Q = two ? two_function_base(base(0), base(1)) : three_function_base(base);
    st.P = two ? two_function_base(v[0], v[1]) : three_function_base(Vec3(v[0], v[1], v[2]));
    st.a = a;
    st.b = b;
    const double lam = lambda_c(st.Q, a, b);
    if (!(lam < 0.0)) throw Error(Errc::DegenerateStructure, "lambda >= 0 at the base point");
    const double res = hamiltonian(st.pair());
    if (std::abs(res) > 1e-9 * std::sqrt(-lam))
      throw Error(Errc::NotNormalized, "normalization residual " + format_double(res));
  }
  return reduce(st, an);
}

json options_json(const Settings& s, const IntegrateOptions& o) {
  return {{"ansatz", s.ansatz},   {"t0", o.t0},         {"t1", o.t1},
          {"step", o.h},          {"adaptive", o.adaptive}, {"rtol", o.rtol},
          {"atol", o.atol},       {"renormalize", o.renormalize}, {"curvature", o.curvature},
          {"sample_stride", o.sample_stride}};
}

/// Samples t0, t0 + step, ..., t1 (inclusive, either direction).
std::vector<double> sample_grid(double t0, double t1, double step) {
  if (!(step > 0.0) || t0 == t1) throw Error(Errc::InvalidConfig, "need step > 0 and a nonempty range");
  const long n = std::lround(std::ceil(std::abs(t1 - t0) / step - 1e-9));
  std::vector<double> ts;
  for (long i = 0; i <= n; ++i) ts.push_back(i == n ? t1 : t0 + (t1 > t0 ? 1.0 : -1.0) * step * static_cast<double>(i));
  return ts;
}

int closed_form_flow(const Settings& s, const fs::path& dir) {
  const auto ts = sample_grid(s.t0, s.t1, s.step);
  std::ofstream os(dir / "closed_form.csv", std::ios::binary);
  CsvWriter w(os);
  double worst = 0.0;
  json extra;
  if (s.closed_form == "nk-cone") {
    w.row({"t", "q", "p", "lambda", "sqrt_neg_lambda", "H_residual", "residual"});
    for (double t : ts) {
      if (t == 0.0) throw Error(Errc::OutOfDomain, "the cone is singular at t = 0");
      const FlowState st = closed_nk_cone(t);
      const Sym4 pdot = (-t / (3.0 * kSqrt3)) * D4();
      const double res = (momentum_derivative(st).matrix() - pdot.matrix()).cwiseAbs().maxCoeff();
      const double lam = lambda_c(st.Q, 0.0, 0.0);
      worst = std::max(worst, res);
      w.field(t).field(st.Q(1, 1)).field(st.P(1, 1)).field(lam).field(std::sqrt(-lam)).field(hamiltonian(st.pair())).field(res).end_row();
    }
  } else if (s.closed_form == "section4") {
    const double a = cohomology(s).first;
    w.row({"s", "x", "alpha", "dt_ds", "scalar_curv", "residual"});
    for (double sv : ts) {
      const Section4Point p = closed_section4(sv, a);
      const double xt = p.dx_ds / p.dt_ds, at = p.dalpha_ds / p.dt_ds;
      const double rhs = 1.5 * p.alpha * p.alpha - 4.0 / (9.0 * p.alpha * p.x) * std::sqrt((p.x + a) / (3 * p.x - a));
      const double res = std::max(std::abs(xt + 1.5 * p.alpha * p.x) / std::max(1.0, std::abs(xt)),
                                  std::abs(at - rhs) / std::max(1.0, std::abs(rhs)));
      worst = std::max(worst, res);
      const double sc = ricci_scalar(pair_metric(section4_state(p.x, p.alpha, a).pair()));
      w.field(sv).field(p.x).field(p.alpha).field(p.dt_ds).field(sc).field(res).end_row();
    }
    extra["class"] = {a, -a};
  } else if (s.closed_form == "bggg") {
    w.row({"s", "a", "b", "a3", "b3", "superpotential_residual", "residual"});
    for (double sv : ts) {
      const AbcPoint p = closed_abc(sv);
      const auto [dA, dB] = triaxial_rhs(Vec3(p.f(0), p.f(0), p.f(2)), Vec3(p.f(1), p.f(1), p.f(3)));
      const Vec4 along = -p.f(3) * p.f_s;
      const double res = (Vec4(dA(0), dB(0), dA(2), dB(2)) - along).cwiseAbs().maxCoeff() / std::max(1.0, along.cwiseAbs().maxCoeff());
      worst = std::max(worst, res);
      w.field(sv).field(p.f(0)).field(p.f(1)).field(p.f(2)).field(p.f(3));
      w.field(superpotential_residual(p.f, p.f(3) * p.f_s)).field(res).end_row();
    }
  } else {
    throw Error(Errc::InvalidConfig, "unknown closed form '" + s.closed_form + "'");
  }
  extra["command"] = "flow";
  extra["closed_form"] = s.closed_form;
  extra["range"] = {s.t0, s.t1};
  extra["step"] = s.step;
  extra["samples"] = ts.size();
  extra["max_residual"] = worst;
  extra["file"] = "closed_form.csv";
  write_manifest(dir, extra);
  std::cout << json{{"closed_form", s.closed_form}, {"samples", ts.size()}, {"max_residual", worst}}.dump() << std::endl;
  return EXIT_SUCCESS;
}

int cmd_flow(const Settings& s) {
  const fs::path dir = output_dir(s);
  fs::create_directories(dir);
  if (!s.closed_form.empty()) return closed_form_flow(s, dir);

  const ReducedState start = initial_state(s);
  const IntegrateOptions o = integrate_options(s);
  const auto t_start = std::chrono::steady_clock::now();
  const Trajectory tr = integrate(start, o);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  {
    std::ofstream os(dir / "trajectory.csv", std::ios::binary);
    write_trajectory_csv(os, tr);
  }
  json m{{"command", "flow"},
         {"config", options_json(s, o)},
         {"class", {start.a, start.b}},
         {"termination_reason", std::string(to_string(tr.reason))},
         {"t_end", tr.t_end},
         {"samples", tr.samples.size()},
         {"wall_clock_seconds", wall},
         {"files", {{"trajectory", "trajectory.csv"}, {"columns", trajectory_columns(tr.ansatz)}}}};
  if (!tr.message.empty()) m["message"] = tr.message;
  write_manifest(dir, m);
  std::cout << json{{"termination_reason", std::string(to_string(tr.reason))}, {"t_end", tr.t_end}, {"samples", tr.samples.size()}}.dump()
            << std::endl;
  if (tr.samples.size() <= 1 && !tr.completed()) {
    fail_json(std::string(to_string(tr.reason)), "degenerate at the initial time: " + tr.message);
    return kExitDegenerate;
  }
  return EXIT_SUCCESS;
}

int cmd_sweep(const Settings& s) {
  SweepConfig c;
  c.ansatz = parse_ansatz(s.ansatz);
  std::tie(c.a, c.b) = cohomology(s);
  c.base = base_vector(s);
  c.resolution = s.resolution;
  c.integ = integrate_options(s);
  c.out_dir = output_dir(s);
  c.workers = s.workers;
  const SweepResult r = run_sweep(c);
  write_sweep_outputs(c, r);
  std::size_t done = 0;
  for (const auto& rec : r.records) done += rec.reason == Termination::Completed;
  std::cout << json{{"trajectories", r.records.size()}, {"completed", done}, {"wall_clock_seconds", r.wall_seconds}, {"out", c.out_dir}}.dump()
            << std::endl;
  return done > 0 ? EXIT_SUCCESS : kExitFailure;
}

int cmd_verify(const Settings& s) {
  acceptance::Options opt;
  opt.workers = s.workers;
  if (s.inject_r_sign_error) opt.r_sign = -1.0;
  const double nu_value = nu();
  const bool nu_ok = std::abs(nu_value + 0.953) < 1e-3;
  std::vector<int> ids = s.only;
  if (ids.empty())
    for (const auto& c : acceptance::criteria()) ids.push_back(c.id);
  json report{{"tool", "hflow"}, {"version", std::string(kVersion)}, {"nu", nu_value}, {"nu_matches_printed", nu_ok},
              {"injected_r_sign_error", s.inject_r_sign_error}, {"criteria", json::array()}};
  bool all = nu_ok;
  if (!s.as_json) std::cout << "nu = " << format_double(nu_value) << (nu_ok ? " PASS" : " FAIL") << std::endl;
  std::vector<int> failed;
  for (int id : ids) {
    const acceptance::Verdict v = acceptance::run(id, opt);
    if (!s.as_json) std::cout << acceptance::line(v) << std::endl;
    report["criteria"].push_back(acceptance::to_json(v));
    if (!v.pass) failed.push_back(id);
    all = all && v.pass;
  }
  report["failed"] = failed;
  report["pass"] = all;
  if (s.as_json) std::cout << report.dump(2) << std::endl;
  return all ? EXIT_SUCCESS : kExitFailure;
}

HalfFlatPair read_pair(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::InvalidConfig, "cannot read " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("malformed JSON: ") + e.what());
  }
  auto matrix = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 4) throw Error(Errc::InvalidConfig, std::string(key) + " must be a 4x4 array");
    Mat4 m;
    for (int r = 0; r < 4; ++r) {
      const json& row = j[key][r];
      if (!row.is_array() || row.size() != 4) throw Error(Errc::InvalidConfig, std::string(key) + " must be a 4x4 array");
      for (int c = 0; c < 4; ++c) {
        if (!row[c].is_number()) throw Error(Errc::InvalidConfig, std::string(key) + " entries must be numbers");
        m(r, c) = row[c].get<double>();
      }
    }
    return Sym4(m);
  };
  HalfFlatPair p{matrix("Q"), matrix("P"), j.value("a", 0.0), j.value("b", 0.0)};
  const double scale = std::max(1.0, p.Q.norm() * p.P.norm());
  if (commutator_norm(p.Q, p.P) > 1e-9 * scale) throw Error(Errc::NotHalfFlat, "Q and P do not commute");
  if (!(lambda_c(p.Q, p.a, p.b) < 0.0)) throw Error(Errc::NotStable, "lambda >= 0");
  return p;
}

int cmd_classify(const Settings& s) {
  HalfFlatPair p;
  std::string source;
  if (!s.example.empty()) {
    source = s.example;
    if (s.example == "ex2.2") {
      const auto e = reference::ex22();
      p = pair_from_forms(e.omega, e.gamma);
    } else if (s.example == "ex2.3") {
      const auto e = reference::ex23();
      p = pair_from_forms(e.omega, e.gamma);
    } else if (s.example == "nk") {
      p = reference::nearly_kaehler();
    } else {
      throw Error(Errc::InvalidConfig, "unknown example '" + s.example + "' (ex2.2, ex2.3, nk)");
    }
  } else if (!s.input.empty()) {
    source = s.input;
    p = read_pair(s.input);
  } else {
    throw Error(Errc::InvalidConfig, "classify needs --example or --input");
  }
  const TorsionClass c = classify_torsion(p);
  const double sc = ricci_scalar(pair_metric(p));
  json out{{"source", source},
           {"type", std::string(to_string(c.type))},
           {"class", {p.a, p.b}},
           {"coupled_alpha", c.coupled_alpha},
           {"coupled_residual", c.coupled_residual},
           {"cocoupled_alpha", c.cocoupled_alpha},
           {"cocoupled_residual", c.cocoupled_residual},
           {"lambda", lambda_c(p.Q, p.a, p.b)},
           {"scalar_curvature", sc},
           {"zero_scalar_curvature", std::abs(sc) < 1e-8}};
  std::cout << out.dump(2) << std::endl;
  return EXIT_SUCCESS;
}

void add_integration_flags(CLI::App* c, Settings& s) {
  c->add_option("--ansatz", s.ansatz, "general, two, three, six or triaxial")
      ->check(CLI::IsMember({"general", "two", "three", "six", "triaxial"}))
      ->capture_default_str();
  c->add_option("--class", s.cls, "cohomology class a,b")->delimiter(',');
  c->add_option("--base", s.base, "base point U,V,W")->delimiter(',');
  c->add_option("--t0", s.t0, "initial time")->capture_default_str();
  c->add_option("--t1", s.t1, "final time")->capture_default_str();
  c->add_option("--step", s.step, "step size (initial step when adaptive)")->capture_default_str();
  c->add_flag("--adaptive", s.adaptive, "adaptive Dormand-Prince steps");
  c->add_option("--rtol", s.rtol, "adaptive relative tolerance")->capture_default_str();
  c->add_option("--atol", s.atol, "adaptive absolute tolerance")->capture_default_str();
  c->add_flag("--renormalize", s.renormalize, "rescale P after each step to restore H = 0");
  c->add_flag("--no-curvature", s.no_curvature, "skip scalar curvature diagnostics");
  c->add_option("--stride", s.stride, "record every n-th step")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--out", s.out, "output directory (HFLOW_OUT overrides)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hitchin flow of half-flat structures on S^3 x S^3"};
  app.set_version_flag("--version", std::string(kVersion));
  app.set_config("--config", "", "key=value configuration file; flags on the command line win");
  app.require_subcommand(1);
  app.fallthrough();
  Settings s;

  CLI::App* flow = app.add_subcommand("flow", "integrate one trajectory or sample a closed form");
  add_integration_flags(flow, s);
  flow->add_option("--velocity", s.velocity, "initial velocity x,y,z (x,y for two); 'nu' is accepted")->delimiter(',');
  flow->add_option("--triaxial", s.triaxial, "triaxial data a1,a2,a3,b1,b2,b3")->delimiter(',');
  flow->add_option("--closed-form", s.closed_form, "nk-cone, bggg or section4; t0 and t1 bound s for the latter two")
      ->check(CLI::IsMember({"nk-cone", "bggg", "section4"}));

  CLI::App* sweep = app.add_subcommand("sweep", "integrate every point of the velocity mesh");
  add_integration_flags(sweep, s);
  sweep->add_option("--resolution", s.resolution, "mesh nodes per axis")->check(CLI::PositiveNumber)->capture_default_str();
  sweep->add_option("--workers", s.workers, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  CLI::App* verify = app.add_subcommand("verify", "run the acceptance criteria");
  verify->add_option("--criterion", s.only, "run only these criteria")->delimiter(',');
  verify->add_option("--workers", s.workers, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  verify->add_flag("--inject-r-sign-error", s.inject_r_sign_error, "negative control: flip the sign of R in every flow");
  verify->add_flag("--json", s.as_json, "print a JSON report");

  CLI::App* classify = app.add_subcommand("classify", "torsion class of a half-flat pair");
  classify->add_option("--example", s.example, "ex2.2, ex2.3 or nk");
  classify->add_option("--input", s.input, "JSON file with Q, P (4x4) and a, b");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*flow) return cmd_flow(s);
    if (*sweep) return cmd_sweep(s);
    if (*verify) return cmd_verify(s);
    if (*classify) return cmd_classify(s);
  } catch (const Error& e) {
    fail_json(std::string(to_string(e.code())), e.what());
    return kExitInvalid;
  } catch (const std::exception& e) {
    fail_json("InternalError", e.what());
    return kExitFailure;
  }
  return kExitInvalid;
}
