#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "hflow/sweep.hpp"

using namespace hflow;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hflow_test_" + name);
  fs::remove_all(p);
  return p;
}

SweepConfig small_sweep(const fs::path& dir, int workers) {
  SweepConfig c;
  c.resolution = 5;
  c.integ.t1 = -0.2;
  c.integ.h = 1e-2;
  c.integ.sample_stride = 5;
  c.out_dir = dir.string();
  c.workers = workers;
  return c;
}

}  // namespace

TEST(Sweep, MeshSizeAndConstraint) {
  const auto pts = mesh_T(100);
  EXPECT_GE(pts.size(), 5000u);
  for (const Vec3& v : pts) {
    EXPECT_LT(std::abs((v(0) + v(1)) * (v(0) + v(2)) * (v(1) + v(2)) + 4.0 * kSqrt3), 1e-12);
    EXPECT_LT(v.maxCoeff(), 0.0);
    EXPECT_NO_THROW(init_three_function(v(0), v(1), v(2)));
  }
}

TEST(Sweep, MeshContainsSymmetricPoint) {
  for (int res : {1, 5, 31}) {
    const auto pts = mesh_T(res);
    bool found = false;
    for (const Vec3& v : pts) found = found || (v - Vec3::Constant(nu())).norm() < 1e-12;
    EXPECT_TRUE(found) << "resolution " << res;
  }
}

TEST(Sweep, TwoFunctionMesh) {
  const auto pts = mesh_two(11);
  // nodes above the upper bound -0.05 are dropped
  ASSERT_EQ(pts.size(), 9u);
  for (const auto& v : pts) {
    EXPECT_NEAR(v(0) * std::pow(v(0) + v(1), 2), -2.0 * kSqrt3, 1e-12);
    EXPECT_LE(v(0), -0.05);
  }
  EXPECT_EQ(pts[5](0), nu());
  EXPECT_NEAR(pts[5](1), nu(), 1e-12);
}

TEST(Sweep, RejectsInvalidConfig) {
  SweepConfig c;
  c.a = 1.0;
  EXPECT_THROW(validate(c), Error);
  c = SweepConfig{};
  c.resolution = 0;
  EXPECT_THROW(validate(c), Error);
  c = SweepConfig{};
  c.ansatz = Ansatz::General;
  EXPECT_THROW(validate(c), Error);
  c = SweepConfig{};
  c.base = Vec3(1.0, 1.0, -1.0);
  EXPECT_THROW(validate(c), Error);
}

TEST(Sweep, CsvQuotingAndDigits) {
  std::ostringstream os;
  CsvWriter w(os);
  w.field("plain").field("a,b").field("say \"hi\"").field(0.1).field(std::nan("")).end_row();
  EXPECT_EQ(os.str(), "plain,\"a,b\",\"say \"\"hi\"\"\",0.10000000000000001,nan\r\n");
  EXPECT_EQ(std::stod(format_double(M_PI)), M_PI);
}

TEST(Sweep, TrajectoryCsvLayout) {
  IntegrateOptions o;
  o.t1 = -0.05;
  o.h = 1e-2;
  o.sample_stride = 1;
  const Trajectory tr = integrate(reduce(init_three_function(nu(), nu(), nu()), Ansatz::ThreeFunction), o);
  std::ostringstream os;
  write_trajectory_csv(os, tr);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line,
            "t,U,V,W,p_U,p_V,p_W,lambda,sqrt_neg_lambda,H_residual,comm_norm,scalar_curv,min_metric_eig,"
            "termination_reason\r");
  std::size_t rows = 0;
  std::string last;
  while (std::getline(is, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, tr.samples.size());
  EXPECT_EQ(last.substr(last.rfind(',') + 1), "Completed\r");
}

TEST(Sweep, OutputsAndManifest) {
  const fs::path dir = scratch("outputs");
  const SweepConfig c = small_sweep(dir, 2);
  const SweepResult res = run_sweep(c);
  write_sweep_outputs(c, res);
  ASSERT_EQ(res.records.size(), mesh_T(5).size());
  for (const auto& r : res.records) {
    EXPECT_TRUE(fs::exists(dir / r.file));
    EXPECT_EQ(r.reason, Termination::Completed);
  }
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["tool"], "hflow");
  EXPECT_EQ(m["trajectory_count"], res.records.size());
  EXPECT_EQ(m["config"]["resolution"], 5);
  EXPECT_EQ(m["termination_counts"]["Completed"], static_cast<int>(res.records.size()));
  EXPECT_TRUE(fs::exists(dir / "summary.csv"));
  fs::remove_all(dir);
}

TEST(Sweep, DeterministicAcrossWorkerCounts) {
  const fs::path d1 = scratch("det1"), d4 = scratch("det4");
  const SweepResult r1 = run_sweep(small_sweep(d1, 1));
  const SweepResult r4 = run_sweep(small_sweep(d4, 4));
  write_sweep_outputs(small_sweep(d1, 1), r1);
  write_sweep_outputs(small_sweep(d4, 4), r4);
  ASSERT_EQ(r1.records.size(), r4.records.size());
  for (const auto& r : r1.records) EXPECT_EQ(slurp(d1 / r.file), slurp(d4 / r.file)) << r.file;
  EXPECT_EQ(slurp(d1 / "summary.csv"), slurp(d4 / "summary.csv"));
  fs::remove_all(d1);
  fs::remove_all(d4);
}

TEST(Sweep, ParallelForRethrows) {
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw Error(Errc::InvalidConfig, "boom");
               }),
               Error);
}

TEST(Sweep, ParallelSpeedup) {
  if (std::thread::hardware_concurrency() < 8) GTEST_SKIP() << "fewer than 8 hardware threads";
  auto timed = [](int workers) {
    const fs::path dir = scratch("speed" + std::to_string(workers));
    SweepConfig c = small_sweep(dir, workers);
    c.resolution = 12;
    c.integ.t1 = -0.5;
    c.integ.h = 1e-3;
    const SweepResult r = run_sweep(c);
    fs::remove_all(dir);
    return r.wall_seconds;
  };
  const double t1 = timed(1), t8 = timed(8);
  EXPECT_GE(t1 / t8, 3.0);
}
