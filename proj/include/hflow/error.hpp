#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hflow {

enum class Errc {
  NotStable,
  NotPrimitive,
  IndefiniteMetric,
  NotClosed,
  NotInvariantClass,
  NotPositiveDefinite,
  SingularMetric,
  NonPositiveMetricFunctions,
  NotSymmetric,
  NotTraceFree,
  NotHalfFlat,
  DegenerateStructure,
  NonPositiveDeterminant,
  SylvesterDegenerate,
  DiagonalDegenerate,
  ZeroMomentum,
  ZeroMetricFunction,
  OutOfDomain,
  NotNormalized,
  InvalidConfig,
};

constexpr std::string_view to_string(Errc e) {
  switch (e) {
    case Errc::NotStable: return "NotStable";
    case Errc::NotPrimitive: return "NotPrimitive";
    case Errc::IndefiniteMetric: return "IndefiniteMetric";
    case Errc::NotClosed: return "NotClosed";
    case Errc::NotInvariantClass: return "NotInvariantClass";
    case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
    case Errc::SingularMetric: return "SingularMetric";
    case Errc::NonPositiveMetricFunctions: return "NonPositiveMetricFunctions";
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::NotTraceFree: return "NotTraceFree";
    case Errc::NotHalfFlat: return "NotHalfFlat";
    case Errc::DegenerateStructure: return "DegenerateStructure";
    case Errc::NonPositiveDeterminant: return "NonPositiveDeterminant";
    case Errc::SylvesterDegenerate: return "SylvesterDegenerate";
    case Errc::DiagonalDegenerate: return "DiagonalDegenerate";
    case Errc::ZeroMomentum: return "ZeroMomentum";
    case Errc::ZeroMetricFunction: return "ZeroMetricFunction";
    case Errc::OutOfDomain: return "OutOfDomain";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable error code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace hflow
