#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qbdtail {

enum class ErrorKind {
  NotIrreducible,
  NoConvergence,
  ShapeMismatch,
  SpectralRadiusNotBelowOne,
  NonPositiveScale,
  BoundaryNotInvertible,
  GammaPlusEmpty,
  ThetaOutsideGammaPlus,
  NotStochastic,
  NotPositiveRecurrent,
  NoSuperharmonicVector,
  QiNotPositiveRecurrent,
  FaceNotInvertible,
  ThetaNotOnCurve,
  Unstable,
  ZeroDirection,
  InvalidSpec,
  PathDisagreement,
  NotRenewalStructure,
  EmptyWindow,
  ThetaOutsideDomain,
  ParseError,
  SchemaError,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotIrreducible: return "NotIrreducible";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::SpectralRadiusNotBelowOne: return "SpectralRadiusNotBelowOne";
    case ErrorKind::NonPositiveScale: return "NonPositiveScale";
    case ErrorKind::BoundaryNotInvertible: return "BoundaryNotInvertible";
    case ErrorKind::GammaPlusEmpty: return "GammaPlusEmpty";
    case ErrorKind::ThetaOutsideGammaPlus: return "ThetaOutsideGammaPlus";
    case ErrorKind::NotStochastic: return "NotStochastic";
    case ErrorKind::NotPositiveRecurrent: return "NotPositiveRecurrent";
    case ErrorKind::NoSuperharmonicVector: return "NoSuperharmonicVector";
    case ErrorKind::QiNotPositiveRecurrent: return "QiNotPositiveRecurrent";
    case ErrorKind::FaceNotInvertible: return "FaceNotInvertible";
    case ErrorKind::ThetaNotOnCurve: return "ThetaNotOnCurve";
    case ErrorKind::Unstable: return "Unstable";
    case ErrorKind::ZeroDirection: return "ZeroDirection";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::PathDisagreement: return "PathDisagreement";
    case ErrorKind::NotRenewalStructure: return "NotRenewalStructure";
    case ErrorKind::EmptyWindow: return "EmptyWindow";
    case ErrorKind::ThetaOutsideDomain: return "ThetaOutsideDomain";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaError: return "SchemaError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a kind so callers (and the
/// CLI exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// True for kinds that mean "the input model is malformed" rather than
/// "the numerics failed on a well-formed model".
inline bool is_model_error(ErrorKind k) {
  return k == ErrorKind::ShapeMismatch || k == ErrorKind::InvalidSpec ||
         k == ErrorKind::ParseError || k == ErrorKind::SchemaError ||
         k == ErrorKind::NotIrreducible || k == ErrorKind::NotStochastic;
}

}  // namespace qbdtail
