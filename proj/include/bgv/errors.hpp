#pragma once

#include <stdexcept>
#include <string>

namespace bgv {

enum class Errc {
  MalformedIndex,
  MixedGrade,
  OrderExceeded,
  BasisOverflow,
  RuleNotValidOnRegion,
  UnknownGenerator,
  PsiContainsAntifields,
  TargetMismatch,
  FieldDependentVariationUnsupported,
  InvalidAlgebra,
  SpaceMismatch,
  GradingMismatch,
  UnknownSuite,
  IncompatibleTheory,
  ConfigParse,
  ParseError,
  CFLViolation,
  NonFinite,
  SupportMismatch,
  StepTooLarge,
  IOError,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

} // namespace bgv
