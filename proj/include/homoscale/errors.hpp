#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace homoscale {

/// Base error carrying a stable machine-readable code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

#define HOMOSCALE_DEFINE_ERROR(Name, code_str)                  \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& msg) : Error(code_str, msg) {} \
  }

HOMOSCALE_DEFINE_ERROR(SingularMatrix, "singular");
HOMOSCALE_DEFINE_ERROR(DegeneratePoint, "degenerate-point");
HOMOSCALE_DEFINE_ERROR(DegenerateConfiguration, "degenerate-configuration");
HOMOSCALE_DEFINE_ERROR(DegenerateNormalization, "degenerate-normalization");
HOMOSCALE_DEFINE_ERROR(GridDegenerate, "grid-degenerate");
HOMOSCALE_DEFINE_ERROR(TooSmall, "too-small");
HOMOSCALE_DEFINE_ERROR(SamplingExhausted, "sampling-exhausted");
HOMOSCALE_DEFINE_ERROR(ShapeMismatch, "shape-mismatch");
HOMOSCALE_DEFINE_ERROR(DepthMismatch, "depth-mismatch");
HOMOSCALE_DEFINE_ERROR(NoMatches, "no-matches");
HOMOSCALE_DEFINE_ERROR(EmptyMask, "empty-mask");
HOMOSCALE_DEFINE_ERROR(EmptyInput, "empty-input");
HOMOSCALE_DEFINE_ERROR(ParseError, "parse-error");
HOMOSCALE_DEFINE_ERROR(MissingFile, "missing-file");
HOMOSCALE_DEFINE_ERROR(ValidationError, "validation-error");
HOMOSCALE_DEFINE_ERROR(Diverged, "diverged");
HOMOSCALE_DEFINE_ERROR(IoError, "io-error");

#undef HOMOSCALE_DEFINE_ERROR

}  // namespace homoscale
