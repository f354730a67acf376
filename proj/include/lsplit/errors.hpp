#pragma once

#include <stdexcept>
#include <string>

namespace lsplit {

enum class ErrorKind {
  kConfig,
  kShape,
  kContract,
  kParse,
  kNumeric,
  kDegenerateSplit,
  kTrainingInfeasible,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define LSPLIT_DEFINE_ERROR(Name, Kind)                               \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(Kind, what) {}     \
  };

LSPLIT_DEFINE_ERROR(ConfigError, ErrorKind::kConfig)
LSPLIT_DEFINE_ERROR(ShapeError, ErrorKind::kShape)
LSPLIT_DEFINE_ERROR(ContractError, ErrorKind::kContract)
LSPLIT_DEFINE_ERROR(ParseError, ErrorKind::kParse)
LSPLIT_DEFINE_ERROR(NumericError, ErrorKind::kNumeric)
LSPLIT_DEFINE_ERROR(DegenerateSplitError, ErrorKind::kDegenerateSplit)
LSPLIT_DEFINE_ERROR(TrainingInfeasibleError, ErrorKind::kTrainingInfeasible)

#undef LSPLIT_DEFINE_ERROR

// Process exit codes used by the command-line tool.
inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kShape:
    case ErrorKind::kContract:
    case ErrorKind::kParse:
      return 3;
    case ErrorKind::kNumeric:
      return 4;
    case ErrorKind::kDegenerateSplit:
      return 5;
    case ErrorKind::kTrainingInfeasible:
      return 6;
  }
  return 1;
}

// Re-throws `e` with `context` prepended, preserving its kind.
[[noreturn]] inline void rethrow_with_context(const Error& e,
                                              const std::string& context) {
  const std::string msg = context + ": " + e.what();
  switch (e.kind()) {
    case ErrorKind::kConfig: throw ConfigError(msg);
    case ErrorKind::kShape: throw ShapeError(msg);
    case ErrorKind::kContract: throw ContractError(msg);
    case ErrorKind::kParse: throw ParseError(msg);
    case ErrorKind::kNumeric: throw NumericError(msg);
    case ErrorKind::kDegenerateSplit: throw DegenerateSplitError(msg);
    case ErrorKind::kTrainingInfeasible: throw TrainingInfeasibleError(msg);
  }
  throw Error(e.kind(), msg);
}

}  // namespace lsplit
