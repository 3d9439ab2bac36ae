#pragma once

#include <stdexcept>
#include <string>

namespace naturamap {

// Failure categories. The CLI maps each to a process exit code.
enum class ErrorKind {
  kConfig,
  kShape,
  kFormat,
  kCorruptFile,
  kIo,
  kInvalidCoordinate,
  kFusion,
  kNumerical,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define NATURAMAP_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

NATURAMAP_DEFINE_ERROR(ConfigError, kConfig)
NATURAMAP_DEFINE_ERROR(ShapeError, kShape)
NATURAMAP_DEFINE_ERROR(FormatError, kFormat)
NATURAMAP_DEFINE_ERROR(CorruptFileError, kCorruptFile)
NATURAMAP_DEFINE_ERROR(IoError, kIo)
NATURAMAP_DEFINE_ERROR(InvalidCoordinateError, kInvalidCoordinate)
NATURAMAP_DEFINE_ERROR(FusionError, kFusion)
NATURAMAP_DEFINE_ERROR(NumericalError, kNumerical)

#undef NATURAMAP_DEFINE_ERROR

// 0 success, 2 config/usage, 3 I/O, 4 numerical failure.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
    case ErrorKind::kCorruptFile:
      return 3;
    case ErrorKind::kNumerical:
      return 4;
    default:
      return 2;
  }
}

}  // namespace naturamap
