#ifndef RTPEN_ERRORS_HPP
#define RTPEN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rtpen {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : Error {
  using Error::Error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct EmptyQueryError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct EmptyGridError : Error {
  using Error::Error;
};
struct AlignmentError : Error {
  using Error::Error;
};
struct SamplingError : Error {
  using Error::Error;
};
struct EvaluationError : Error {
  using Error::Error;
};
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace rtpen

#endif  // RTPEN_ERRORS_HPP
