#pragma once

#include <stdexcept>
#include <string>

namespace glrtml {

// Error taxonomy shared by all modules. Callers that can recover catch the
// specific type; the CLI maps them to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotPositiveDefinite : Error {
  using Error::Error;
};

struct NonConvergence : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct EmptyInput : Error {
  using Error::Error;
};

struct InvalidConfig : Error {
  using Error::Error;
};

struct IoFailure : Error {
  using Error::Error;
};

struct ParseFailure : Error {
  using Error::Error;
};

struct InvalidLabel : Error {
  using Error::Error;
};

struct EmptyComponent : Error {
  using Error::Error;
};

struct TooFewPoints : Error {
  using Error::Error;
};

struct NoPositivePairs : Error {
  using Error::Error;
};

struct NoNegativePairs : Error {
  using Error::Error;
};

}  // namespace glrtml
