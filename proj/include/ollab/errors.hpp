#pragma once

#include <stdexcept>
#include <string>

namespace ollab {

// Base class for every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// numerics
struct ZeroVectorError : Error { using Error::Error; };
struct EmptyInputError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };

// configuration and IO
struct InvalidConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };

// model / objective
struct MissingPositiveError : Error { using Error::Error; };
struct EmptyClassSetError : Error { using Error::Error; };

// metrics
struct EmptyCurveError : Error { using Error::Error; };
struct InvalidCurveError : Error { using Error::Error; };

// experiment runner
struct ConfigError : Error { using Error::Error; };
struct MissingArtifactError : Error { using Error::Error; };
struct SeedMismatchError : Error { using Error::Error; };

}  // namespace ollab
