#pragma once

#include <stdexcept>
#include <string>

namespace loftr {

/// Base class of every error raised by this project.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Extents disagree with what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value violates its documented range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Degenerate or invalid geometry (singular homography, point at infinity...).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// An index outside the valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Unreadable or malformed input files.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A function produced a non-finite value where a finite one was required.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Undefined input to a metric (e.g. AUC of an empty list).
class UndefinedInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace loftr
