#pragma once

#include <stdexcept>
#include <string>

namespace lungcadex {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument outside its documented domain (non-positive window width, k < 1, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input data that cannot be processed (empty volume, degenerate box, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Shapes or dimensions that do not match between two arguments.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A value outside its valid range, e.g. a rating outside [1, 5].
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Problems with on-disk data. Subclassed so callers can tell the cases apart.
class DataError : public Error {
 public:
  using Error::Error;
};

class MissingFileError : public DataError {
 public:
  using DataError::DataError;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class DanglingReferenceError : public DataError {
 public:
  using DataError::DataError;
};

/// Optimization failure (NaN loss, single-class training set, ...).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage used before it was trained.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A metric whose definition requires data that is absent (e.g. AUC with one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace lungcadex
