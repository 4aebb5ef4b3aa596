#pragma once

#include <stdexcept>
#include <string>

namespace advpurify {

// Root of every error this library raises. Callers that only need to report
// a failure can catch this; the subclasses exist for tests and for the CLI's
// exit-code mapping.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, or values outside the image box where one is required.
class CorruptTensorError : public Error {
 public:
  using Error::Error;
};

// Malformed or version-mismatched files.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ArchitectureError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// A probability argument outside [0, 1].
class DomainError : public Error {
 public:
  using Error::Error;
};

// A training loss became NaN or infinite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// A pipeline step needs an artifact that an earlier command produces.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace advpurify
