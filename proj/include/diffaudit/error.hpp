#pragma once

#include <stdexcept>
#include <string>

namespace diffaudit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OntologyError : public Error {
 public:
  using Error::Error;
};

class UnknownLabelError : public Error {
 public:
  explicit UnknownLabelError(const std::string& label)
      : Error("unknown data type label: '" + label + "'") {}
};

class IngestError : public Error {
 public:
  using Error::Error;
};

class DestinationError : public Error {
 public:
  using Error::Error;
};

class ClassifyError : public Error {
 public:
  using Error::Error;
};

class AuditError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace diffaudit
