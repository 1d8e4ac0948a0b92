#pragma once

#include <stdexcept>
#include <string>

namespace sfg {

// Base of every error thrown by the library. The CLI maps ConfigError to exit
// code 1 (usage) and every other error to 2 (data).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Raised by local_semantics when the prompt has no non-BOS tokens.
class EmptyPromptError : public Error {
 public:
  using Error::Error;
};

}  // namespace sfg
