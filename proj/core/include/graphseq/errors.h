#pragma once

#include <stdexcept>
#include <string>

namespace graphseq {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Graph construction violated a TextGraph invariant.
class InvalidGraphError : public Error {
 public:
  using Error::Error;
};

// Deserialization failures. Any of these marks a generated sample unparsable.
class ParseError : public Error {
 public:
  using Error::Error;
};
class SyntaxError : public ParseError {
 public:
  using ParseError::ParseError;
};
class DuplicateEdgeError : public ParseError {
 public:
  using ParseError::ParseError;
};
class EmptyLabelError : public ParseError {
 public:
  using ParseError::ParseError;
};

class TokenizerError : public Error {
 public:
  using Error::Error;
};

// Derived graph or alignment does not match the graph it was built from.
class MismatchError : public Error {
 public:
  using Error::Error;
};

class UnknownElementError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class InfeasibleSpecError : public Error {
 public:
  using Error::Error;
};

// MAE is undefined when no sample could be scored.
class NoParsableSamplesError : public Error {
 public:
  using Error::Error;
};

}  // namespace graphseq
