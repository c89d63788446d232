#pragma once

#include <stdexcept>
#include <string>

namespace wafertopo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: configs, CLI arguments, mismatched shapes.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Magic, version or truncation problems in one of the binary formats.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace wafertopo
