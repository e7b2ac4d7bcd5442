#pragma once

#include <stdexcept>
#include <string>

namespace gridcoord {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// An id that does not resolve to a known entity.
class ReferenceError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented invariant.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Input too large for an exhaustive routine.
class SizeError : public Error {
 public:
  using Error::Error;
};

}  // namespace gridcoord
