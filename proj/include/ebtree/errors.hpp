#pragma once

#include <stdexcept>
#include <string>

namespace ebtree {

/// Position outside the valid rank range, or a read against an empty tree.
class RangeError : public std::out_of_range {
  public:
    using std::out_of_range::out_of_range;
};

/// Byte string of the wrong shape (digest width, framing, hex).
class CodecError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Internal precondition broken by the caller (e.g. splitting a non-full child).
class ContractViolation : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

class NotFoundError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A mutation lost the race against another committed mutation.
class ConflictError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Stored or received bytes failed an authenticity check (CRC, GCM tag).
class IntegrityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class EmptyFileError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class AuthError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class TransportError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace ebtree
