#pragma once

#include <stdexcept>
#include <string>

namespace refpcc {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration supplied by the caller.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A byte stream or container failed validation while decoding.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Compressor and decompressor disagree about shared state
/// (unknown reference id, wrong map, ...).
class MismatchError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written, or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace refpcc
