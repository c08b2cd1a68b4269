// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace panofuse {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or an unusable layout.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Image or tensor extents do not match what an operation expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A canvas pixel that must be covered by at least one crop is not.
class CoverageError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf values, or an optimization step that violated its contract.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A model oracle (in-process or remote) failed.
class OracleError : public Error {
 public:
  using Error::Error;
};

/// Malformed wire message, checksum mismatch or 4xx response.
class ProtocolError : public OracleError {
 public:
  explicit ProtocolError(const std::string& what, int status = 0)
      : OracleError(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// Tensor payload does not match its CRC.
class ChecksumError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A required input file does not exist.
class MissingFileError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace panofuse
