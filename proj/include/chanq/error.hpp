// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace chanq {

/// Base class for recoverable data errors (bad files, bad shapes, bad graphs).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Parse, I/O and file-format failures.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Graph structure problems: dangling tensor names, cycles, unsupported patterns.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied options (bad mode name, bad synthetic spec, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// An internal invariant was violated. Indicates a bug, not bad input.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace chanq
