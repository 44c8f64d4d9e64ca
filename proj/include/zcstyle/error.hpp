// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zcstyle {

/// Coarse error category. The CLI maps each kind to its own exit code.
enum class ErrorKind {
  kInvalidArgument,
  kShape,
  kParse,
  kRange,
  kIo,
  kResource,
  kUnsupported,
  kVerification,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace zcstyle
