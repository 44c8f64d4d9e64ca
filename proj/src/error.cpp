// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zcstyle/error.hpp"

namespace zcstyle {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kResource: return "resource";
    case ErrorKind::kUnsupported: return "unsupported";
    case ErrorKind::kVerification: return "verification";
  }
  return "unknown";
}

}  // namespace zcstyle
