// Copyright 2026 The ACAE Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include <stdexcept>
#include <string>

namespace acae {

/// Failure categories surfaced through the C API as status codes.
enum class ErrorCode {
  kInvalidArgument = 1,
  kDimensionMismatch = 2,
  kIo = 3,
  kParse = 4,
  kNumerical = 5,
  kColdPair = 6,
  kConfig = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace acae

/// Like acae::require, but the message expression is only evaluated on
/// failure. Use on hot paths.
#define ACAE_REQUIRE(cond, code, what)         \
  do {                                         \
    if (!(cond)) ::acae::fail((code), (what)); \
  } while (0)

namespace acae {

}  // namespace acae
