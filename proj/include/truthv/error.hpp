// Copyright 2026 The TruthV Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace truthv {

// Error categories double as the machine-parseable prefix the CLI prints.
enum class ErrorKind {
  kUsage,       // bad flags or flag combinations
  kIo,          // file cannot be opened / written
  kFormat,      // malformed line or record
  kStructural,  // missing tensor or probe column
  kShape,       // tensor or matrix dimensions disagree
  kNumeric,     // non-finite value
  kRange,       // index or parameter out of bounds
  kIntegrity,   // checksum failure or truncation
  kVersion,     // unsupported file version
  kRig,         // synthetic construction impossible for the given inputs
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kStructural: return "structural";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kIntegrity: return "integrity";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kRig: return "rig";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(ErrorKind kind, Args&&... args) {
  throw Error(kind, detail::concat(std::forward<Args>(args)...));
}

// Re-throws `e` with a context prefix, keeping its category.
[[noreturn]] inline void rethrow_with_context(const Error& e,
                                              const std::string& context) {
  throw Error(e.kind(), context + ": " + e.what());
}

}  // namespace truthv
