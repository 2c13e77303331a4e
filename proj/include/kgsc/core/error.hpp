// Copyright 2026 The kgsc Authors
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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kgsc {

enum class ErrorKind {
  kShape,    // tensor geometry disagreement
  kDomain,   // argument outside the operation's domain
  kNumeric,  // non-finite values, divergence, deep fades
  kParse,    // malformed input file
  kIo,       // filesystem failures
  kConfig,   // invalid or missing configuration
  kMissing,  // referenced artifact (checkpoint, embedding) absent
};

std::string_view to_string(ErrorKind kind);

// Process exit status used by the CLI for each category.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace kgsc
