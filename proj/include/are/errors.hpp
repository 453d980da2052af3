// Copyright 2026 The are-bci Authors
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

namespace are {

/// Bad argument values or violated preconditions.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape disagreement.
struct DimensionError : ValidationError {
  explicit DimensionError(const std::string& msg) : ValidationError(msg) {}
};

/// Iterative numerics failed to converge or produced non-finite values.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API misuse (e.g. asking for a gradient of a tensor not on the tape).
struct UsageError : std::logic_error {
  explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

/// Malformed on-disk data: bad magic, version, truncation, shape mismatch.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem failures.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unsupported operation (e.g. upsampling).
struct UnsupportedError : std::runtime_error {
  explicit UnsupportedError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace are
