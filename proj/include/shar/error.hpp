/* Copyright 2026 The subbyte-har Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <stdexcept>
#include <string>

namespace shar {

enum class ErrorKind {
  usage,      // bad command-line or API usage
  config,     // invalid configuration (unknown width, empty grid, ...)
  data,       // empty / malformed dataset
  format,     // malformed file or buffer
  range,      // value outside its representable range
  dimension,  // shape mismatch
  numeric,    // non-finite value, non-representable scale
  state,      // missing cache or wrong call order
  selection,  // backbone selection impossible
  io,         // file could not be opened or written
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit status used by the command-line tool:
// 1 usage/config, 2 data/format/io/range/dimension, 3 numeric/state/selection.
int exit_status(ErrorKind kind);

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace shar
