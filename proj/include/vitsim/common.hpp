// Copyright 2026 The vitsim Authors
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

#ifndef VITSIM_COMMON_HPP_
#define VITSIM_COMMON_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vitsim {

// Error hierarchy. Every validation failure names the offending field in
// its message so the CLI can forward it verbatim.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidTopology : public Error {
 public:
  using Error::Error;
};

class InvalidDecomposition : public Error {
 public:
  using Error::Error;
};

class ArithmeticOverflow : public Error {
 public:
  using Error::Error;
};

class CyclicSchedule : public Error {
 public:
  using Error::Error;
};

using Count = std::int64_t;

namespace detail {

inline Count checked_mul(Count a, Count b, const char *what) {
  Count out = 0;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw ArithmeticOverflow(std::string("integer overflow computing ") + what);
  }
  return out;
}

inline Count checked_add(Count a, Count b, const char *what) {
  Count out = 0;
  if (__builtin_add_overflow(a, b, &out)) {
    throw ArithmeticOverflow(std::string("integer overflow computing ") + what);
  }
  return out;
}

inline Count ceil_div(Count a, Count b) { return (a + b - 1) / b; }

}  // namespace detail

inline constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;
inline constexpr double kGB = 1.0e9;

}  // namespace vitsim

#endif  // VITSIM_COMMON_HPP_
