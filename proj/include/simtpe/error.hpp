// Copyright 2026 The simtpe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SIMTPE_ERROR_HPP_
#define SIMTPE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace simtpe {

// Base class for errors raised by the library. The C API maps each subclass
// to its own status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

#define SIMTPE_CHECK(cond, msg)                                   \
  do {                                                            \
    if (!(cond)) throw ::simtpe::InvalidArgument(std::string(msg)); \
  } while (0)

}  // namespace simtpe

#endif  // SIMTPE_ERROR_HPP_
