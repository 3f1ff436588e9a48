/* Copyright 2026 The mglp Authors. All Rights Reserved.

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
#ifndef MGLP_ERRORS_HPP_
#define MGLP_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace mglp {

// User-facing input problem (bad config value, malformed file, size mismatch
// at an API boundary). Maps to process exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A stated internal contract was violated (overlapping parallel writes,
// non-finite values, broken solver precondition). Maps to exit code 2.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

}  // namespace mglp

#endif  // MGLP_ERRORS_HPP_
