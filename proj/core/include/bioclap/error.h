/*
 * Copyright 2026 The bioclap Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef BIOCLAP_ERROR_H_
#define BIOCLAP_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace bioclap {

enum class ErrorCode {
  kMalformedManifest,
  kUnknownSource,
  kEmptyCorpus,
  kMissingName,
  kUnsupportedEncoding,
  kCorruptFile,
  kConfigMismatch,
  kZeroVector,
  kDimensionMismatch,
  kCorruptContainer,
  kNonFiniteLoss,
  kDivergence,
  kDuplicateId,
  kInvalidArgument,
  kNotFound,
  kIo,
};

std::string_view ErrorCodeName(ErrorCode code);

// All recoverable failures in the library surface as this exception type.
// The code is stable and machine-readable; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bioclap

#endif  // BIOCLAP_ERROR_H_
