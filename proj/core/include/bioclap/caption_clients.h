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

#ifndef BIOCLAP_CAPTION_CLIENTS_H_
#define BIOCLAP_CAPTION_CLIENTS_H_

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "bioclap/captioner.h"

namespace bioclap {

// Replays a fixed list of replies in order; once exhausted it repeats the
// last one. Records every request it receives.
class ScriptedCaptionClient : public CaptionClient {
 public:
  explicit ScriptedCaptionClient(std::vector<ClientReply> script);

  ClientReply Complete(const CaptionRequest& request) override;

  int calls() const;
  std::vector<CaptionRequest> requests() const;

 private:
  mutable std::mutex mu_;
  std::vector<ClientReply> script_;
  std::vector<CaptionRequest> requests_;
};

// Delegates to a callable. Handy for per-record scripted behavior.
class FunctionCaptionClient : public CaptionClient {
 public:
  using Fn = std::function<ClientReply(const CaptionRequest&)>;
  explicit FunctionCaptionClient(Fn fn) : fn_(std::move(fn)) {}

  ClientReply Complete(const CaptionRequest& request) override {
    ++calls_;
    return fn_(request);
  }
  int calls() const { return calls_.load(); }

 private:
  Fn fn_;
  std::atomic<int> calls_{0};
};

// POSTs {promptKind, prompt, speciesName, notes, metadata} as JSON to
// `endpoint` and expects {"text": "..."} back. Transport failures, non-2xx
// statuses and refusals ({"error": ...}) come back as ClientReply failures.
class HttpCaptionClient : public CaptionClient {
 public:
  HttpCaptionClient(std::string endpoint, std::string token,
                    std::chrono::milliseconds timeout = std::chrono::seconds(30));

  ClientReply Complete(const CaptionRequest& request) override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string token_;
  std::chrono::milliseconds timeout_;
};

}  // namespace bioclap

#endif  // BIOCLAP_CAPTION_CLIENTS_H_
