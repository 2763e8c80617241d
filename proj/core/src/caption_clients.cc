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

#include "bioclap/caption_clients.h"

#include "httplib.h"
#include "json.hpp"

namespace bioclap {
namespace {
constexpr int kPromptVersion = 1;
}  // namespace

ScriptedCaptionClient::ScriptedCaptionClient(std::vector<ClientReply> script)
    : script_(std::move(script)) {}

ClientReply ScriptedCaptionClient::Complete(const CaptionRequest& request) {
  std::lock_guard lock(mu_);
  const std::size_t index = requests_.size();
  requests_.push_back(request);
  if (script_.empty()) return ClientReply::Failure("empty script");
  return script_[std::min(index, script_.size() - 1)];
}

int ScriptedCaptionClient::calls() const {
  std::lock_guard lock(mu_);
  return static_cast<int>(requests_.size());
}

std::vector<CaptionRequest> ScriptedCaptionClient::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

HttpCaptionClient::HttpCaptionClient(std::string endpoint, std::string token,
                                     std::chrono::milliseconds timeout)
    : token_(std::move(token)), timeout_(timeout) {
  // Split "http://host:port/path" into the client base and request path.
  const auto scheme_end = endpoint.find("://");
  const auto path_start =
      endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_port_ = endpoint;
    path_ = "/";
  } else {
    scheme_host_port_ = endpoint.substr(0, path_start);
    path_ = endpoint.substr(path_start);
  }
}

ClientReply HttpCaptionClient::Complete(const CaptionRequest& request) {
  nlohmann::json body{{"promptKind", std::string(PromptKindName(request.prompt_kind))},
                      {"promptVersion", kPromptVersion},
                      {"prompt", request.prompt},
                      {"speciesName", request.species_name},
                      {"notes", request.notes},
                      {"metadata", request.metadata}};
  httplib::Client client(scheme_host_port_);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto micros =
      std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  auto response = client.Post(path_, headers, body.dump(), "application/json");
  if (!response) {
    return ClientReply::Failure("transport error: " + httplib::to_string(response.error()));
  }
  if (response->status < 200 || response->status >= 300) {
    return ClientReply::Failure("HTTP " + std::to_string(response->status));
  }
  try {
    const auto reply = nlohmann::json::parse(response->body);
    if (reply.contains("error")) return ClientReply::Failure(reply["error"].dump());
    return ClientReply::Text(reply.at("text").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    return ClientReply::Failure(std::string("bad response: ") + e.what());
  }
}

}  // namespace bioclap
