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

#ifndef BIOCLAP_TOOLS_SERVICE_H_
#define BIOCLAP_TOOLS_SERVICE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bioclap/encoder.h"
#include "bioclap/vector_index.h"

namespace httplib {
class Server;
}

namespace bioclap::tools {

inline constexpr std::size_t kMaxK = 1000;

struct ServiceConfig {
  std::filesystem::path corpus_root;
  std::filesystem::path index_path;
  // Empty: taken from the index's "checkpoint" attribute.
  std::filesystem::path checkpoint_path;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string caption_endpoint;
  std::string caption_token;
  std::string admin_token;
  std::size_t max_in_flight_client_calls = 4;
  bool desk_defaults = true;

  // Throws Error{kInvalidArgument} for a bad port or missing index path.
  void Validate() const;
};

// JSON object with camelCase keys. BIOCLAP_CAPTION_TOKEN and
// BIOCLAP_ADMIN_TOKEN override the tokens when set.
ServiceConfig LoadServiceConfig(const std::filesystem::path& path);
void ApplyEnvironment(ServiceConfig& config);

// Immutable state shared by in-flight requests.
struct ServingState {
  VectorIndex index{1};
  DualEncoderModel model;
  std::filesystem::path checkpoint_path;
};

std::shared_ptr<const ServingState> LoadServingState(const std::filesystem::path& index_path,
                                                     const std::filesystem::path& checkpoint_path);

// Shared by the CLI and HTTP search so that both rank identically. k is
// clamped to kMaxK.
std::vector<SearchResult> SearchText(const ServingState& state, std::string_view text,
                                     std::size_t k);

struct LabelScore {
  std::string label;
  double score = 0.0;
};
std::vector<LabelScore> ClassifyEmbedding(const ServingState& state, const Embedding& audio,
                                          std::span<const std::string> labels);

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class GatewayService {
 public:
  explicit GatewayService(ServiceConfig config);

  // Loads index and checkpoint and publishes them. Throws on failure, in
  // which case the previous snapshot stays published.
  void Reload();
  void Publish(std::shared_ptr<const ServingState> state) { snapshot_.Publish(std::move(state)); }
  std::shared_ptr<const ServingState> snapshot() const { return snapshot_.Get(); }
  const ServiceConfig& config() const { return config_; }

  HttpReply Search(std::string_view body) const;
  HttpReply Classify(std::string_view body) const;
  HttpReply ClassifyUpload(std::span<const std::uint8_t> wav,
                           std::span<const std::string> labels) const;
  HttpReply Audio(std::string_view clip_id) const;
  HttpReply AdminReload(std::string_view authorization);
  HttpReply Health() const;

 private:
  HttpReply ClassifyReply(const ServingState& state, const Embedding& audio,
                          std::span<const std::string> labels) const;

  ServiceConfig config_;
  Snapshot<ServingState> snapshot_;
};

std::string ErrorBody(std::string_view code, std::string_view message);

// httplib front end for GatewayService.
class HttpServer {
 public:
  explicit HttpServer(GatewayService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Returns the bound port. Throws Error{kIo} when binding fails.
  int Bind(const std::string& host, int port);
  // Blocks until Stop().
  void Run();
  void WaitUntilReady() const;
  void Stop();

 private:
  GatewayService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace bioclap::tools

#endif  // BIOCLAP_TOOLS_SERVICE_H_
