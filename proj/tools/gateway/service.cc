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

#include "gateway/service.h"

#include <cstdlib>
#include <fstream>

#include "bioclap/audio.h"
#include "bioclap/error.h"
#include "bioclap/trainer.h"
#include "gateway/artifacts.h"
#include "httplib.h"
#include "json.hpp"

namespace bioclap::tools {

namespace fs = std::filesystem;
using nlohmann::json;

void ServiceConfig::Validate() const {
  if (port < 0 || port > 65535) {
    throw Error(ErrorCode::kInvalidArgument, "port out of range: " + std::to_string(port));
  }
  if (index_path.empty()) throw Error(ErrorCode::kInvalidArgument, "indexPath is required");
  if (max_in_flight_client_calls < 1) {
    throw Error(ErrorCode::kInvalidArgument, "maxInFlightClientCalls must be >= 1");
  }
}

void ApplyEnvironment(ServiceConfig& config) {
  if (const char* v = std::getenv("BIOCLAP_CAPTION_TOKEN"); v && *v) config.caption_token = v;
  if (const char* v = std::getenv("BIOCLAP_ADMIN_TOKEN"); v && *v) config.admin_token = v;
}

ServiceConfig LoadServiceConfig(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  ServiceConfig c;
  try {
    const json j = json::parse(in);
    const fs::path base = path.parent_path();
    auto path_field = [&](const char* key, fs::path& out) {
      if (!j.contains(key)) return;
      out = j[key].get<std::string>();
      if (out.is_relative()) out = base / out;
    };
    path_field("corpusRoot", c.corpus_root);
    path_field("indexPath", c.index_path);
    path_field("checkpointPath", c.checkpoint_path);
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.caption_endpoint = j.value("captionEndpoint", c.caption_endpoint);
    c.caption_token = j.value("captionToken", c.caption_token);
    c.admin_token = j.value("adminToken", c.admin_token);
    c.max_in_flight_client_calls = j.value("maxInFlightClientCalls", c.max_in_flight_client_calls);
    c.desk_defaults = j.value("deskDefaults", c.desk_defaults);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
  ApplyEnvironment(c);
  c.Validate();
  return c;
}

std::shared_ptr<const ServingState> LoadServingState(const fs::path& index_path,
                                                     const fs::path& checkpoint_path) {
  auto state = std::make_shared<ServingState>();
  state->index = VectorIndex::Load(index_path);
  state->checkpoint_path = checkpoint_path;
  if (state->checkpoint_path.empty()) {
    const auto& attrs = state->index.attributes();
    const auto it = attrs.find("checkpoint");
    if (it == attrs.end()) {
      throw Error(ErrorCode::kNotFound, "no checkpoint given and none recorded in the index");
    }
    state->checkpoint_path = it->second;
  }
  state->model = LoadCheckpoint(state->checkpoint_path).model;
  if (state->model.embedding_dim() != state->index.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "checkpoint and index embedding sizes differ");
  }
  return state;
}

std::vector<SearchResult> SearchText(const ServingState& state, std::string_view text,
                                     std::size_t k) {
  const Embedding query = state.model.EmbedText(text);
  return state.index.Search(query.values, std::min(k, kMaxK));
}

std::vector<LabelScore> ClassifyEmbedding(const ServingState& state, const Embedding& audio,
                                          std::span<const std::string> labels) {
  if (labels.empty()) throw Error(ErrorCode::kInvalidArgument, "empty label list");
  std::vector<LabelScore> out;
  for (const auto& label : labels) {
    out.push_back({label, Cosine(audio.values, state.model.EmbedText(label).values)});
  }
  return out;
}

std::string ErrorBody(std::string_view code, std::string_view message) {
  return json{{"error", {{"code", code}, {"message", message}}}}.dump();
}

namespace {

HttpReply Fail(int status, std::string_view code, std::string_view message) {
  return {status, "application/json", ErrorBody(code, message)};
}

HttpReply NotLoaded() { return Fail(503, "Unavailable", "index not loaded"); }

int StatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kUnsupportedEncoding:
    case ErrorCode::kCorruptFile:
    case ErrorCode::kZeroVector:
      return 400;
    default:
      return 500;
  }
}

HttpReply FromError(const Error& e) {
  return Fail(StatusFor(e.code()), ErrorCodeName(e.code()), e.what());
}

std::optional<json> ParseBody(std::string_view body, HttpReply* error) {
  try {
    json j = json::parse(body);
    if (!j.is_object()) {
      *error = Fail(400, "InvalidArgument", "request body must be a JSON object");
      return std::nullopt;
    }
    return j;
  } catch (const json::exception& e) {
    *error = Fail(400, "InvalidArgument", std::string("invalid JSON: ") + e.what());
    return std::nullopt;
  }
}

}  // namespace

GatewayService::GatewayService(ServiceConfig config) : config_(std::move(config)) {}

void GatewayService::Reload() {
  snapshot_.Publish(LoadServingState(config_.index_path, config_.checkpoint_path));
}

HttpReply GatewayService::Search(std::string_view body) const {
  HttpReply error;
  const auto req = ParseBody(body, &error);
  if (!req) return error;
  const auto state = snapshot_.Get();
  if (!state) return NotLoaded();

  const std::string text = req->value("text", "");
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    return Fail(400, "InvalidArgument", "empty query");
  }
  const json& k_field = req->contains("k") ? (*req)["k"] : json(10);
  if (!k_field.is_number_integer() || k_field.get<long long>() < 1) {
    return Fail(400, "InvalidArgument", "k must be an integer >= 1");
  }
  try {
    const auto k = static_cast<std::size_t>(k_field.get<long long>());
    json results = json::array();
    for (const auto& hit : SearchText(*state, text, k)) {
      const IndexEntry* e = state->index.Find(hit.clip_id);
      results.push_back({{"rank", hit.rank},
                         {"clipId", hit.clip_id},
                         {"score", hit.score},
                         {"caption", e->caption_common},
                         {"speciesCommon", e->species_common ? json(*e->species_common) : json()},
                         {"audioUrl", "/v1/audio/" + hit.clip_id}});
    }
    return {200, "application/json", json{{"results", results}}.dump()};
  } catch (const Error& e) {
    return FromError(e);
  }
}

HttpReply GatewayService::ClassifyReply(const ServingState& state, const Embedding& audio,
                                        std::span<const std::string> labels) const {
  const auto scores = ClassifyEmbedding(state, audio, labels);
  json arr = json::array();
  std::size_t best = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    arr.push_back({{"label", scores[i].label}, {"score", scores[i].score}});
    if (scores[i].score > scores[best].score) best = i;
  }
  return {200, "application/json",
          json{{"scores", arr}, {"argmaxLabel", scores[best].label}}.dump()};
}

HttpReply GatewayService::Classify(std::string_view body) const {
  HttpReply error;
  const auto req = ParseBody(body, &error);
  if (!req) return error;
  const auto state = snapshot_.Get();
  if (!state) return NotLoaded();
  try {
    const auto labels = req->value("labels", std::vector<std::string>{});
    if (labels.empty()) return Fail(400, "InvalidArgument", "empty label list");
    const std::string clip_id = req->value("clipId", "");
    if (clip_id.empty()) return Fail(400, "InvalidArgument", "clipId or audio upload required");
    const IndexEntry* entry = state->index.Find(clip_id);
    if (!entry) return Fail(404, "NotFound", "unknown clipId " + clip_id);
    return ClassifyReply(*state, entry->embedding, labels);
  } catch (const json::exception& e) {
    return Fail(400, "InvalidArgument", e.what());
  } catch (const Error& e) {
    return FromError(e);
  }
}

HttpReply GatewayService::ClassifyUpload(std::span<const std::uint8_t> wav,
                                         std::span<const std::string> labels) const {
  const auto state = snapshot_.Get();
  if (!state) return NotLoaded();
  if (labels.empty()) return Fail(400, "InvalidArgument", "empty label list");
  try {
    const AudioClip clip = DecodeWav(wav);
    const Embedding audio = state->model.EmbedAudio(CanonicalMel(clip, state->model.config.mel_bins));
    return ClassifyReply(*state, audio, labels);
  } catch (const Error& e) {
    return FromError(e);
  }
}

HttpReply GatewayService::Audio(std::string_view clip_id) const {
  const auto state = snapshot_.Get();
  if (!state) return NotLoaded();
  const IndexEntry* entry = state->index.Find(clip_id);
  if (!entry) return Fail(404, "NotFound", "unknown clipId " + std::string(clip_id));
  std::ifstream in(entry->audio_path, std::ios::binary);
  if (!in) return Fail(500, "Io", "clip audio missing on disk");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return {200, "audio/wav", std::move(bytes)};
}

HttpReply GatewayService::AdminReload(std::string_view authorization) {
  if (!config_.admin_token.empty() && authorization != "Bearer " + config_.admin_token) {
    return Fail(401, "Unauthorized", "admin token required");
  }
  try {
    Reload();
  } catch (const Error& e) {
    return Fail(500, ErrorCodeName(e.code()), e.what());
  }
  const auto state = snapshot_.Get();
  return {200, "application/json",
          json{{"reloaded", true}, {"clips", state->index.size()}}.dump()};
}

HttpReply GatewayService::Health() const {
  const auto state = snapshot_.Get();
  json body{{"status", "ok"}, {"indexLoaded", state != nullptr}};
  if (state) {
    body["clips"] = state->index.size();
    body["dim"] = state->index.dim();
  }
  return {200, "application/json", body.dump()};
}

HttpServer::HttpServer(GatewayService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto send = [](httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  };
  server_->Post("/v1/search", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.Search(req.body));
  });
  server_->Post("/v1/classify", [this, send](const httplib::Request& req,
                                              httplib::Response& res) {
    if (!req.is_multipart_form_data()) {
      send(res, service_.Classify(req.body));
      return;
    }
    if (!req.has_file("audio")) {
      send(res, {400, "application/json", ErrorBody("InvalidArgument", "missing audio part")});
      return;
    }
    const auto audio = req.get_file_value("audio");
    std::vector<std::string> labels;
    for (const auto& part : req.get_file_values("labels")) {
      if (!part.content.empty()) labels.push_back(part.content);
    }
    const std::vector<std::uint8_t> bytes(audio.content.begin(), audio.content.end());
    send(res, service_.ClassifyUpload(bytes, labels));
  });
  server_->Get(R"(/v1/audio/(.+))", [this, send](const httplib::Request& req,
                                                   httplib::Response& res) {
    send(res, service_.Audio(req.matches[1].str()));
  });
  server_->Post("/v1/admin/reload", [this, send](const httplib::Request& req,
                                                  httplib::Response& res) {
    send(res, service_.AdminReload(req.get_header_value("Authorization")));
  });
  server_->Get("/v1/health", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, service_.Health());
  });
}

HttpServer::~HttpServer() { Stop(); }

int HttpServer::Bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::Run() { server_->listen_after_bind(); }

void HttpServer::WaitUntilReady() const { server_->wait_until_ready(); }

void HttpServer::Stop() {
  if (server_->is_running()) server_->stop();
}

}  // namespace bioclap::tools
