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

#include "bioclap/vector_index.h"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "bioclap/error.h"
#include "json.hpp"

namespace bioclap {
namespace {

using nlohmann::json;

constexpr int kIndexVersion = 1;

bool RanksBefore(float score_a, const std::string& id_a, float score_b, const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

}  // namespace

VectorIndex::VectorIndex(int dim) : dim_(dim) {
  if (dim < 1) throw Error(ErrorCode::kInvalidArgument, "index dimension must be >= 1");
}

void VectorIndex::Add(IndexEntry entry) {
  if (static_cast<int>(entry.embedding.dim()) != dim_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "index has dimension " + std::to_string(dim_) + ", entry " + entry.clip_id +
                    " has " + std::to_string(entry.embedding.dim()));
  }
  if (by_id_.contains(entry.clip_id)) throw Error(ErrorCode::kDuplicateId, entry.clip_id);
  if (!entry.embedding.normalized) entry.embedding = Normalize(entry.embedding);
  by_id_.emplace(entry.clip_id, entries_.size());
  matrix_.insert(matrix_.end(), entry.embedding.values.begin(), entry.embedding.values.end());
  entries_.push_back(std::move(entry));
}

std::vector<SearchResult> VectorIndex::Search(std::span<const float> query, std::size_t k) const {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (entries_.empty()) throw Error(ErrorCode::kInvalidArgument, "index is empty");
  if (static_cast<int>(query.size()) != dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "query dimension " + std::to_string(query.size()) +
                                                   " != index dimension " + std::to_string(dim_));
  }
  const std::size_t n = entries_.size();
  std::vector<float> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = matrix_.data() + i * static_cast<std::size_t>(dim_);
    double dot = 0.0;
    for (int d = 0; d < dim_; ++d) dot += static_cast<double>(row[d]) * query[d];
    scores[i] = static_cast<float>(dot);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto before = [&](std::size_t a, std::size_t b) {
    return RanksBefore(scores[a], entries_[a].clip_id, scores[b], entries_[b].clip_id);
  };
  const std::size_t take = std::min(k, n);
  if (take < n) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), before);
    order.resize(take);
  }
  std::sort(order.begin(), order.end(), before);

  std::vector<SearchResult> results;
  results.reserve(take);
  for (std::size_t r = 0; r < take; ++r) {
    results.push_back({entries_[order[r]].clip_id, scores[order[r]], static_cast<int>(r + 1)});
  }
  return results;
}

const IndexEntry* VectorIndex::Find(std::string_view clip_id) const {
  const auto it = by_id_.find(std::string(clip_id));
  return it == by_id_.end() ? nullptr : &entries_[it->second];
}

VectorIndex VectorIndex::Filter(const std::function<bool(const IndexEntry&)>& keep) const {
  VectorIndex out(dim_);
  out.attributes_ = attributes_;
  for (const auto& e : entries_) {
    if (keep(e)) out.Add(e);
  }
  return out;
}

void VectorIndex::Save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::vector<NamedEmbedding> named;
  named.reserve(entries_.size());
  for (const auto& e : entries_) named.push_back({e.clip_id, e.embedding});
  WriteEmbeddings(dir / "embeddings.bin", named);

  std::ofstream meta(dir / "metadata.jsonl", std::ios::binary);
  if (!meta) throw Error(ErrorCode::kIo, "cannot write index metadata in " + dir.string());
  for (const auto& e : entries_) {
    json j{{"clipId", e.clip_id},
           {"recordingId", e.recording_id},
           {"captionCommon", e.caption_common},
           {"audioPath", e.audio_path},
           {"chunkIndex", e.chunk_index}};
    if (e.species_common) j["speciesCommon"] = *e.species_common;
    if (e.species_scientific) j["speciesScientific"] = *e.species_scientific;
    meta << j.dump() << '\n';
  }
  std::ofstream info(dir / "index.json", std::ios::binary);
  if (!info) throw Error(ErrorCode::kIo, "cannot write index.json in " + dir.string());
  info << json{{"version", kIndexVersion},
               {"dim", dim_},
               {"count", entries_.size()},
               {"attributes", attributes_}}
              .dump(2)
       << '\n';
}

VectorIndex VectorIndex::Load(const std::filesystem::path& dir) {
  json info;
  {
    std::ifstream in(dir / "index.json");
    if (!in) throw Error(ErrorCode::kIo, "no index.json in " + dir.string());
    try {
      info = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kCorruptContainer, std::string("index.json: ") + e.what());
    }
  }
  VectorIndex index(info.at("dim").get<int>());
  index.attributes_ = info.value("attributes", std::map<std::string, std::string>{});

  std::unordered_map<std::string, json> metadata;
  std::ifstream meta(dir / "metadata.jsonl");
  if (!meta) throw Error(ErrorCode::kIo, "no metadata.jsonl in " + dir.string());
  for (std::string line; std::getline(meta, line);) {
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      metadata.emplace(j.at("clipId").get<std::string>(), std::move(j));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kCorruptContainer, std::string("metadata.jsonl: ") + e.what());
    }
  }

  for (auto& named : ReadEmbeddings(dir / "embeddings.bin")) {
    const auto it = metadata.find(named.id);
    if (it == metadata.end()) {
      throw Error(ErrorCode::kCorruptContainer, "no metadata for clip " + named.id);
    }
    const json& j = it->second;
    IndexEntry e;
    e.clip_id = named.id;
    e.recording_id = j.value("recordingId", "");
    e.caption_common = j.value("captionCommon", "");
    e.audio_path = j.value("audioPath", "");
    e.chunk_index = j.value("chunkIndex", 0);
    if (j.contains("speciesCommon")) e.species_common = j["speciesCommon"].get<std::string>();
    if (j.contains("speciesScientific")) {
      e.species_scientific = j["speciesScientific"].get<std::string>();
    }
    // Stored values are used as-is so reloaded searches match bit for bit.
    e.embedding = std::move(named.embedding);
    e.embedding.normalized = true;
    index.Add(std::move(e));
  }
  return index;
}

}  // namespace bioclap
