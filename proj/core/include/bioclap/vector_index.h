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

#ifndef BIOCLAP_VECTOR_INDEX_H_
#define BIOCLAP_VECTOR_INDEX_H_

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bioclap/encoder.h"

namespace bioclap {

struct IndexEntry {
  std::string clip_id;
  std::string recording_id;
  Embedding embedding;
  std::string caption_common;
  std::optional<std::string> species_common;
  std::optional<std::string> species_scientific;
  std::string audio_path;
  int chunk_index = 0;
};

struct SearchResult {
  std::string clip_id;
  float score = 0.0f;  // cosine similarity
  int rank = 0;        // 1-based
};

// Exact cosine search over normalized embeddings. Results are sorted by score
// descending with ties broken by ascending clip id.
class VectorIndex {
 public:
  explicit VectorIndex(int dim);

  // Unnormalized embeddings are normalized on insert. Throws
  // Error{kDuplicateId}, Error{kDimensionMismatch} or Error{kZeroVector}.
  void Add(IndexEntry entry);

  // Throws Error{kInvalidArgument} for k < 1 or an empty index and
  // Error{kDimensionMismatch} for a query of the wrong size.
  std::vector<SearchResult> Search(std::span<const float> query, std::size_t k) const;

  const IndexEntry* Find(std::string_view clip_id) const;
  const std::vector<IndexEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  int dim() const { return dim_; }

  // Free-form string attributes persisted with the index (e.g. the
  // checkpoint that produced it).
  std::map<std::string, std::string>& attributes() { return attributes_; }
  const std::map<std::string, std::string>& attributes() const { return attributes_; }

  // New index holding the entries that satisfy `keep`, in the same order.
  VectorIndex Filter(const std::function<bool(const IndexEntry&)>& keep) const;

  // Directory layout: embeddings.bin (embedding container),
  // metadata.jsonl (one line per clip id), index.json (dim, count,
  // attributes).
  void Save(const std::filesystem::path& dir) const;
  static VectorIndex Load(const std::filesystem::path& dir);

 private:
  int dim_;
  std::vector<IndexEntry> entries_;
  std::vector<float> matrix_;  // row-major copy of the embeddings
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<std::string, std::string> attributes_;
};

// Holds the currently published immutable value. Readers take a shared_ptr
// and keep using it while a writer swaps in a replacement.
template <typename T>
class Snapshot {
 public:
  std::shared_ptr<const T> Get() const {
    std::lock_guard lock(mu_);
    return value_;
  }
  void Publish(std::shared_ptr<const T> value) {
    std::lock_guard lock(mu_);
    value_ = std::move(value);
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const T> value_;
};

}  // namespace bioclap

#endif  // BIOCLAP_VECTOR_INDEX_H_
