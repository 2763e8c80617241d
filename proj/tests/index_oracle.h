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

#ifndef BIOCLAP_TESTS_INDEX_ORACLE_H_
#define BIOCLAP_TESTS_INDEX_ORACLE_H_

#include <algorithm>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bioclap/vector_index.h"

namespace bioclap::testing {

// Scores every entry, sorts the whole list by (score desc, clip id asc) and
// keeps the first k.
inline std::vector<std::pair<std::string, float>> BruteForceTopK(const VectorIndex& index,
                                                                  std::span<const float> q,
                                                                  std::size_t k) {
  std::vector<std::pair<std::string, float>> all;
  for (const auto& e : index.entries()) {
    double dot = 0;
    for (std::size_t d = 0; d < q.size(); ++d) dot += static_cast<double>(e.embedding.values[d]) * q[d];
    all.emplace_back(e.clip_id, static_cast<float>(dot));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

// Random unit vectors; every tenth entry duplicates an earlier vector so
// that tie-breaking is exercised.
inline VectorIndex RandomIndex(std::mt19937_64& rng, int count, int dim) {
  VectorIndex index(dim);
  std::normal_distribution<float> g(0, 1);
  std::vector<std::vector<float>> made;
  std::vector<int> ids(count);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  for (int i = 0; i < count; ++i) {
    std::vector<float> v(dim);
    if (i % 10 == 9) {
      v = made[static_cast<std::size_t>(rng() % made.size())];
    } else {
      double n = 0;
      for (auto& x : v) {
        x = g(rng);
        n += double(x) * x;
      }
      for (auto& x : v) x = static_cast<float>(x / std::sqrt(n));
    }
    made.push_back(v);
    IndexEntry e;
    e.clip_id = "clip" + std::to_string(ids[i]);
    e.recording_id = "rec" + std::to_string(ids[i]);
    e.embedding = Embedding{v, true};
    e.caption_common = "caption " + std::to_string(ids[i]);
    index.Add(std::move(e));
  }
  return index;
}

}  // namespace bioclap::testing

#endif  // BIOCLAP_TESTS_INDEX_ORACLE_H_
