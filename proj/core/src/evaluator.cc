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

#include "bioclap/evaluator.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_map>

#include "bioclap/error.h"
#include "csv.h"
#include "json.hpp"

namespace bioclap {
namespace {

constexpr std::string_view kPrefixA = "The sound of a ";
constexpr std::string_view kPrefixAn = "The sound of an ";

}  // namespace

std::string StripDedupPrefix(std::string_view caption) {
  for (std::string_view prefix : {kPrefixAn, kPrefixA}) {
    if (caption.starts_with(prefix)) return std::string(caption.substr(prefix.size()));
  }
  return std::string(caption);
}

std::string RelevanceKey(std::string_view caption) {
  std::string key = StripDedupPrefix(caption);
  const auto last = key.find_last_not_of(" \t\r\n");
  key.resize(last == std::string::npos ? 0 : last + 1);
  return key;
}

LabelPromptSet LabelPromptSet::FromLabels(std::span<const std::string> labels,
                                          const TextEmbedder& text) {
  std::vector<LabelPrompt> prompts;
  for (const auto& l : labels) prompts.push_back({l, l});
  return FromPrompts(std::move(prompts), text);
}

LabelPromptSet LabelPromptSet::FromPrompts(std::vector<LabelPrompt> prompts,
                                           const TextEmbedder& text) {
  if (prompts.empty()) throw Error(ErrorCode::kInvalidArgument, "empty label list");
  LabelPromptSet set;
  set.labels = std::move(prompts);
  for (const auto& p : set.labels) set.embedded.push_back(text.EmbedText(p.prompt_text));
  return set;
}

std::vector<double> ZeroShotDetectionScores(const Embedding& audio, const LabelPromptSet& prompts) {
  std::vector<double> scores;
  scores.reserve(prompts.embedded.size());
  for (const auto& e : prompts.embedded) scores.push_back(Cosine(audio.values, e.values));
  return scores;
}

const std::string& ZeroShotClassify(const Embedding& audio, const LabelPromptSet& prompts) {
  const auto scores = ZeroShotDetectionScores(audio, prompts);
  if (scores.empty()) throw Error(ErrorCode::kInvalidArgument, "empty label list");
  // max_element returns the first maximum, which is the tie-break we want.
  const auto best = std::max_element(scores.begin(), scores.end());
  return prompts.labels[static_cast<std::size_t>(best - scores.begin())].label_id;
}

double ApAtN(const RankedList& list, std::size_t n) {
  if (list.total_relevant == 0) {
    throw Error(ErrorCode::kInvalidArgument, "AP@N needs at least one relevant item");
  }
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "N must be >= 1");
  const std::size_t depth = std::min(n, list.relevant.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < depth; ++k) {
    if (!list.relevant[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return sum / static_cast<double>(std::min(list.total_relevant, n));
}

double MapAtN(std::span<const RankedList> lists, std::size_t n) {
  if (lists.empty()) throw Error(ErrorCode::kInvalidArgument, "no queries");
  double sum = 0.0;
  for (const auto& l : lists) sum += ApAtN(l, n);
  return sum / static_cast<double>(lists.size());
}

double PrecisionAt1(std::span<const RankedList> lists) {
  if (lists.empty()) throw Error(ErrorCode::kInvalidArgument, "no queries");
  std::size_t hits = 0;
  for (const auto& l : lists) hits += (!l.relevant.empty() && l.relevant[0]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(lists.size());
}

double OraclePrecisionAt1(std::span<const OracleClip> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "no clips");
  std::map<std::string, std::size_t> species_count;
  std::map<std::pair<std::string, std::string>, std::size_t> key_count;
  for (const auto& c : corpus) {
    ++species_count[c.species];
    ++key_count[{c.species, RelevanceKey(c.caption)}];
  }
  double sum = 0.0;
  for (const auto& c : corpus) {
    sum += static_cast<double>(key_count[{c.species, RelevanceKey(c.caption)}]) /
           static_cast<double>(species_count[c.species]);
  }
  return sum / static_cast<double>(corpus.size());
}

RetrievalEvaluation EvaluateRetrieval(const VectorIndex& index, const TextEmbedder& text,
                                      std::size_t n) {
  if (index.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty index");
  std::unordered_map<std::string, std::size_t> key_counts;
  std::vector<std::string> keys;
  keys.reserve(index.size());
  for (const auto& e : index.entries()) {
    keys.push_back(RelevanceKey(e.caption_common));
    ++key_counts[keys.back()];
  }

  // Identical captions embed identically, so embed each distinct query once.
  std::unordered_map<std::string, Embedding> query_cache;
  RetrievalEvaluation out;
  out.n = n;
  for (std::size_t q = 0; q < index.size(); ++q) {
    const IndexEntry& query = index.entries()[q];
    auto it = query_cache.find(query.caption_common);
    if (it == query_cache.end()) {
      it = query_cache.emplace(query.caption_common, text.EmbedText(query.caption_common)).first;
    }
    RankedList list;
    list.query = query.caption_common;
    list.total_relevant = key_counts[keys[q]];
    for (const auto& hit : index.Search(it->second.values, n)) {
      const IndexEntry* e = index.Find(hit.clip_id);
      list.clip_ids.push_back(hit.clip_id);
      list.scores.push_back(hit.score);
      list.relevant.push_back(RelevanceKey(e->caption_common) == keys[q]);
    }
    out.queries.push_back({query.clip_id, query.caption_common, list.total_relevant,
                           ApAtN(list, n), !list.relevant.empty() && list.relevant[0]});
    out.lists.push_back(std::move(list));
  }
  out.map_at_n = MapAtN(out.lists, n);
  out.precision_at_1 = PrecisionAt1(out.lists);
  return out;
}

std::string ReportsToJson(std::span<const EvalReport> reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    arr.push_back({{"metricName", r.metric_name},
                   {"value", r.value},
                   {"N", r.n},
                   {"queryCount", r.query_count},
                   {"skippedClasses", r.skipped_classes}});
  }
  return nlohmann::json{{"reports", arr}}.dump(2);
}

void WriteQueryDiagnosticsCsv(const std::filesystem::path& path,
                              std::span<const QueryDiagnostics> queries) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.precision(10);
  out << "clipId,query,totalRelevant,averagePrecision,top1Relevant\n";
  for (const auto& q : queries) {
    out << internal::CsvEscape(q.query_clip_id) << ',' << internal::CsvEscape(q.query) << ','
        << q.total_relevant << ',' << q.average_precision << ',' << (q.top1_relevant ? 1 : 0)
        << '\n';
  }
}

}  // namespace bioclap
