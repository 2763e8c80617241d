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

#ifndef BIOCLAP_EVALUATOR_H_
#define BIOCLAP_EVALUATOR_H_

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bioclap/encoder.h"
#include "bioclap/vector_index.h"

namespace bioclap {

// Removes one leading "The sound of a " or "The sound of an "; anything else
// is returned unchanged.
std::string StripDedupPrefix(std::string_view caption);
// StripDedupPrefix plus trailing-whitespace trim. Captions are relevant to
// each other iff their keys are equal.
std::string RelevanceKey(std::string_view caption);

struct LabelPrompt {
  std::string label_id;
  std::string prompt_text;
};

struct LabelPromptSet {
  std::vector<LabelPrompt> labels;
  std::vector<Embedding> embedded;  // normalized, same order as labels

  // Prompt text defaults to the label itself.
  static LabelPromptSet FromLabels(std::span<const std::string> labels, const TextEmbedder& text);
  static LabelPromptSet FromPrompts(std::vector<LabelPrompt> prompts, const TextEmbedder& text);
};

// Cosine similarity of the audio embedding to every label prompt, in label
// order. These are the zero-shot logits / detection scores.
std::vector<double> ZeroShotDetectionScores(const Embedding& audio, const LabelPromptSet& prompts);
// Label with the highest cosine; ties go to the earliest label.
const std::string& ZeroShotClassify(const Embedding& audio, const LabelPromptSet& prompts);

struct RankedList {
  std::string query;
  std::vector<std::string> clip_ids;
  std::vector<double> scores;
  std::vector<bool> relevant;     // rel(k) for each returned position
  std::size_t total_relevant = 0;  // m: relevant items in the whole corpus
};

// AP@N = 1/min(m, N) * sum_{k<=N} P(k) rel(k). Positions past the end of the
// list count as not relevant. Throws Error{kInvalidArgument} if m == 0.
double ApAtN(const RankedList& list, std::size_t n = 10);
double MapAtN(std::span<const RankedList> lists, std::size_t n = 10);
double PrecisionAt1(std::span<const RankedList> lists);

struct OracleClip {
  std::string species;
  std::string caption;
};

// Expected precision@1 of a retriever that knows the species of query and
// clips exactly and picks uniformly among clips of that species: the mean over
// queries of |same species and same relevance key| / |same species|.
double OraclePrecisionAt1(std::span<const OracleClip> corpus);

struct QueryDiagnostics {
  std::string query_clip_id;
  std::string query;
  std::size_t total_relevant = 0;
  double average_precision = 0.0;
  bool top1_relevant = false;
};

struct RetrievalEvaluation {
  double map_at_n = 0.0;
  double precision_at_1 = 0.0;
  std::size_t n = 10;
  std::vector<RankedList> lists;
  std::vector<QueryDiagnostics> queries;
};

// Every clip's common-name caption is used once as a text query against the
// whole index; a clip is relevant iff its caption has the same relevance key.
RetrievalEvaluation EvaluateRetrieval(const VectorIndex& index, const TextEmbedder& text,
                                      std::size_t n = 10);

struct EvalReport {
  std::string metric_name;
  double value = 0.0;
  std::size_t n = 0;
  std::size_t query_count = 0;
  std::size_t skipped_classes = 0;
};

std::string ReportsToJson(std::span<const EvalReport> reports);
void WriteQueryDiagnosticsCsv(const std::filesystem::path& path,
                              std::span<const QueryDiagnostics> queries);

}  // namespace bioclap

#endif  // BIOCLAP_EVALUATOR_H_
