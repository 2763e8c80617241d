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

#ifndef BIOCLAP_PROBE_H_
#define BIOCLAP_PROBE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bioclap/encoder.h"

namespace bioclap {

enum class ProbeTask { kClassification, kDetection };

// Linear head over frozen embeddings: logits = x W + b.
struct ProbeHead {
  Matrix weight;  // D x C
  Vector bias;    // C
  ProbeTask task = ProbeTask::kClassification;

  int num_classes() const { return static_cast<int>(weight.cols()); }
  Matrix Logits(const Matrix& x) const;
};

// Either one class index per row (classification) or an N x C 0/1 matrix
// (detection, multi-label).
struct ProbeLabels {
  ProbeTask task = ProbeTask::kClassification;
  int num_classes = 0;
  std::vector<int> classes;
  Matrix multi_hot;
};

struct ProbeConfig {
  int epochs = 300;
  double learning_rate = 0.5;
  double weight_decay = 0.0;
};

struct ProbeTrainResult {
  ProbeHead head;
  std::vector<double> loss_history;  // one full-batch loss per epoch, before the step
};

// Full-batch gradient descent on softmax cross-entropy (classification) or
// per-class sigmoid binary cross-entropy (detection). Zero initialization.
ProbeTrainResult TrainProbe(const Matrix& embeddings, const ProbeLabels& labels,
                            const ProbeConfig& config = {});
// Mean over examples; detection sums the per-class binary cross-entropies.
double ProbeLoss(const ProbeHead& head, const Matrix& embeddings, const ProbeLabels& labels);

// AP over one ranked list of all items: mean precision at each positive.
// Ties in score keep input order. Throws Error{kInvalidArgument} when there
// are no positives.
double AveragePrecision(std::span<const double> scores, const std::vector<bool>& positives);

struct ProbeMetrics {
  std::string metric_name;  // "accuracy" or "mAP"
  double value = 0.0;
  std::size_t evaluated_classes = 0;
  std::size_t skipped_classes = 0;  // detection classes with no test positives
};

ProbeMetrics EvalProbe(const ProbeHead& head, const Matrix& embeddings, const ProbeLabels& labels);

// Zero-shot detection mAP over raw score columns (N x C), same skipping rule.
ProbeMetrics DetectionMap(const Matrix& scores, const Matrix& multi_hot);

// Labelled task manifest, JSONL {"clipPath": ..., "label": "..."} or
// {"clipPath": ..., "labels": [...]}, relative paths against the manifest dir.
struct TaskItem {
  std::filesystem::path clip_path;
  std::vector<std::string> labels;
};

struct TaskManifest {
  ProbeTask task = ProbeTask::kClassification;
  std::vector<TaskItem> items;
  std::vector<std::string> label_names;  // sorted, unique
};

TaskManifest ReadTaskManifest(const std::filesystem::path& path);
ProbeLabels LabelsFor(const TaskManifest& manifest,
                      std::span<const std::string> label_names);

}  // namespace bioclap

#endif  // BIOCLAP_PROBE_H_
