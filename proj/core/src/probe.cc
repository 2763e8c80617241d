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

#include "bioclap/probe.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "bioclap/error.h"
#include "json.hpp"

namespace bioclap {
namespace {

void CheckShapes(const Matrix& x, const ProbeLabels& labels) {
  if (labels.num_classes < 1) throw Error(ErrorCode::kInvalidArgument, "no classes");
  if (x.rows() == 0) throw Error(ErrorCode::kEmptyCorpus, "no probe examples");
  if (labels.task == ProbeTask::kClassification) {
    if (static_cast<Eigen::Index>(labels.classes.size()) != x.rows()) {
      throw Error(ErrorCode::kDimensionMismatch, "label count differs from example count");
    }
    for (int c : labels.classes) {
      if (c < 0 || c >= labels.num_classes) {
        throw Error(ErrorCode::kInvalidArgument, "class index out of range");
      }
    }
  } else if (labels.multi_hot.rows() != x.rows() || labels.multi_hot.cols() != labels.num_classes) {
    throw Error(ErrorCode::kDimensionMismatch, "label matrix shape differs from examples");
  }
}

double Softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double Sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Loss and d loss / d logits.
double LossAndGradient(const Matrix& logits, const ProbeLabels& labels, Matrix* d_logits) {
  const auto n = static_cast<double>(logits.rows());
  double loss = 0.0;
  if (d_logits) d_logits->resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (labels.task == ProbeTask::kClassification) {
      const double mx = logits.row(i).maxCoeff();
      const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
      const double z = e.sum();
      const int y = labels.classes[static_cast<std::size_t>(i)];
      loss -= logits(i, y) - mx - std::log(z);
      if (d_logits) {
        d_logits->row(i) = e / z;
        (*d_logits)(i, y) -= 1.0;
      }
    } else {
      for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const double z = logits(i, c);
        const double t = labels.multi_hot(i, c);
        loss += Softplus(z) - t * z;
        if (d_logits) (*d_logits)(i, c) = Sigmoid(z) - t;
      }
    }
  }
  if (d_logits) *d_logits /= n;
  return loss / n;
}

}  // namespace

Matrix ProbeHead::Logits(const Matrix& x) const {
  if (x.cols() != weight.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "embedding dimension differs from probe input");
  }
  Matrix out = x * weight;
  out.rowwise() += bias.transpose();
  return out;
}

double ProbeLoss(const ProbeHead& head, const Matrix& embeddings, const ProbeLabels& labels) {
  CheckShapes(embeddings, labels);
  return LossAndGradient(head.Logits(embeddings), labels, nullptr);
}

ProbeTrainResult TrainProbe(const Matrix& embeddings, const ProbeLabels& labels,
                            const ProbeConfig& config) {
  CheckShapes(embeddings, labels);
  if (config.epochs < 1 || !(config.learning_rate > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "probe needs epochs >= 1 and a positive rate");
  }
  ProbeTrainResult result;
  ProbeHead& head = result.head;
  head.task = labels.task;
  head.weight = Matrix::Zero(embeddings.cols(), labels.num_classes);
  head.bias = Vector::Zero(labels.num_classes);
  Matrix d_logits;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = LossAndGradient(head.Logits(embeddings), labels, &d_logits);
    result.loss_history.push_back(loss);
    Matrix d_weight = embeddings.transpose() * d_logits;
    if (config.weight_decay > 0) d_weight += config.weight_decay * head.weight;
    head.weight -= config.learning_rate * d_weight;
    head.bias -= config.learning_rate * d_logits.colwise().sum().transpose();
  }
  return result;
}

double AveragePrecision(std::span<const double> scores, const std::vector<bool>& positives) {
  if (scores.size() != positives.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "scores and labels differ in length");
  }
  const auto total = static_cast<std::size_t>(std::count(positives.begin(), positives.end(), true));
  if (total == 0) throw Error(ErrorCode::kInvalidArgument, "no positives");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!positives[order[k]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return sum / static_cast<double>(total);
}

ProbeMetrics DetectionMap(const Matrix& scores, const Matrix& multi_hot) {
  if (scores.rows() != multi_hot.rows() || scores.cols() != multi_hot.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "score and label matrices differ in shape");
  }
  ProbeMetrics m{"mAP", 0.0, 0, 0};
  std::vector<double> s(static_cast<std::size_t>(scores.rows()));
  std::vector<bool> p(s.size());
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    bool any = false;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      s[static_cast<std::size_t>(i)] = scores(i, c);
      p[static_cast<std::size_t>(i)] = multi_hot(i, c) > 0.5;
      any = any || multi_hot(i, c) > 0.5;
    }
    if (!any) {
      ++m.skipped_classes;
      continue;
    }
    m.value += AveragePrecision(s, p);
    ++m.evaluated_classes;
  }
  if (m.evaluated_classes == 0) {
    throw Error(ErrorCode::kInvalidArgument, "no class has a positive example");
  }
  m.value /= static_cast<double>(m.evaluated_classes);
  return m;
}

ProbeMetrics EvalProbe(const ProbeHead& head, const Matrix& embeddings, const ProbeLabels& labels) {
  CheckShapes(embeddings, labels);
  if (labels.num_classes != head.num_classes()) {
    throw Error(ErrorCode::kDimensionMismatch, "probe class count differs from labels");
  }
  const Matrix logits = head.Logits(embeddings);
  if (labels.task == ProbeTask::kDetection) return DetectionMap(logits, labels.multi_hot);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    correct += best == labels.classes[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return {"accuracy", static_cast<double>(correct) / static_cast<double>(logits.rows()),
          static_cast<std::size_t>(labels.num_classes), 0};
}

TaskManifest ReadTaskManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  TaskManifest m;
  std::set<std::string> names;
  bool multi = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kMalformedManifest,
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
    TaskItem item;
    if (!j.contains("clipPath") || !j["clipPath"].is_string()) {
      throw Error(ErrorCode::kMalformedManifest, "line " + std::to_string(line_no) + ": no clipPath");
    }
    item.clip_path = j["clipPath"].get<std::string>();
    if (item.clip_path.is_relative()) item.clip_path = path.parent_path() / item.clip_path;
    if (j.contains("labels")) {
      multi = true;
      item.labels = j["labels"].get<std::vector<std::string>>();
    } else if (j.contains("label")) {
      item.labels.push_back(j["label"].get<std::string>());
    } else {
      throw Error(ErrorCode::kMalformedManifest, "line " + std::to_string(line_no) + ": no label");
    }
    names.insert(item.labels.begin(), item.labels.end());
    m.items.push_back(std::move(item));
  }
  if (m.items.empty()) throw Error(ErrorCode::kEmptyCorpus, "task manifest has no items");
  m.task = multi ? ProbeTask::kDetection : ProbeTask::kClassification;
  m.label_names.assign(names.begin(), names.end());
  return m;
}

ProbeLabels LabelsFor(const TaskManifest& manifest, std::span<const std::string> label_names) {
  ProbeLabels labels;
  labels.task = manifest.task;
  labels.num_classes = static_cast<int>(label_names.size());
  auto index_of = [&](const std::string& name) {
    const auto it = std::find(label_names.begin(), label_names.end(), name);
    if (it == label_names.end()) throw Error(ErrorCode::kNotFound, "unknown label " + name);
    return static_cast<int>(it - label_names.begin());
  };
  if (manifest.task == ProbeTask::kClassification) {
    for (const auto& item : manifest.items) labels.classes.push_back(index_of(item.labels.front()));
  } else {
    labels.multi_hot = Matrix::Zero(static_cast<Eigen::Index>(manifest.items.size()),
                                    labels.num_classes);
    for (std::size_t i = 0; i < manifest.items.size(); ++i) {
      for (const auto& l : manifest.items[i].labels) {
        labels.multi_hot(static_cast<Eigen::Index>(i), index_of(l)) = 1.0;
      }
    }
  }
  return labels;
}

}  // namespace bioclap
