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

#ifndef BIOCLAP_TRAINER_H_
#define BIOCLAP_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bioclap/encoder.h"

namespace bioclap {

inline constexpr double kTauMin = 0.01;
inline constexpr double kTauMax = 100.0;
inline constexpr double kInitialTau = 0.07;

// Pair i is (audio row i, text row i). Rows are expected to be unit norm.
struct Batch {
  Matrix audio;
  Matrix text;

  Eigen::Index size() const { return audio.rows(); }
};

// Entry (i, j) = audio_i . text_j.
Matrix SimilarityMatrix(const Batch& batch);

// Symmetric cross-entropy over the batch:
//   L = -1/(2N) sum_i [log softmax_row_i(S/tau)_ii + log softmax_col_i(S/tau)_ii].
// Throws Error{kInvalidArgument} for tau <= 0 and Error{kNonFiniteLoss} if the
// result is not finite.
double ContrastiveLoss(const Batch& batch, double tau);

struct LossAndEmbeddingGradients {
  double loss = 0.0;
  Matrix d_audio;        // dL/d audio rows
  Matrix d_text;         // dL/d text rows
  double d_log_tau = 0;  // dL/d log(tau)
};

LossAndEmbeddingGradients ContrastiveLossGradients(const Batch& batch, double log_tau);

// Parameter-shaped gradient of the model.
struct ModelGradients {
  DenseLayer audio_encoder;
  DenseLayer text_encoder;
  ProjectionHead audio_head;
  ProjectionHead text_head;
  double log_tau = 0.0;
  Matrix d_audio_embeddings;  // w.r.t. normalized embeddings
  Matrix d_text_embeddings;
  Matrix d_audio_projections;  // w.r.t. unnormalized projection outputs
  Matrix d_text_projections;
};

// Raw encoder inputs for a batch: pooled mel rows and token-count rows.
struct FeatureBatch {
  Matrix pooled_mel;
  Matrix token_counts;
};

// Forward pass through both towers, normalization and the loss.
double ModelLoss(const DualEncoderModel& model, const FeatureBatch& batch);
// Loss plus analytic gradients for every parameter, the embeddings and
// log tau.
double ModelLossGradients(const DualEncoderModel& model, const FeatureBatch& batch,
                          ModelGradients* gradients);

// Normalized audio/text embeddings for a feature batch.
Batch EmbedFeatureBatch(const DualEncoderModel& model, const FeatureBatch& batch);

// A flat view onto one parameter tensor.
struct ParameterView {
  std::string name;
  std::span<double> values;
};
std::vector<ParameterView> ModelParameters(DualEncoderModel& model);
std::vector<ParameterView> GradientParameters(ModelGradients& gradients);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(AdamConfig config) : config_(config) {}

  // Applies one update and clamps log tau into [log kTauMin, log kTauMax].
  void Step(DualEncoderModel& model, ModelGradients& gradients);

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }

  // Moment buffers in ModelParameters order, for checkpointing.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Index of the caption to use for a recording in a given epoch: uniform over
// `caption_count`, fixed by (recording id, epoch, seed).
std::size_t SampleCaptionIndex(std::size_t caption_count, std::string_view recording_id,
                               std::int64_t epoch, std::uint64_t seed);

struct TrainConfig {
  std::size_t batch_size = 64;  // reference full-scale run: 680
  double learning_rate = 1e-3;  // reference full-scale run: 1e-4
  int epochs = 50;              // reference full-scale run: 45
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double initial_tau = kInitialTau;
  std::uint64_t seed = 0;
  // When set, the state is written here after every epoch.
  std::optional<std::filesystem::path> checkpoint_path;

  // Throws Error{kInvalidArgument}.
  void Validate() const;
};

struct TrainingExample {
  std::string clip_id;
  std::string recording_id;
  std::vector<double> pooled_mel;
  std::vector<std::string> captions;
};

struct TrainState {
  DualEncoderModel model;
  AdamOptimizer optimizer;
  int epoch = 0;  // completed epochs
  std::uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double tau = 0.0;
};

struct TrainResult {
  TrainState state;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Seeded shuffle into batches each epoch, one caption sampled per example,
// Adam updates. Batches smaller than two are skipped. Throws
// Error{kDivergence} when the loss becomes non-finite; the checkpoint from
// the previous epoch (if any) is left in place.
TrainResult Train(std::span<const TrainingExample> corpus, const EncoderConfig& encoder_config,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// Continues from `state` for config.epochs total epochs.
TrainResult ResumeTraining(TrainState state, std::span<const TrainingExample> corpus,
                           const TrainConfig& config, const EpochCallback& on_epoch = {});

void SaveCheckpoint(const std::filesystem::path& path, const TrainState& state);
TrainState LoadCheckpoint(const std::filesystem::path& path);

// CSV with header "epoch,trainLoss,tau".
void WriteLossLog(const std::filesystem::path& path, std::span<const EpochLog> log);

}  // namespace bioclap

#endif  // BIOCLAP_TRAINER_H_
