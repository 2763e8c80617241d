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

#include "bioclap/trainer.h"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

#include "binary_io.h"
#include "bioclap/error.h"
#include "json.hpp"
#include "rng.h"

namespace bioclap {
namespace {

constexpr std::uint32_t kCheckpointMagic = 0x4B434342;  // "BCCK"
constexpr std::uint32_t kCheckpointVersion = 1;

struct TowerCache {
  Matrix pre_encoder;
  Matrix features;
  Matrix pre_hidden;
  Matrix hidden;
  Matrix projection;
  Vector norms;
  Matrix embedding;
};

TowerCache TowerForward(const Matrix& input, const DenseLayer& encoder,
                        const ProjectionHead& head) {
  TowerCache c;
  c.pre_encoder = encoder.Forward(input);
  c.features = Relu(c.pre_encoder);
  c.pre_hidden = head.first.Forward(c.features);
  c.hidden = Relu(c.pre_hidden);
  c.projection = head.second.Forward(c.hidden);
  c.norms = c.projection.rowwise().norm();
  for (Eigen::Index i = 0; i < c.norms.size(); ++i) {
    if (!(c.norms[i] > 0.0) || !std::isfinite(c.norms[i])) {
      throw Error(ErrorCode::kZeroVector, "projection output row " + std::to_string(i) +
                                              " has zero norm");
    }
  }
  c.embedding = c.norms.cwiseInverse().asDiagonal() * c.projection;
  return c;
}

Matrix ReluMask(const Matrix& pre, const Matrix& upstream) {
  return upstream.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
}

void AccumulateLayer(const Matrix& d_out, const Matrix& input, DenseLayer* grad) {
  grad->weight = d_out.transpose() * input;
  grad->bias = d_out.colwise().sum().transpose();
}

// Backpropagates dL/d(normalized embedding) through one tower.
Matrix TowerBackward(const Matrix& d_embedding, const TowerCache& c, const Matrix& input,
                     const DenseLayer& encoder, const ProjectionHead& head,
                     DenseLayer* d_encoder, ProjectionHead* d_head) {
  // e = y / |y|  =>  dy = (de - e (e . de)) / |y|
  const Vector radial = c.embedding.cwiseProduct(d_embedding).rowwise().sum();
  const Matrix d_projection =
      c.norms.cwiseInverse().asDiagonal() *
      (d_embedding - radial.asDiagonal() * c.embedding);

  AccumulateLayer(d_projection, c.hidden, &d_head->second);
  const Matrix d_pre_hidden = ReluMask(c.pre_hidden, d_projection * head.second.weight);
  AccumulateLayer(d_pre_hidden, c.features, &d_head->first);
  const Matrix d_pre_encoder = ReluMask(c.pre_encoder, d_pre_hidden * head.first.weight);
  AccumulateLayer(d_pre_encoder, input, d_encoder);
  return d_projection;
}

void CheckBatchShapes(const DualEncoderModel& model, const FeatureBatch& batch) {
  if (batch.pooled_mel.rows() != batch.token_counts.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "audio and text batch sizes differ");
  }
  if (batch.pooled_mel.cols() != model.config.mel_bins ||
      batch.token_counts.cols() != model.config.vocab_hash_buckets) {
    throw Error(ErrorCode::kDimensionMismatch, "feature batch does not match encoder config");
  }
}

void AppendView(std::vector<ParameterView>& out, std::string name, Matrix& m) {
  out.push_back({std::move(name), std::span<double>(m.data(), static_cast<std::size_t>(m.size()))});
}
void AppendView(std::vector<ParameterView>& out, std::string name, Vector& v) {
  out.push_back({std::move(name), std::span<double>(v.data(), static_cast<std::size_t>(v.size()))});
}

template <typename Layers>
std::vector<ParameterView> ViewsOf(Layers& l) {
  std::vector<ParameterView> out;
  AppendView(out, "audio_encoder.weight", l.audio_encoder.weight);
  AppendView(out, "audio_encoder.bias", l.audio_encoder.bias);
  AppendView(out, "text_encoder.weight", l.text_encoder.weight);
  AppendView(out, "text_encoder.bias", l.text_encoder.bias);
  AppendView(out, "audio_head.first.weight", l.audio_head.first.weight);
  AppendView(out, "audio_head.first.bias", l.audio_head.first.bias);
  AppendView(out, "audio_head.second.weight", l.audio_head.second.weight);
  AppendView(out, "audio_head.second.bias", l.audio_head.second.bias);
  AppendView(out, "text_head.first.weight", l.text_head.first.weight);
  AppendView(out, "text_head.first.bias", l.text_head.first.bias);
  AppendView(out, "text_head.second.weight", l.text_head.second.weight);
  AppendView(out, "text_head.second.bias", l.text_head.second.bias);
  out.push_back({"log_tau", std::span<double>(&l.log_tau, 1)});
  return out;
}

nlohmann::json EncoderConfigToJson(const EncoderConfig& c) {
  return {{"embeddingDim", c.embedding_dim},       {"melBins", c.mel_bins},
          {"audioFeatureDim", c.audio_feature_dim}, {"textFeatureDim", c.text_feature_dim},
          {"hiddenDim", c.hidden_dim},             {"vocabHashBuckets", c.vocab_hash_buckets}};
}

EncoderConfig EncoderConfigFromJson(const nlohmann::json& j) {
  EncoderConfig c;
  c.embedding_dim = j.at("embeddingDim").get<int>();
  c.mel_bins = j.at("melBins").get<int>();
  c.audio_feature_dim = j.at("audioFeatureDim").get<int>();
  c.text_feature_dim = j.at("textFeatureDim").get<int>();
  c.hidden_dim = j.at("hiddenDim").get<int>();
  c.vocab_hash_buckets = j.at("vocabHashBuckets").get<int>();
  return c;
}

}  // namespace

Matrix SimilarityMatrix(const Batch& batch) {
  if (batch.audio.rows() != batch.text.rows() || batch.audio.cols() != batch.text.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "audio and text batches differ in shape");
  }
  return batch.audio * batch.text.transpose();
}

LossAndEmbeddingGradients ContrastiveLossGradients(const Batch& batch, double log_tau) {
  const double tau = std::exp(log_tau);
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be positive and finite");
  }
  const Eigen::Index n = batch.size();
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  const Matrix logits = SimilarityMatrix(batch) / tau;

  // Row and column softmax with max subtraction.
  Matrix p_row(n, n), p_col(n, n);
  Vector lse_row(n), lse_col(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = logits.row(i).maxCoeff();
    const auto shifted = (logits.row(i).array() - m).exp();
    const double z = shifted.sum();
    lse_row[i] = m + std::log(z);
    p_row.row(i) = shifted / z;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const double m = logits.col(j).maxCoeff();
    const auto shifted = (logits.col(j).array() - m).exp();
    const double z = shifted.sum();
    lse_col[j] = m + std::log(z);
    p_col.col(j) = shifted / z;
  }

  LossAndEmbeddingGradients out;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) sum += (lse_row[i] - logits(i, i)) + (lse_col[i] - logits(i, i));
  out.loss = sum / (2.0 * n);
  if (!std::isfinite(out.loss)) throw Error(ErrorCode::kNonFiniteLoss, "loss is not finite");

  const Matrix d_logits = (p_row + p_col - 2.0 * Matrix::Identity(n, n)) / (2.0 * n);
  const Matrix d_sim = d_logits / tau;
  out.d_audio = d_sim * batch.text;
  out.d_text = d_sim.transpose() * batch.audio;
  out.d_log_tau = -(d_logits.cwiseProduct(logits)).sum();
  return out;
}

double ContrastiveLoss(const Batch& batch, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  return ContrastiveLossGradients(batch, std::log(tau)).loss;
}

Batch EmbedFeatureBatch(const DualEncoderModel& model, const FeatureBatch& batch) {
  CheckBatchShapes(model, batch);
  return Batch{TowerForward(batch.pooled_mel, model.audio_encoder, model.audio_head).embedding,
               TowerForward(batch.token_counts, model.text_encoder, model.text_head).embedding};
}

double ModelLoss(const DualEncoderModel& model, const FeatureBatch& batch) {
  return ContrastiveLossGradients(EmbedFeatureBatch(model, batch), model.log_tau).loss;
}

double ModelLossGradients(const DualEncoderModel& model, const FeatureBatch& batch,
                          ModelGradients* g) {
  CheckBatchShapes(model, batch);
  const TowerCache audio = TowerForward(batch.pooled_mel, model.audio_encoder, model.audio_head);
  const TowerCache text = TowerForward(batch.token_counts, model.text_encoder, model.text_head);
  const auto loss = ContrastiveLossGradients(Batch{audio.embedding, text.embedding}, model.log_tau);

  g->d_audio_embeddings = loss.d_audio;
  g->d_text_embeddings = loss.d_text;
  g->log_tau = loss.d_log_tau;
  g->d_audio_projections = TowerBackward(loss.d_audio, audio, batch.pooled_mel,
                                         model.audio_encoder, model.audio_head,
                                         &g->audio_encoder, &g->audio_head);
  g->d_text_projections = TowerBackward(loss.d_text, text, batch.token_counts,
                                        model.text_encoder, model.text_head,
                                        &g->text_encoder, &g->text_head);
  return loss.loss;
}

std::vector<ParameterView> ModelParameters(DualEncoderModel& model) { return ViewsOf(model); }
std::vector<ParameterView> GradientParameters(ModelGradients& gradients) {
  return ViewsOf(gradients);
}

void AdamOptimizer::Step(DualEncoderModel& model, ModelGradients& gradients) {
  auto params = ModelParameters(model);
  auto grads = GradientParameters(gradients);
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.values.size(), 0.0);
      v_.emplace_back(p.values.size(), 0.0);
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (grads[t].values.size() != params[t].values.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "gradient shape differs for " + params[t].name);
    }
    auto& m = m_[t];
    auto& v = v_[t];
    for (std::size_t i = 0; i < params[t].values.size(); ++i) {
      const double grad = grads[t].values[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad * grad;
      params[t].values[i] -=
          config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
  }
  model.log_tau = std::clamp(model.log_tau, std::log(kTauMin), std::log(kTauMax));
}

std::size_t SampleCaptionIndex(std::size_t caption_count, std::string_view recording_id,
                               std::int64_t epoch, std::uint64_t seed) {
  if (caption_count == 0) throw Error(ErrorCode::kInvalidArgument, "recording has no captions");
  const std::uint64_t key =
      internal::SplitMix64(internal::Fnv1a64(recording_id) ^
                           internal::SplitMix64(seed ^ internal::SplitMix64(
                                                           static_cast<std::uint64_t>(epoch))));
  return static_cast<std::size_t>(key % caption_count);
}

void TrainConfig::Validate() const {
  if (batch_size < 2) throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 2");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be > 0");
  if (epochs < 0) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 0");
  if (!(initial_tau >= kTauMin && initial_tau <= kTauMax)) {
    throw Error(ErrorCode::kInvalidArgument, "initial temperature outside clamp range");
  }
}

TrainResult ResumeTraining(TrainState state, std::span<const TrainingExample> corpus,
                           const TrainConfig& config, const EpochCallback& on_epoch) {
  config.Validate();
  const EncoderConfig& ec = state.model.config;
  if (corpus.size() < 2) throw Error(ErrorCode::kEmptyCorpus, "need at least two examples");
  for (const auto& ex : corpus) {
    if (static_cast<int>(ex.pooled_mel.size()) != ec.mel_bins) {
      throw Error(ErrorCode::kDimensionMismatch, "example " + ex.clip_id + " has " +
                                                     std::to_string(ex.pooled_mel.size()) +
                                                     " pooled mel values");
    }
    if (ex.captions.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "example " + ex.clip_id + " has no captions");
    }
  }

  std::unordered_map<std::string, Vector> counts_cache;
  auto counts_for = [&](const std::string& caption) -> const Vector& {
    auto it = counts_cache.find(caption);
    if (it == counts_cache.end()) {
      it = counts_cache.emplace(caption, TokenCounts(caption, ec.vocab_hash_buckets)).first;
    }
    return it->second;
  };

  TrainResult result;
  result.state = std::move(state);
  TrainState& st = result.state;
  ModelGradients grads;
  std::vector<std::size_t> order(corpus.size());

  while (st.epoch < config.epochs) {
    const int epoch = st.epoch;
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(internal::SplitMix64(st.seed) ^
                        internal::SplitMix64(static_cast<std::uint64_t>(epoch) + 1));
    internal::Shuffle(order, rng);

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      if (n < 2) continue;
      FeatureBatch fb{Matrix(n, ec.mel_bins), Matrix::Zero(n, ec.vocab_hash_buckets)};
      for (std::size_t r = 0; r < n; ++r) {
        const TrainingExample& ex = corpus[order[start + r]];
        fb.pooled_mel.row(r) =
            Eigen::Map<const Eigen::RowVectorXd>(ex.pooled_mel.data(), ec.mel_bins);
        const std::size_t pick = SampleCaptionIndex(ex.captions.size(), ex.recording_id, epoch, st.seed);
        fb.token_counts.row(r) = counts_for(ex.captions[pick]).transpose();
      }
      double loss = 0.0;
      try {
        loss = ModelLossGradients(st.model, fb, &grads);
      } catch (const Error& e) {
        throw Error(ErrorCode::kDivergence, "epoch " + std::to_string(epoch + 1) + ": " + e.what());
      }
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::kDivergence, "non-finite loss in epoch " + std::to_string(epoch + 1));
      }
      st.optimizer.Step(st.model, grads);
      loss_sum += loss;
      ++batches;
    }
    ++st.epoch;
    EpochLog entry{st.epoch, batches ? loss_sum / batches : 0.0, std::exp(st.model.log_tau)};
    result.log.push_back(entry);
    if (config.checkpoint_path) SaveCheckpoint(*config.checkpoint_path, st);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

TrainResult Train(std::span<const TrainingExample> corpus, const EncoderConfig& encoder_config,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.Validate();
  TrainState state;
  state.model = DualEncoderModel::Initialize(encoder_config, config.seed, config.initial_tau);
  state.optimizer = AdamOptimizer(
      AdamConfig{config.learning_rate, config.beta1, config.beta2, config.epsilon});
  state.seed = config.seed;
  return ResumeTraining(std::move(state), corpus, config, on_epoch);
}

void SaveCheckpoint(const std::filesystem::path& path, const TrainState& state_in) {
  TrainState state = state_in;  // views need mutable storage
  internal::ByteWriter w;
  w.U32(kCheckpointMagic);
  w.U32(kCheckpointVersion);
  const std::string config = EncoderConfigToJson(state.model.config).dump();
  w.U32(static_cast<std::uint32_t>(config.size()));
  w.Bytes(config);
  w.I32(state.epoch);
  w.U64(state.seed);
  const AdamConfig& adam = state.optimizer.config();
  w.F64(adam.learning_rate);
  w.F64(adam.beta1);
  w.F64(adam.beta2);
  w.F64(adam.epsilon);
  w.U64(static_cast<std::uint64_t>(state.optimizer.steps()));

  const auto params = ModelParameters(state.model);
  const auto& m = state.optimizer.first_moments();
  const auto& v = state.optimizer.second_moments();
  const bool has_moments = !m.empty();
  w.U32(static_cast<std::uint32_t>(params.size()));
  w.U32(has_moments ? 1 : 0);
  for (std::size_t t = 0; t < params.size(); ++t) {
    w.U32(static_cast<std::uint32_t>(params[t].name.size()));
    w.Bytes(params[t].name);
    w.U64(params[t].values.size());
    for (double x : params[t].values) w.F64(x);
    if (has_moments) {
      for (double x : m[t]) w.F64(x);
      for (double x : v[t]) w.F64(x);
    }
  }
  internal::WriteBinaryFile(path, w.Take());
}

TrainState LoadCheckpoint(const std::filesystem::path& path) {
  const auto bytes = internal::ReadBinaryFile(path);
  internal::ByteReader r(bytes.data(), bytes.size(), ErrorCode::kCorruptContainer);
  if (r.U32() != kCheckpointMagic) throw Error(ErrorCode::kCorruptContainer, "not a checkpoint");
  if (const auto version = r.U32(); version != kCheckpointVersion) {
    throw Error(ErrorCode::kCorruptContainer, "unsupported checkpoint version " +
                                                  std::to_string(version));
  }
  EncoderConfig config;
  try {
    config = EncoderConfigFromJson(nlohmann::json::parse(r.Bytes(r.U32())));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptContainer, std::string("checkpoint config: ") + e.what());
  }
  TrainState state;
  state.epoch = r.I32();
  state.seed = r.U64();
  AdamConfig adam;
  adam.learning_rate = r.F64();
  adam.beta1 = r.F64();
  adam.beta2 = r.F64();
  adam.epsilon = r.F64();
  state.optimizer = AdamOptimizer(adam);
  state.optimizer.set_steps(static_cast<std::int64_t>(r.U64()));
  state.model = DualEncoderModel::Initialize(config, 0);

  auto params = ModelParameters(state.model);
  if (r.U32() != params.size()) throw Error(ErrorCode::kCorruptContainer, "tensor count mismatch");
  const bool has_moments = r.U32() != 0;
  for (auto& p : params) {
    if (r.Bytes(r.U32()) != p.name) throw Error(ErrorCode::kCorruptContainer, "unexpected tensor order");
    if (r.U64() != p.values.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "tensor " + p.name + " has the wrong size");
    }
    for (auto& x : p.values) x = r.F64();
    if (has_moments) {
      auto& m = state.optimizer.first_moments().emplace_back(p.values.size());
      for (auto& x : m) x = r.F64();
      auto& v = state.optimizer.second_moments().emplace_back(p.values.size());
      for (auto& x : v) x = r.F64();
    }
  }
  if (r.remaining() != 0) throw Error(ErrorCode::kCorruptContainer, "trailing bytes in checkpoint");
  return state;
}

void WriteLossLog(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.precision(10);
  out << "epoch,trainLoss,tau\n";
  for (const auto& e : log) out << e.epoch << ',' << e.train_loss << ',' << e.tau << '\n';
}

}  // namespace bioclap
