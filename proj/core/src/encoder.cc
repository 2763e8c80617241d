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

#include "bioclap/encoder.h"

#include <cctype>
#include <cmath>

#include "binary_io.h"
#include "bioclap/error.h"
#include "rng.h"

namespace bioclap {
namespace {

constexpr std::uint32_t kEmbeddingMagic = 0x4D454342;  // "BCEM"
constexpr std::uint32_t kEmbeddingVersion = 1;

Embedding ToEmbedding(const Vector& v) {
  Embedding e;
  e.values.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) e.values[i] = static_cast<float>(v[i]);
  return e;
}

Vector ApplyLayerRelu(const Vector& x, const DenseLayer& layer) {
  if (x.size() != layer.inputs()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "layer expects " + std::to_string(layer.inputs()) + " inputs, got " +
                    std::to_string(x.size()));
  }
  return (layer.weight * x + layer.bias).cwiseMax(0.0);
}

}  // namespace

void EncoderConfig::Validate() const {
  for (int d : {embedding_dim, mel_bins, audio_feature_dim, text_feature_dim, hidden_dim,
                vocab_hash_buckets}) {
    if (d < 1) throw Error(ErrorCode::kInvalidArgument, "encoder dimensions must be >= 1");
  }
}

DenseLayer DenseLayer::Zeros(int inputs, int outputs) {
  return DenseLayer{Matrix::Zero(outputs, inputs), Vector::Zero(outputs)};
}

DenseLayer DenseLayer::Random(int inputs, int outputs, std::mt19937_64& rng) {
  DenseLayer layer = Zeros(inputs, outputs);
  const double limit = std::sqrt(6.0 / inputs);
  for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      layer.weight(r, c) = (2.0 * internal::UniformUnit(rng) - 1.0) * limit;
    }
  }
  return layer;
}

Matrix DenseLayer::Forward(const Matrix& x) const {
  if (x.cols() != weight.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "layer expects " + std::to_string(weight.cols()) + " inputs, got " +
                    std::to_string(x.cols()));
  }
  Matrix y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

Matrix Relu(const Matrix& x) { return x.cwiseMax(0.0); }

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      current.push_back(static_cast<char>(std::tolower(u)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

int TokenBucket(std::string_view token, int buckets) {
  return static_cast<int>(internal::Fnv1a64(token) % static_cast<std::uint64_t>(buckets));
}

Vector TokenCounts(std::string_view text, int buckets) {
  Vector counts = Vector::Zero(buckets);
  for (const auto& token : Tokenize(text)) counts[TokenBucket(token, buckets)] += 1.0;
  return counts;
}

Vector ToyAudioEncode(const MelSpectrogram& mel, const DenseLayer& layer) {
  const std::vector<double> mean = mel.TimeMean();
  return ApplyLayerRelu(Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                        layer);
}

Vector ToyTextEncode(std::string_view text, const DenseLayer& layer) {
  return ApplyLayerRelu(TokenCounts(text, layer.inputs()), layer);
}

Embedding Project(const Vector& features, const ProjectionHead& head) {
  const Vector hidden = ApplyLayerRelu(features, head.first);
  if (hidden.size() != head.second.inputs()) {
    throw Error(ErrorCode::kDimensionMismatch, "projection layers do not chain");
  }
  return ToEmbedding(head.second.weight * hidden + head.second.bias);
}

Embedding Normalize(const Embedding& embedding) {
  double sq = 0.0;
  for (float v : embedding.values) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::kZeroVector, "cannot normalize a zero-norm embedding");
  }
  Embedding out;
  out.values.resize(embedding.values.size());
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = static_cast<float>(embedding.values[i] / norm);
  }
  out.normalized = true;
  return out;
}

double Cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kDimensionMismatch, "cosine of unequal dims");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::kZeroVector, "cosine with zero vector");
  return dot / std::sqrt(na * nb);
}

DualEncoderModel DualEncoderModel::Initialize(const EncoderConfig& config, std::uint64_t seed,
                                              double initial_tau) {
  config.Validate();
  std::mt19937_64 rng(seed);
  DualEncoderModel model;
  model.config = config;
  model.audio_encoder = DenseLayer::Random(config.mel_bins, config.audio_feature_dim, rng);
  model.text_encoder = DenseLayer::Random(config.vocab_hash_buckets, config.text_feature_dim, rng);
  model.audio_head = {DenseLayer::Random(config.audio_feature_dim, config.hidden_dim, rng),
                      DenseLayer::Random(config.hidden_dim, config.embedding_dim, rng)};
  model.text_head = {DenseLayer::Random(config.text_feature_dim, config.hidden_dim, rng),
                     DenseLayer::Random(config.hidden_dim, config.embedding_dim, rng)};
  model.log_tau = std::log(initial_tau);
  return model;
}

Embedding DualEncoderModel::EmbedAudio(const MelSpectrogram& mel) const {
  if (mel.mel_bins != config.mel_bins) {
    throw Error(ErrorCode::kDimensionMismatch,
                "model expects " + std::to_string(config.mel_bins) + " mel bins, got " +
                    std::to_string(mel.mel_bins));
  }
  return Normalize(Project(ToyAudioEncode(mel, audio_encoder), audio_head));
}

Embedding DualEncoderModel::EmbedPooledAudio(std::span<const double> pooled_mel) const {
  const Eigen::Map<const Vector> x(pooled_mel.data(), static_cast<Eigen::Index>(pooled_mel.size()));
  return Normalize(Project(ApplyLayerRelu(x, audio_encoder), audio_head));
}

Embedding DualEncoderModel::EmbedText(std::string_view text) const {
  return Normalize(Project(ToyTextEncode(text, text_encoder), text_head));
}

void WriteEmbeddings(const std::filesystem::path& path, std::span<const NamedEmbedding> entries) {
  const std::size_t dim = entries.empty() ? 0 : entries.front().embedding.dim();
  internal::ByteWriter w;
  w.U32(kEmbeddingMagic);
  w.U32(kEmbeddingVersion);
  w.U32(static_cast<std::uint32_t>(dim));
  w.U64(entries.size());
  for (const auto& e : entries) {
    if (e.embedding.dim() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "embedding " + e.id + " has a different dimension");
    }
    w.U32(static_cast<std::uint32_t>(e.id.size()));
    w.Bytes(e.id);
    for (float v : e.embedding.values) w.F32(v);
  }
  internal::WriteBinaryFile(path, w.Take());
}

std::vector<NamedEmbedding> ReadEmbeddings(const std::filesystem::path& path) {
  const auto bytes = internal::ReadBinaryFile(path);
  internal::ByteReader r(bytes.data(), bytes.size(), ErrorCode::kCorruptContainer);
  if (r.U32() != kEmbeddingMagic) throw Error(ErrorCode::kCorruptContainer, "bad magic");
  if (const auto v = r.U32(); v != kEmbeddingVersion) {
    throw Error(ErrorCode::kCorruptContainer, "unsupported version " + std::to_string(v));
  }
  const std::uint32_t dim = r.U32();
  const std::uint64_t count = r.U64();
  // Each entry needs at least 4 + 4 * dim bytes; reject impossible counts early.
  if (count > r.remaining() / (4 + 4 * static_cast<std::uint64_t>(dim))) {
    throw Error(ErrorCode::kCorruptContainer, "entry count exceeds file size");
  }
  std::vector<NamedEmbedding> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedEmbedding e;
    e.id = r.Bytes(r.U32());
    e.embedding.values.resize(dim);
    for (auto& v : e.embedding.values) v = r.F32();
    double sq = 0.0;
    for (float v : e.embedding.values) sq += static_cast<double>(v) * v;
    e.embedding.normalized = std::abs(std::sqrt(sq) - 1.0) <= 1e-6;
    out.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::kCorruptContainer, "trailing bytes");
  return out;
}

std::map<std::string, Embedding> LoadEmbeddings(const std::filesystem::path& path) {
  std::map<std::string, Embedding> out;
  for (auto& e : ReadEmbeddings(path)) {
    if (!out.emplace(e.id, std::move(e.embedding)).second) {
      throw Error(ErrorCode::kCorruptContainer, "duplicate id " + e.id);
    }
  }
  return out;
}

PrecomputedEmbeddings::PrecomputedEmbeddings(std::map<std::string, Embedding> table) {
  for (auto& [id, e] : table) {
    if (dim_ == 0) dim_ = static_cast<int>(e.dim());
    if (static_cast<int>(e.dim()) != dim_) {
      throw Error(ErrorCode::kDimensionMismatch, "embedding " + id + " has a different dimension");
    }
    table_.emplace(id, std::move(e));
  }
}

PrecomputedEmbeddings PrecomputedEmbeddings::Load(const std::filesystem::path& path) {
  return PrecomputedEmbeddings(LoadEmbeddings(path));
}

const Embedding* PrecomputedEmbeddings::Find(std::string_view id) const {
  const auto it = table_.find(id);
  return it == table_.end() ? nullptr : &it->second;
}

}  // namespace bioclap
