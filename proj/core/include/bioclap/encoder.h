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

#ifndef BIOCLAP_ENCODER_H_
#define BIOCLAP_ENCODER_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bioclap/mel.h"

namespace bioclap {

// Row-major so that a batch is one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct EncoderConfig {
  int embedding_dim = 512;  // D, shared by both towers
  int mel_bins = 64;
  int audio_feature_dim = 256;
  int text_feature_dim = 256;
  int hidden_dim = 512;  // projection MLP width
  int vocab_hash_buckets = 4096;

  // Throws Error{kInvalidArgument} if any dimension is < 1.
  void Validate() const;
};

struct Embedding {
  std::vector<float> values;
  bool normalized = false;

  std::size_t dim() const { return values.size(); }
};

// Affine map y = W x + b with W stored (out x in).
struct DenseLayer {
  Matrix weight;
  Vector bias;

  int inputs() const { return static_cast<int>(weight.cols()); }
  int outputs() const { return static_cast<int>(weight.rows()); }

  static DenseLayer Zeros(int inputs, int outputs);
  // Uniform He-style initialization, zero bias.
  static DenseLayer Random(int inputs, int outputs, std::mt19937_64& rng);

  // Batch forward: rows of `x` are samples.
  Matrix Forward(const Matrix& x) const;
};

// affine -> ReLU -> affine.
struct ProjectionHead {
  DenseLayer first;
  DenseLayer second;

  int output_dim() const { return second.outputs(); }
};

Matrix Relu(const Matrix& x);

// Tokens: lowercase ASCII, split on anything that is not alphanumeric.
std::vector<std::string> Tokenize(std::string_view text);
// FNV-1a 64 of the token, modulo the bucket count.
int TokenBucket(std::string_view token, int buckets);
// Bag-of-tokens count vector.
Vector TokenCounts(std::string_view text, int buckets);

// Time-mean of the mel spectrogram, then affine + ReLU.
Vector ToyAudioEncode(const MelSpectrogram& mel, const DenseLayer& layer);
// Hashed token counts, then affine + ReLU.
Vector ToyTextEncode(std::string_view text, const DenseLayer& layer);

// Unnormalized projection into the shared space.
Embedding Project(const Vector& features, const ProjectionHead& head);

// Throws Error{kZeroVector} for a zero or non-finite norm.
Embedding Normalize(const Embedding& embedding);
double Cosine(std::span<const float> a, std::span<const float> b);

class AudioEmbedder {
 public:
  virtual ~AudioEmbedder() = default;
  virtual Embedding EmbedAudio(const MelSpectrogram& mel) const = 0;
  virtual int embedding_dim() const = 0;
};

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual Embedding EmbedText(std::string_view text) const = 0;
  virtual int embedding_dim() const = 0;
};

// The desk-scale reference model: toy audio and text encoders, one projection
// head per tower, and the contrastive temperature (as log tau).
struct DualEncoderModel : AudioEmbedder, TextEmbedder {
  EncoderConfig config;
  DenseLayer audio_encoder;
  DenseLayer text_encoder;
  ProjectionHead audio_head;
  ProjectionHead text_head;
  double log_tau = 0.0;

  static DualEncoderModel Initialize(const EncoderConfig& config, std::uint64_t seed,
                                     double initial_tau = 0.07);

  Embedding EmbedAudio(const MelSpectrogram& mel) const override;
  Embedding EmbedText(std::string_view text) const override;
  int embedding_dim() const override { return config.embedding_dim; }

  // Normalized audio embedding from an already pooled (time-mean) mel vector.
  Embedding EmbedPooledAudio(std::span<const double> pooled_mel) const;
};

struct NamedEmbedding {
  std::string id;
  Embedding embedding;
};

// Embedding container: header {magic u32, version u32, D u32, count u64},
// then per entry {idLength u32, id bytes, D float32}, all little-endian.
void WriteEmbeddings(const std::filesystem::path& path, std::span<const NamedEmbedding> entries);
// Entries in file order. Throws Error{kCorruptContainer} or
// Error{kDimensionMismatch}.
std::vector<NamedEmbedding> ReadEmbeddings(const std::filesystem::path& path);
std::map<std::string, Embedding> LoadEmbeddings(const std::filesystem::path& path);

// Looks embeddings up by id, e.g. outputs of a full-scale model computed
// elsewhere.
class PrecomputedEmbeddings {
 public:
  explicit PrecomputedEmbeddings(std::map<std::string, Embedding> table);
  static PrecomputedEmbeddings Load(const std::filesystem::path& path);

  // nullptr when unknown.
  const Embedding* Find(std::string_view id) const;
  int embedding_dim() const { return dim_; }
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::string, Embedding, std::less<>> table_;
  int dim_ = 0;
};

}  // namespace bioclap

#endif  // BIOCLAP_ENCODER_H_
