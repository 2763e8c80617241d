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

#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bioclap/mel.h"
#include "bioclap/trainer.h"
#include "bioclap/vector_index.h"

namespace bioclap {
namespace {

std::vector<float> UnitVector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<float> g(0, 1);
  std::vector<float> v(dim);
  double n = 0;
  for (auto& x : v) {
    x = g(rng);
    n += double(x) * x;
  }
  for (auto& x : v) x = static_cast<float>(x / std::sqrt(n));
  return v;
}

void BM_Search(benchmark::State& state) {
  const int count = static_cast<int>(state.range(0));
  const int dim = 512;
  std::mt19937_64 rng(1);
  VectorIndex index(dim);
  for (int i = 0; i < count; ++i) {
    IndexEntry e;
    e.clip_id = "clip" + std::to_string(i);
    e.embedding = Embedding{UnitVector(rng, dim), true};
    index.Add(std::move(e));
  }
  const auto q = UnitVector(rng, dim);
  for (auto _ : state) benchmark::DoNotOptimize(index.Search(q, 10));
  state.SetItemsProcessed(state.iterations() * count);
}
BENCHMARK(BM_Search)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_MelTenSeconds(benchmark::State& state) {
  AudioClip clip;
  clip.sample_rate = kCanonicalSampleRate;
  clip.samples.resize(10 * kCanonicalSampleRate);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    clip.samples[i] = static_cast<float>(0.5 * std::sin(2 * std::numbers::pi * 1000.0 * i / 48000.0));
  }
  const MelExtractor extractor{MelConfig{}};
  for (auto _ : state) benchmark::DoNotOptimize(extractor.Compute(clip));
}
BENCHMARK(BM_MelTenSeconds)->Unit(benchmark::kMillisecond);

void BM_LossAndGradients(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  EncoderConfig ec;
  DualEncoderModel model = DualEncoderModel::Initialize(ec, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0, 1);
  FeatureBatch fb{Matrix(n, ec.mel_bins), Matrix::Zero(n, ec.vocab_hash_buckets)};
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < ec.mel_bins; ++k) fb.pooled_mel(i, k) = g(rng);
    for (int t = 0; t < 8; ++t) fb.token_counts(i, rng() % ec.vocab_hash_buckets) += 1;
  }
  ModelGradients grads;
  for (auto _ : state) benchmark::DoNotOptimize(ModelLossGradients(model, fb, &grads));
}
BENCHMARK(BM_LossAndGradients)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace bioclap

BENCHMARK_MAIN();
