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

#include "bioclap/mel.h"

#include <fftw3.h>

#include <cmath>
#include <mutex>

#include "binary_io.h"
#include "bioclap/error.h"

namespace bioclap {
namespace {

constexpr std::uint32_t kFeatureMagic = 0x464D4342;  // "BCMF"
constexpr std::uint32_t kFeatureVersion = 1;

// FFTW's planner is not thread-safe; execution with new-array calls is.
std::mutex& PlannerMutex() {
  static std::mutex mu;
  return mu;
}

}  // namespace

struct MelExtractor::Plan {
  fftw_plan plan = nullptr;
};

void ValidateMelConfig(const MelConfig& c) {
  if (c.window < c.hop) throw Error(ErrorCode::kConfigMismatch, "window shorter than hop");
  if (c.hop < 1) throw Error(ErrorCode::kConfigMismatch, "hop must be positive");
  if (c.mel_bins < 1) throw Error(ErrorCode::kConfigMismatch, "need at least one mel bin");
  if (c.sample_rate <= 0) throw Error(ErrorCode::kConfigMismatch, "bad sample rate");
  if (c.f_min < 0.0 || c.f_max <= c.f_min || c.f_max > c.sample_rate / 2.0 + 1e-9) {
    throw Error(ErrorCode::kConfigMismatch, "mel band must lie within [0, rate/2]");
  }
}

std::vector<double> MelSpectrogram::TimeMean() const {
  std::vector<double> mean(static_cast<std::size_t>(mel_bins), 0.0);
  if (frames == 0) return mean;
  for (int f = 0; f < frames; ++f) {
    for (int m = 0; m < mel_bins; ++m) mean[m] += at(f, m);
  }
  for (auto& v : mean) v /= frames;
  return mean;
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<double>> MelFilterbank(const MelConfig& config) {
  ValidateMelConfig(config);
  const int bins = config.window / 2 + 1;
  const double mel_lo = HzToMel(config.f_min);
  const double mel_hi = HzToMel(config.f_max);
  std::vector<double> edges(static_cast<std::size_t>(config.mel_bins) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                    (config.mel_bins + 1));
  }
  std::vector<std::vector<double>> filters(static_cast<std::size_t>(config.mel_bins),
                                           std::vector<double>(bins, 0.0));
  for (int m = 0; m < config.mel_bins; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / config.window;
      const double rising = (f - left) / (center - left);
      const double falling = (right - f) / (right - center);
      filters[m][k] = std::max(0.0, std::min(rising, falling));
    }
  }
  return filters;
}

MelExtractor::MelExtractor(MelConfig config)
    : config_(config), plan_(std::make_unique<Plan>()) {
  ValidateMelConfig(config_);
  filters_ = MelFilterbank(config_);
  for (const auto& filter : filters_) {
    int first = 0;
    int last = static_cast<int>(filter.size());
    while (first < last && filter[first] == 0.0) ++first;
    while (last > first && filter[last - 1] == 0.0) --last;
    filter_support_.emplace_back(first, last);
  }
  window_.resize(static_cast<std::size_t>(config_.window));
  for (int i = 0; i < config_.window; ++i) {
    // Periodic Hann.
    window_[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / config_.window);
  }
  std::vector<double> in(static_cast<std::size_t>(config_.window));
  std::vector<fftw_complex> out(static_cast<std::size_t>(config_.window / 2 + 1));
  std::lock_guard lock(PlannerMutex());
  plan_->plan = fftw_plan_dft_r2c_1d(config_.window, in.data(), out.data(),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
}

MelExtractor::~MelExtractor() {
  if (plan_ && plan_->plan) {
    std::lock_guard lock(PlannerMutex());
    fftw_destroy_plan(plan_->plan);
  }
}

MelSpectrogram MelExtractor::Compute(const AudioClip& clip) const {
  if (clip.sample_rate != config_.sample_rate) {
    throw Error(ErrorCode::kConfigMismatch,
                "clip rate " + std::to_string(clip.sample_rate) + " differs from feature rate " +
                    std::to_string(config_.sample_rate));
  }
  const int n_fft = config_.window;
  const int bins = n_fft / 2 + 1;
  const int pad = n_fft / 2;
  const auto len = static_cast<long long>(clip.samples.size());

  MelSpectrogram mel;
  mel.frames = 1 + static_cast<int>(len / config_.hop);
  mel.mel_bins = config_.mel_bins;
  mel.hop = config_.hop;
  mel.window = config_.window;
  mel.values.resize(static_cast<std::size_t>(mel.frames) * mel.mel_bins);

  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  std::vector<fftw_complex> spectrum(static_cast<std::size_t>(bins));
  std::vector<double> power(static_cast<std::size_t>(bins));
  for (int f = 0; f < mel.frames; ++f) {
    // Frame f is centred on sample f * hop; samples outside the clip are zero.
    const long long start = static_cast<long long>(f) * config_.hop - pad;
    for (int i = 0; i < n_fft; ++i) {
      const long long s = start + i;
      frame[i] = (s >= 0 && s < len) ? clip.samples[static_cast<std::size_t>(s)] * window_[i]
                                     : 0.0;
    }
    fftw_execute_dft_r2c(plan_->plan, frame.data(), spectrum.data());
    for (int k = 0; k < bins; ++k) {
      power[k] = spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
    }
    for (int m = 0; m < mel.mel_bins; ++m) {
      double energy = 0.0;
      const auto& filter = filters_[m];
      const auto [first, last] = filter_support_[m];
      for (int k = first; k < last; ++k) energy += filter[k] * power[k];
      mel.values[static_cast<std::size_t>(f) * mel.mel_bins + m] = static_cast<float>(
          config_.log_compress ? std::log(energy + config_.log_offset) : energy);
    }
  }
  return mel;
}

MelSpectrogram ComputeMelSpectrogram(const AudioClip& clip, const MelConfig& config) {
  return MelExtractor(config).Compute(clip);
}

void WriteFeatureCache(const std::filesystem::path& path, const MelSpectrogram& mel) {
  internal::ByteWriter w;
  w.U32(kFeatureMagic);
  w.U32(static_cast<std::uint32_t>(mel.frames));
  w.U32(static_cast<std::uint32_t>(mel.mel_bins));
  w.U32(kFeatureVersion);
  for (float v : mel.values) w.F32(v);
  internal::WriteBinaryFile(path, w.Take());
}

MelSpectrogram ReadFeatureCache(const std::filesystem::path& path) {
  const auto bytes = internal::ReadBinaryFile(path);
  internal::ByteReader r(bytes.data(), bytes.size(), ErrorCode::kCorruptFile);
  if (r.U32() != kFeatureMagic) throw Error(ErrorCode::kCorruptFile, "bad feature magic");
  MelSpectrogram mel;
  mel.frames = static_cast<int>(r.U32());
  mel.mel_bins = static_cast<int>(r.U32());
  if (const auto version = r.U32(); version != kFeatureVersion) {
    throw Error(ErrorCode::kCorruptFile, "unsupported feature version " + std::to_string(version));
  }
  const std::size_t count = static_cast<std::size_t>(mel.frames) * mel.mel_bins;
  if (r.remaining() != count * 4) {
    throw Error(ErrorCode::kCorruptFile, "feature payload size does not match header");
  }
  mel.values.resize(count);
  for (auto& v : mel.values) v = r.F32();
  return mel;
}

}  // namespace bioclap
