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

#ifndef BIOCLAP_MEL_H_
#define BIOCLAP_MEL_H_

#include <filesystem>
#include <memory>
#include <utility>
#include <vector>

#include "bioclap/audio.h"

namespace bioclap {

struct MelConfig {
  int sample_rate = kCanonicalSampleRate;
  int window = 1024;  // also the FFT size
  int hop = 480;
  int mel_bins = 64;
  double f_min = 0.0;
  double f_max = 24000.0;
  double log_offset = 1e-10;
  bool log_compress = true;
};

// Throws Error{kConfigMismatch} for window < hop, mel_bins < 1, or a band
// outside [0, sample_rate / 2].
void ValidateMelConfig(const MelConfig& config);

struct MelSpectrogram {
  int frames = 0;
  int mel_bins = 0;
  int hop = 0;
  int window = 0;
  std::vector<float> values;  // row-major, frames x mel_bins

  float at(int frame, int bin) const {
    return values[static_cast<std::size_t>(frame) * mel_bins + bin];
  }
  // Mean over frames, one value per mel bin.
  std::vector<double> TimeMean() const;
};

double HzToMel(double hz);
double MelToHz(double mel);

// HTK-scale triangular filters, rows = mel bins, columns = rfft bins.
std::vector<std::vector<double>> MelFilterbank(const MelConfig& config);

// Hann-windowed STFT with zero center padding (1 + len / hop frames), power
// spectrum, mel filterbank, then log(x + offset). Owns an FFTW plan; Compute
// is safe to call concurrently.
class MelExtractor {
 public:
  explicit MelExtractor(MelConfig config);
  ~MelExtractor();
  MelExtractor(const MelExtractor&) = delete;
  MelExtractor& operator=(const MelExtractor&) = delete;

  // Throws Error{kConfigMismatch} if the clip rate differs from the config.
  MelSpectrogram Compute(const AudioClip& clip) const;

  const MelConfig& config() const { return config_; }

 private:
  struct Plan;
  MelConfig config_;
  std::vector<double> window_;
  std::vector<std::vector<double>> filters_;
  std::vector<std::pair<int, int>> filter_support_;  // [first, last) rfft bins
  std::unique_ptr<Plan> plan_;
};

MelSpectrogram ComputeMelSpectrogram(const AudioClip& clip, const MelConfig& config = {});

// Feature cache: 16-byte little-endian header {magic, frames, melBins,
// version} followed by frames x melBins float32 values, row-major.
void WriteFeatureCache(const std::filesystem::path& path, const MelSpectrogram& mel);
MelSpectrogram ReadFeatureCache(const std::filesystem::path& path);

}  // namespace bioclap

#endif  // BIOCLAP_MEL_H_
