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

#ifndef BIOCLAP_AUDIO_H_
#define BIOCLAP_AUDIO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bioclap {

inline constexpr int kCanonicalSampleRate = 48000;
inline constexpr double kClipSeconds = 10.0;
// Species with fewer recordings than this get long files split into chunks.
inline constexpr std::size_t kRareSpeciesThreshold = 40;
inline constexpr int kMaxChunks = 5;

struct AudioClip {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  int sample_rate = kCanonicalSampleRate;
  std::string source_recording_id;
  int chunk_index = 0;

  double seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// PCM WAV: 16/24/32-bit integer or 32-bit float, any channel count (averaged
// to mono). Throws Error{kUnsupportedEncoding} or Error{kCorruptFile}.
AudioClip LoadWav(const std::filesystem::path& path);
AudioClip DecodeWav(std::span<const std::uint8_t> bytes);

// 16-bit PCM mono; samples are clipped to [-1, 1].
std::vector<std::uint8_t> EncodeWav(const AudioClip& clip);
void WriteWav(const std::filesystem::path& path, const AudioClip& clip);

// Kaiser-windowed sinc interpolation. Output length is
// round(len * target / source). Returns the input unchanged when rates match.
AudioClip Resample(const AudioClip& clip, int target_rate = kCanonicalSampleRate);

// Crops from the head or zero-pads at the tail to exactly seconds * rate
// samples.
AudioClip FixLength(const AudioClip& clip, double seconds = kClipSeconds);

// Number of consecutive 10-second windows to cut from a recording: more than
// one only for clips longer than 10 s of species with fewer than 40
// recordings, capped at five.
int ChunkPlan(double clip_length_seconds, std::size_t species_corpus_count);

// Splits into `chunks` consecutive non-overlapping windows starting at t=0,
// each fixed to `seconds` (the last one zero-padded).
std::vector<AudioClip> SplitChunks(const AudioClip& clip, int chunks,
                                   double seconds = kClipSeconds);

}  // namespace bioclap

#endif  // BIOCLAP_AUDIO_H_
