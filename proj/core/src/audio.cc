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

#include "bioclap/audio.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary_io.h"
#include "bioclap/error.h"

namespace bioclap {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct WavFormat {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

double DecodeSample(const std::uint8_t* p, const WavFormat& fmt) {
  switch (fmt.bits) {
    case 16: {
      const auto v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
      return v / 32768.0;
    }
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    case 32: {
      const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (p[1] << 8) |
                                 (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
      if (fmt.format == kFormatFloat) {
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
      }
      return static_cast<std::int32_t>(bits) / 2147483648.0;
    }
  }
  return 0.0;
}

double Sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

// Windowed-sinc kernel evaluated at offset x (input samples).
struct SincKernel {
  double cutoff;      // cycles per input sample
  double half_width;  // input samples
  double beta;
  double i0_beta;

  double operator()(double x) const {
    if (std::abs(x) >= half_width) return 0.0;
    const double r = x / half_width;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) / i0_beta;
    return 2.0 * cutoff * Sinc(2.0 * cutoff * x) * w;
  }
};

}  // namespace

AudioClip DecodeWav(std::span<const std::uint8_t> bytes) {
  internal::ByteReader reader(bytes.data(), bytes.size(), ErrorCode::kCorruptFile);
  if (reader.Bytes(4) != "RIFF") throw Error(ErrorCode::kCorruptFile, "missing RIFF tag");
  reader.U32();
  if (reader.Bytes(4) != "WAVE") throw Error(ErrorCode::kCorruptFile, "missing WAVE tag");

  WavFormat fmt;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  while (reader.remaining() >= 8) {
    const std::string id = reader.Bytes(4);
    const std::uint32_t size = reader.U32();
    if (id == "fmt ") {
      if (size < 16) throw Error(ErrorCode::kCorruptFile, "fmt chunk too small");
      const std::size_t start = reader.position();
      fmt.format = reader.U16();
      fmt.channels = reader.U16();
      fmt.sample_rate = reader.U32();
      reader.U32();  // byte rate
      reader.U16();  // block align
      fmt.bits = reader.U16();
      if (fmt.format == kFormatExtensible) {
        if (size < 40) throw Error(ErrorCode::kCorruptFile, "extensible fmt chunk too small");
        reader.U16();  // cbSize
        reader.U16();  // valid bits
        reader.U32();  // channel mask
        fmt.format = reader.U16();  // first two bytes of the subformat GUID
      }
      reader.Skip(size - (reader.position() - start) + (size & 1));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(ErrorCode::kCorruptFile, "data chunk before fmt chunk");
      data = bytes.data() + reader.position();
      // Tolerate a declared size that runs past the end of a truncated stream.
      data_size = std::min<std::size_t>(size, reader.remaining());
      break;
    } else {
      reader.Skip(std::min<std::size_t>(size + (size & 1), reader.remaining()));
    }
  }
  if (!have_fmt) throw Error(ErrorCode::kCorruptFile, "missing fmt chunk");
  if (data == nullptr) throw Error(ErrorCode::kCorruptFile, "missing data chunk");
  if (fmt.channels == 0 || fmt.sample_rate == 0) {
    throw Error(ErrorCode::kCorruptFile, "zero channels or sample rate");
  }
  const bool pcm_ok = fmt.format == kFormatPcm && (fmt.bits == 16 || fmt.bits == 24 || fmt.bits == 32);
  const bool float_ok = fmt.format == kFormatFloat && fmt.bits == 32;
  if (!pcm_ok && !float_ok) {
    throw Error(ErrorCode::kUnsupportedEncoding,
                "format " + std::to_string(fmt.format) + " with " + std::to_string(fmt.bits) +
                    " bits per sample");
  }

  const std::size_t bytes_per_sample = fmt.bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  const std::size_t frames = data_size / frame_bytes;
  AudioClip clip;
  clip.sample_rate = static_cast<int>(fmt.sample_rate);
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double sum = 0.0;
    for (std::size_t c = 0; c < fmt.channels; ++c) {
      sum += DecodeSample(data + f * frame_bytes + c * bytes_per_sample, fmt);
    }
    clip.samples[f] = static_cast<float>(sum / fmt.channels);
  }
  return clip;
}

AudioClip LoadWav(const std::filesystem::path& path) {
  const auto bytes = internal::ReadBinaryFile(path);
  return DecodeWav(bytes);
}

std::vector<std::uint8_t> EncodeWav(const AudioClip& clip) {
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  internal::ByteWriter w;
  w.Bytes("RIFF");
  w.U32(36 + data_bytes);
  w.Bytes("WAVE");
  w.Bytes("fmt ");
  w.U32(16);
  w.U16(kFormatPcm);
  w.U16(1);
  w.U32(static_cast<std::uint32_t>(clip.sample_rate));
  w.U32(static_cast<std::uint32_t>(clip.sample_rate) * 2);
  w.U16(2);
  w.U16(16);
  w.Bytes("data");
  w.U32(data_bytes);
  for (float s : clip.samples) {
    const double clipped = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(clipped * 32767.0));
    w.U16(static_cast<std::uint16_t>(v));
  }
  return w.Take();
}

void WriteWav(const std::filesystem::path& path, const AudioClip& clip) {
  internal::WriteBinaryFile(path, EncodeWav(clip));
}

AudioClip Resample(const AudioClip& clip, int target_rate) {
  if (clip.sample_rate <= 0 || target_rate <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "sample rates must be positive");
  }
  if (clip.sample_rate == target_rate) return clip;

  const long long src = clip.sample_rate;
  const long long dst = target_rate;
  const long long g = std::gcd(src, dst);
  const long long up = dst / g;    // output phases per input step
  const long long down = src / g;  // input advance per `up` outputs

  constexpr double kZeroCrossings = 32.0;
  constexpr double kRolloff = 0.95;
  constexpr double kBeta = 8.6;
  SincKernel kernel;
  kernel.cutoff = 0.5 * kRolloff * std::min(1.0, static_cast<double>(dst) / src);
  kernel.half_width = kZeroCrossings / (2.0 * kernel.cutoff);
  kernel.beta = kBeta;
  kernel.i0_beta = std::cyl_bessel_i(0.0, kBeta);

  const std::size_t in_len = clip.samples.size();
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(in_len) * static_cast<double>(dst) / src));
  const auto taps = static_cast<long long>(std::ceil(kernel.half_width));

  // Output n sits at input position t = n * down / up. Its fractional part
  // depends only on (n * down) mod up, so weights are tabulated per phase.
  const bool tabulate = up <= 8192;
  std::vector<double> table;
  if (tabulate) {
    table.resize(static_cast<std::size_t>(up * 2 * taps));
    for (long long p = 0; p < up; ++p) {
      const double frac = static_cast<double>(p) / up;
      for (long long j = -taps + 1; j <= taps; ++j) {
        table[static_cast<std::size_t>(p * 2 * taps + (j + taps - 1))] = kernel(j - frac);
      }
    }
  }

  AudioClip out;
  out.sample_rate = target_rate;
  out.source_recording_id = clip.source_recording_id;
  out.chunk_index = clip.chunk_index;
  out.samples.resize(out_len);
  for (std::size_t n = 0; n < out_len; ++n) {
    const long long num = static_cast<long long>(n) * down;
    const long long base = num / up;
    const long long phase = num % up;
    const double frac = static_cast<double>(phase) / up;
    double acc = 0.0;
    double weight_sum = 0.0;
    for (long long j = -taps + 1; j <= taps; ++j) {
      const long long k = base + j;
      if (k < 0 || k >= static_cast<long long>(in_len)) continue;
      const double w = tabulate ? table[static_cast<std::size_t>(phase * 2 * taps + (j + taps - 1))]
                                : kernel(j - frac);
      acc += w * clip.samples[static_cast<std::size_t>(k)];
      weight_sum += w;
    }
    // Normalizing by the realized kernel mass keeps DC exact, including at
    // the edges where the kernel is truncated.
    out.samples[n] = weight_sum != 0.0 ? static_cast<float>(acc / weight_sum) : 0.0f;
  }
  return out;
}

AudioClip FixLength(const AudioClip& clip, double seconds) {
  const auto target = static_cast<std::size_t>(std::llround(seconds * clip.sample_rate));
  AudioClip out = clip;
  out.samples.resize(target, 0.0f);
  return out;
}

int ChunkPlan(double clip_length_seconds, std::size_t species_corpus_count) {
  if (!(clip_length_seconds > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "clip length must be positive");
  }
  if (clip_length_seconds <= kClipSeconds || species_corpus_count >= kRareSpeciesThreshold) {
    return 1;
  }
  const auto windows = static_cast<int>(std::ceil(clip_length_seconds / kClipSeconds));
  return std::clamp(windows, 1, kMaxChunks);
}

std::vector<AudioClip> SplitChunks(const AudioClip& clip, int chunks, double seconds) {
  const auto window = static_cast<std::size_t>(std::llround(seconds * clip.sample_rate));
  std::vector<AudioClip> out;
  for (int c = 0; c < std::max(chunks, 1); ++c) {
    AudioClip piece;
    piece.sample_rate = clip.sample_rate;
    piece.source_recording_id = clip.source_recording_id;
    piece.chunk_index = c;
    piece.samples.assign(window, 0.0f);
    const std::size_t start = static_cast<std::size_t>(c) * window;
    if (start < clip.samples.size()) {
      const std::size_t n = std::min(window, clip.samples.size() - start);
      std::copy_n(clip.samples.begin() + static_cast<std::ptrdiff_t>(start), n,
                  piece.samples.begin());
    }
    out.push_back(std::move(piece));
  }
  return out;
}

}  // namespace bioclap
