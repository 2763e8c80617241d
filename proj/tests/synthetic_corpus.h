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

// Synthetic "species": each one is a fixed mixture of band-limited tones.
// Individual clips jitter the tone frequencies and amplitudes and add noise.
#ifndef BIOCLAP_TESTS_SYNTHETIC_CORPUS_H_
#define BIOCLAP_TESTS_SYNTHETIC_CORPUS_H_

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "bioclap/audio.h"
#include "bioclap/recording.h"

namespace bioclap::testing {

struct SyntheticSpecies {
  std::string common;
  std::string scientific;
  std::vector<double> tones_hz;
};

inline std::vector<SyntheticSpecies> SyntheticSpeciesSet(int count) {
  static const char* kAdjectives[] = {
      "Amber",  "Basalt", "Cobalt", "Dune",   "Ember",  "Fjord",  "Granite", "Heather",
      "Indigo", "Jade",   "Kelp",   "Lichen", "Marsh",  "Nimbus", "Ochre",   "Pebble",
      "Quartz", "Russet", "Saffron", "Tundra", "Umber", "Vesper", "Willow",  "Xeric",
      "Yarrow", "Zephyr", "Alder",  "Birch",  "Cedar",  "Drift",  "Estuary", "Flint"};
  static const char* kNouns[] = {"Warbler", "Tree Frog", "Cricket", "Owl"};
  // 48 log-spaced candidate tones between 250 Hz and 14 kHz.
  std::vector<double> grid;
  for (int i = 0; i < 48; ++i) grid.push_back(250.0 * std::pow(14000.0 / 250.0, i / 47.0));
  std::vector<SyntheticSpecies> out;
  for (int s = 0; s < count; ++s) {
    SyntheticSpecies sp;
    sp.common = std::string(kAdjectives[s % 32]) + " " + kNouns[s % 4];
    if (s >= 32) sp.common += " " + std::to_string(s / 32 + 1);
    sp.scientific = "Synthetica " + std::string(kAdjectives[s % 32]) + std::to_string(s);
    for (char& c : sp.scientific) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    sp.scientific[0] = 'S';
    sp.tones_hz = {grid[s % 48], grid[(s * 7 + 17) % 48], grid[(s * 13 + 29) % 48]};
    out.push_back(std::move(sp));
  }
  return out;
}

inline AudioClip SynthesizeClip(const SyntheticSpecies& sp, std::mt19937_64& rng, double seconds,
                                int rate = kCanonicalSampleRate) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.01);
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(static_cast<std::size_t>(seconds * rate));
  struct Tone {
    double hz, amp, phase, am_hz;
  };
  std::vector<Tone> tones;
  for (double hz : sp.tones_hz) {
    tones.push_back({hz * (0.98 + 0.04 * u(rng)), 0.1 + 0.15 * u(rng),
                     2 * std::numbers::pi * u(rng), 0.5 + 3.0 * u(rng)});
  }
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    double v = noise(rng);
    for (const auto& tone : tones) {
      const double envelope = 0.6 + 0.4 * std::sin(2 * std::numbers::pi * tone.am_hz * t);
      v += tone.amp * envelope * std::sin(2 * std::numbers::pi * tone.hz * t + tone.phase);
    }
    clip.samples[i] = static_cast<float>(v);
  }
  return clip;
}

// Distinct (date, time, location) per recording so that no split candidate
// collides with a train recording.
inline Recording SyntheticRecording(const SyntheticSpecies& sp, int species_index, int n) {
  using namespace std::chrono;
  Recording r;
  r.id = "syn" + std::to_string(species_index) + "_" + std::to_string(n);
  r.source = Source::kSynthetic;
  r.species_common = sp.common;
  r.species_scientific = sp.scientific;
  r.recorded_date = year_month_day{sys_days{year{2024} / January / 1} + days{n}};
  r.recorded_time = TimeOfDay{3600 * (species_index % 24) + 60 * (n % 60)};
  r.location = "site-" + std::to_string(species_index);
  r.audio_path = "audio/" + r.id + ".wav";
  r.license = "CC0";
  return r;
}

}  // namespace bioclap::testing

#endif  // BIOCLAP_TESTS_SYNTHETIC_CORPUS_H_
