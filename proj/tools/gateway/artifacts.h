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

#ifndef BIOCLAP_TOOLS_ARTIFACTS_H_
#define BIOCLAP_TOOLS_ARTIFACTS_H_

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bioclap/archive_ingest.h"
#include "bioclap/audio.h"
#include "bioclap/captioner.h"
#include "bioclap/encoder.h"
#include "bioclap/mel.h"
#include "bioclap/trainer.h"
#include "bioclap/vector_index.h"

namespace bioclap::tools {

// One fixed-length training/search unit cut from a recording.
struct ClipRecord {
  std::string clip_id;
  std::string recording_id;
  int chunk_index = 0;
  std::filesystem::path audio_path;  // stored 10-second WAV
  std::filesystem::path mel_path;    // feature cache
};

std::string ClipId(std::string_view recording_id, int chunk_index);

// Feature directory layout: clips.jsonl, clips/<clipId>.wav, mel/<clipId>.bcmf.
inline constexpr char kClipsManifest[] = "clips.jsonl";

void WriteClipManifest(const std::filesystem::path& dir, std::span<const ClipRecord> clips);
std::vector<ClipRecord> ReadClipManifest(const std::filesystem::path& dir);

struct FeatureReport {
  std::vector<ClipRecord> clips;
  std::vector<std::string> failed;  // "recordingId: reason"
};

// Loads every recording's audio under `corpus_root`, resamples, chunks and
// writes clips and mel caches into `out_dir`. Unreadable files are reported
// and skipped.
FeatureReport BuildFeatures(std::span<const Recording> records,
                            const std::filesystem::path& corpus_root,
                            const std::filesystem::path& out_dir, const MelConfig& mel);

// Resample, crop/pad to 10 s and compute the mel spectrogram of arbitrary
// audio, as done for uploaded classify requests.
MelSpectrogram CanonicalMel(const AudioClip& clip, int mel_bins);

// Clips whose recording passes `keep` (all when empty), paired with every
// caption of their recording. Clips without captions are dropped.
std::vector<TrainingExample> TrainingExamples(
    std::span<const ClipRecord> clips, const std::map<std::string, std::vector<Caption>>& captions,
    const std::set<std::string>* keep = nullptr);

// Common-name caption used as the retrieval query for a recording; falls
// back to the first caption of any form.
std::optional<std::string> QueryCaption(std::span<const Caption> captions);

struct IndexInputs {
  std::vector<ClipRecord> clips;
  std::map<std::string, Recording> records;
  std::map<std::string, std::vector<Caption>> captions;
  // Precomputed audio embeddings by clip id; when empty the model is used.
  std::map<std::string, Embedding> embeddings;
};

VectorIndex BuildIndex(const IndexInputs& inputs, const DualEncoderModel* model);

std::map<std::string, Recording> RecordsById(std::span<const Recording> records);

}  // namespace bioclap::tools

#endif  // BIOCLAP_TOOLS_ARTIFACTS_H_
