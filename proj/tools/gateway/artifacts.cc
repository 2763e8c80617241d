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

#include "gateway/artifacts.h"

#include <fstream>

#include "bioclap/error.h"
#include "json.hpp"

namespace bioclap::tools {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ClipId(std::string_view recording_id, int chunk_index) {
  return std::string(recording_id) + "-" + std::to_string(chunk_index);
}

void WriteClipManifest(const fs::path& dir, std::span<const ClipRecord> clips) {
  fs::create_directories(dir);
  std::ofstream out(dir / kClipsManifest);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + (dir / kClipsManifest).string());
  for (const auto& c : clips) {
    out << json{{"clipId", c.clip_id},
                {"recordingId", c.recording_id},
                {"chunkIndex", c.chunk_index},
                {"audioPath", fs::relative(c.audio_path, dir).generic_string()},
                {"melPath", fs::relative(c.mel_path, dir).generic_string()}}
               .dump()
        << '\n';
  }
}

std::vector<ClipRecord> ReadClipManifest(const fs::path& dir) {
  std::ifstream in(dir / kClipsManifest);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + (dir / kClipsManifest).string());
  std::vector<ClipRecord> clips;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      clips.push_back({j.at("clipId").get<std::string>(), j.at("recordingId").get<std::string>(),
                       j.at("chunkIndex").get<int>(), dir / j.at("audioPath").get<std::string>(),
                       dir / j.at("melPath").get<std::string>()});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedManifest,
                  kClipsManifest + (":" + std::to_string(line_no) + ": " + e.what()));
    }
  }
  return clips;
}

MelSpectrogram CanonicalMel(const AudioClip& clip, int mel_bins) {
  MelConfig config;
  config.mel_bins = mel_bins;
  return ComputeMelSpectrogram(FixLength(Resample(clip, kCanonicalSampleRate)), config);
}

FeatureReport BuildFeatures(std::span<const Recording> records, const fs::path& corpus_root,
                            const fs::path& out_dir, const MelConfig& mel) {
  ValidateMelConfig(mel);
  if (mel.sample_rate != kCanonicalSampleRate) {
    throw Error(ErrorCode::kConfigMismatch, "features are computed at 48 kHz");
  }
  std::map<std::string, std::size_t> species_counts;
  for (const auto& r : records) ++species_counts[r.SpeciesKey()];

  fs::create_directories(out_dir / "clips");
  fs::create_directories(out_dir / "mel");
  const MelExtractor extractor(mel);
  FeatureReport report;
  for (const auto& r : records) {
    AudioClip audio;
    try {
      audio = Resample(LoadWav(corpus_root / r.audio_path), kCanonicalSampleRate);
    } catch (const Error& e) {
      report.failed.push_back(r.id + ": " + e.what());
      continue;
    }
    audio.source_recording_id = r.id;
    const int chunks = ChunkPlan(audio.seconds(), species_counts[r.SpeciesKey()]);
    for (const AudioClip& chunk : SplitChunks(audio, chunks)) {
      ClipRecord clip;
      clip.recording_id = r.id;
      clip.chunk_index = chunk.chunk_index;
      clip.clip_id = ClipId(r.id, chunk.chunk_index);
      clip.audio_path = out_dir / "clips" / (clip.clip_id + ".wav");
      clip.mel_path = out_dir / "mel" / (clip.clip_id + ".bcmf");
      WriteWav(clip.audio_path, chunk);
      WriteFeatureCache(clip.mel_path, extractor.Compute(chunk));
      report.clips.push_back(std::move(clip));
    }
  }
  WriteClipManifest(out_dir, report.clips);
  return report;
}

std::vector<TrainingExample> TrainingExamples(
    std::span<const ClipRecord> clips, const std::map<std::string, std::vector<Caption>>& captions,
    const std::set<std::string>* keep) {
  std::vector<TrainingExample> out;
  for (const auto& clip : clips) {
    if (keep && !keep->contains(clip.recording_id)) continue;
    const auto it = captions.find(clip.recording_id);
    if (it == captions.end() || it->second.empty()) continue;
    TrainingExample ex;
    ex.clip_id = clip.clip_id;
    ex.recording_id = clip.recording_id;
    ex.pooled_mel = ReadFeatureCache(clip.mel_path).TimeMean();
    for (const auto& c : it->second) ex.captions.push_back(c.text);
    out.push_back(std::move(ex));
  }
  return out;
}

std::optional<std::string> QueryCaption(std::span<const Caption> captions) {
  for (const auto& c : captions) {
    if (c.name_form == NameForm::kCommon) return c.text;
  }
  if (captions.empty()) return std::nullopt;
  return captions.front().text;
}

VectorIndex BuildIndex(const IndexInputs& inputs, const DualEncoderModel* model) {
  int dim = model ? model->embedding_dim() : 0;
  if (!inputs.embeddings.empty()) dim = static_cast<int>(inputs.embeddings.begin()->second.dim());
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "need a model or precomputed embeddings");
  VectorIndex index(dim);
  for (const auto& clip : inputs.clips) {
    IndexEntry entry;
    entry.clip_id = clip.clip_id;
    entry.recording_id = clip.recording_id;
    entry.chunk_index = clip.chunk_index;
    entry.audio_path = fs::absolute(clip.audio_path).lexically_normal().string();
    if (const auto c = inputs.captions.find(clip.recording_id); c != inputs.captions.end()) {
      entry.caption_common = QueryCaption(c->second).value_or("");
    }
    if (const auto r = inputs.records.find(clip.recording_id); r != inputs.records.end()) {
      entry.species_common = r->second.species_common;
      entry.species_scientific = r->second.species_scientific;
    }
    if (!inputs.embeddings.empty()) {
      const auto e = inputs.embeddings.find(clip.clip_id);
      if (e == inputs.embeddings.end()) {
        throw Error(ErrorCode::kNotFound, "no precomputed embedding for clip " + clip.clip_id);
      }
      entry.embedding = e->second;
    } else {
      entry.embedding = model->EmbedAudio(ReadFeatureCache(clip.mel_path));
    }
    index.Add(std::move(entry));
  }
  return index;
}

std::map<std::string, Recording> RecordsById(std::span<const Recording> records) {
  std::map<std::string, Recording> out;
  for (const auto& r : records) out.emplace(r.id, r);
  return out;
}

}  // namespace bioclap::tools
