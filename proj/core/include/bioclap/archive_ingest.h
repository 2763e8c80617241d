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

#ifndef BIOCLAP_ARCHIVE_INGEST_H_
#define BIOCLAP_ARCHIVE_INGEST_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "bioclap/recording.h"

namespace bioclap {

// A row-level problem found while parsing a manifest. Errors exclude the row
// from the output; warnings drop an optional field but keep the row.
struct ManifestIssue {
  enum class Severity { kError, kWarning };
  std::size_t line = 0;  // 1-based physical line in the manifest
  Severity severity = Severity::kError;
  std::string record_id;
  std::string reason;
};

struct ParseResult {
  std::vector<Recording> records;
  std::vector<ManifestIssue> issues;
};

// Parses a per-source manifest. Column and field names are documented in
// docs/manifests.md. Structural problems (bad header, wrong column count,
// undecodable JSON line) throw Error{kMalformedManifest}.
ParseResult ParseManifest(const std::filesystem::path& path, Source source);
ParseResult ParseManifestText(std::string_view text, Source source);

// Normalized manifest: one Recording per line as a JSON object.
std::string RecordingToJsonLine(const Recording& record);
Recording RecordingFromJsonLine(std::string_view line);
void WriteNormalizedManifest(const std::filesystem::path& path,
                             const std::vector<Recording>& records);
std::vector<Recording> ReadNormalizedManifest(const std::filesystem::path& path);
void WriteIssueReport(const std::filesystem::path& path,
                      const std::vector<ManifestIssue>& issues);

// Scientific <-> common name lookup. Scientific keys are matched exactly;
// reverse lookups are case-insensitive on the common name.
class NameTable {
 public:
  void Add(std::string scientific, std::string common);
  const std::string* CommonFor(std::string_view scientific) const;
  const std::string* ScientificFor(std::string_view common) const;
  std::size_t size() const { return to_common_.size(); }

  // CSV with header "scientific_name,common_name".
  static NameTable FromCsv(const std::filesystem::path& path);

 private:
  std::map<std::string, std::string, std::less<>> to_common_;
  std::map<std::string, std::string, std::less<>> to_scientific_;
};

struct NameMappingReport {
  std::size_t filled_common = 0;
  std::size_t filled_scientific = 0;
  std::size_t unmapped = 0;
  std::vector<std::string> unmapped_names;
};

// Fills in whichever name form is missing when the table knows it. Existing
// names are never overwritten.
std::vector<Recording> MapSpeciesNames(std::vector<Recording> records,
                                       const NameTable& table,
                                       NameMappingReport* report = nullptr);

struct SplitOptions {
  std::size_t min_count = 70;
  double test_fraction = 0.10;
  std::uint64_t seed = 0;
};

// Held-out split for species with at least `min_count` recordings. A sampled
// candidate is kept for test only if no train recording of the same species
// shares its (date, time, location) triple; missing fields compare equal to
// each other. Throws Error{kEmptyCorpus}.
CorpusSplit BuildSpeciesSplit(const std::vector<Recording>& records,
                              const SplitOptions& options);

void WriteSplit(const std::filesystem::path& path, const CorpusSplit& split,
                const SplitOptions& options);
CorpusSplit ReadSplit(const std::filesystem::path& path);

}  // namespace bioclap

#endif  // BIOCLAP_ARCHIVE_INGEST_H_
