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

#include "bioclap/archive_ingest.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "bioclap/error.h"
#include "csv.h"
#include "json.hpp"
#include "rng.h"

namespace bioclap {
namespace {

using nlohmann::json;

std::string Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::optional<std::string> NonEmpty(std::string_view s) {
  std::string t = Trim(s);
  if (t.empty()) return std::nullopt;
  return t;
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// One raw row, independent of the on-disk encoding.
class FieldSource {
 public:
  virtual ~FieldSource() = default;
  virtual std::optional<std::string> Get(std::string_view name) const = 0;
  virtual std::vector<std::string> GetList(std::string_view name) const {
    std::vector<std::string> out;
    if (auto v = Get(name)) {
      std::stringstream ss(*v);
      std::string item;
      while (std::getline(ss, item, ';')) {
        if (auto t = NonEmpty(item)) out.push_back(*t);
      }
    }
    return out;
  }
};

class CsvFields : public FieldSource {
 public:
  CsvFields(const std::unordered_map<std::string, std::size_t>& columns,
            const std::vector<std::string>& values)
      : columns_(columns), values_(values) {}
  std::optional<std::string> Get(std::string_view name) const override {
    const auto it = columns_.find(std::string(name));
    if (it == columns_.end()) return std::nullopt;
    return NonEmpty(values_[it->second]);
  }

 private:
  const std::unordered_map<std::string, std::size_t>& columns_;
  const std::vector<std::string>& values_;
};

class JsonFields : public FieldSource {
 public:
  explicit JsonFields(const json& object) : object_(object) {}
  std::optional<std::string> Get(std::string_view name) const override {
    const auto it = object_.find(std::string(name));
    if (it == object_.end() || it->is_null()) return std::nullopt;
    if (it->is_string()) return NonEmpty(it->get<std::string>());
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    if (it->is_number()) return it->dump();
    return std::nullopt;
  }
  std::vector<std::string> GetList(std::string_view name) const override {
    const auto it = object_.find(std::string(name));
    if (it != object_.end() && it->is_array()) {
      std::vector<std::string> out;
      for (const auto& v : *it) {
        if (v.is_string()) {
          if (auto t = NonEmpty(v.get<std::string>())) out.push_back(*t);
        }
      }
      return out;
    }
    return FieldSource::GetList(name);
  }

 private:
  const json& object_;
};

struct SourceSchema {
  bool jsonl = false;
  std::vector<std::string> required_columns;  // CSV header must contain these
  std::string id, scientific, common, notes, call_type, behavior, background,
      num_animals, date, time, location, audio_path, license;
};

const SourceSchema& SchemaFor(Source source) {
  static const std::map<Source, SourceSchema> kSchemas = [] {
    std::map<Source, SourceSchema> m;
    m[Source::kINaturalist] = SourceSchema{
        false,
        {"id", "scientific_name", "common_name", "description", "observed_on",
         "time_observed", "place_guess", "audio_path", "license"},
        "id", "scientific_name", "common_name", "description", "", "", "", "",
        "observed_on", "time_observed", "place_guess", "audio_path", "license"};
    m[Source::kXenoCanto] = SourceSchema{
        true, {}, "id", "species", "en", "rmk", "type", "behavior", "also",
        "animals", "date", "time", "loc", "file", "lic"};
    m[Source::kWatkins] = SourceSchema{
        false,
        {"id", "species_common", "species_scientific", "signal_type", "num_animals",
         "behavior", "notes", "date", "location", "audio_path", "license"},
        "id", "species_scientific", "species_common", "notes", "signal_type",
        "behavior", "", "num_animals", "date", "", "location", "audio_path", "license"};
    m[Source::kAsa] = SourceSchema{
        false,
        {"id", "scientific_name", "date", "time", "locality", "audio_path", "license"},
        "id", "scientific_name", "", "", "", "", "", "", "date", "time", "locality",
        "audio_path", "license"};
    m[Source::kAudioCaps] = SourceSchema{
        false, {"audiocap_id", "caption", "audio_path"},
        "audiocap_id", "", "", "caption", "", "", "", "", "", "", "", "audio_path",
        "license"};
    return m;
  }();
  return kSchemas.at(source);
}

// Maps one raw row onto a Recording. Returns nullopt (after appending an error)
// when a required field is missing or invalid.
std::optional<Recording> BuildRecording(const FieldSource& fields, Source source,
                                        std::size_t line,
                                        std::vector<ManifestIssue>& issues) {
  const SourceSchema& schema = SchemaFor(source);
  auto get = [&](const std::string& column) -> std::optional<std::string> {
    if (column.empty()) return std::nullopt;
    return fields.Get(column);
  };
  auto error = [&](std::string id, std::string reason) {
    issues.push_back({line, ManifestIssue::Severity::kError, std::move(id), std::move(reason)});
  };
  auto warn = [&](std::string id, std::string reason) {
    issues.push_back({line, ManifestIssue::Severity::kWarning, std::move(id), std::move(reason)});
  };

  Recording r;
  r.source = source;
  auto id = get(schema.id);
  if (!id) {
    error("", "missing id");
    return std::nullopt;
  }
  r.id = *id;
  r.species_scientific = get(schema.scientific);
  r.species_common = get(schema.common);
  if (source != Source::kAudioCaps && !r.species_scientific && !r.species_common) {
    error(r.id, "missing both species name fields");
    return std::nullopt;
  }
  r.notes = get(schema.notes);
  if (source == Source::kAudioCaps && !r.notes) {
    error(r.id, "missing caption");
    return std::nullopt;
  }
  auto audio = get(schema.audio_path);
  if (!audio) {
    error(r.id, "missing audio path");
    return std::nullopt;
  }
  if (!IsContainedRelativePath(*audio)) {
    error(r.id, "audio path escapes the corpus root: " + *audio);
    return std::nullopt;
  }
  r.audio_path = *audio;
  r.license = get(schema.license).value_or("");
  r.call_type = get(schema.call_type);
  r.behavior = get(schema.behavior);
  if (!schema.background.empty()) r.background_species = fields.GetList(schema.background);
  if (auto n = get(schema.num_animals)) {
    int value = 0;
    try {
      std::size_t used = 0;
      value = std::stoi(*n, &used);
      if (used != n->size()) value = 0;
    } catch (const std::exception&) {
      value = 0;
    }
    if (value > 0) {
      r.num_animals = value;
    } else {
      warn(r.id, "ignoring invalid animal count: " + *n);
    }
  }
  if (auto d = get(schema.date)) {
    r.recorded_date = ParseDate(*d);
    if (!r.recorded_date) warn(r.id, "ignoring unparseable date: " + *d);
  }
  if (auto t = get(schema.time)) {
    r.recorded_time = ParseTime(*t);
    if (!r.recorded_time) warn(r.id, "ignoring unparseable time: " + *t);
  }
  r.location = get(schema.location);
  return r;
}

void DropDuplicateIds(ParseResult& result, const std::vector<std::size_t>& lines) {
  std::unordered_set<std::string> seen;
  std::vector<Recording> kept;
  kept.reserve(result.records.size());
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    if (!seen.insert(result.records[i].id).second) {
      result.issues.push_back({lines[i], ManifestIssue::Severity::kError,
                               result.records[i].id, "duplicate id"});
      continue;
    }
    kept.push_back(std::move(result.records[i]));
  }
  result.records = std::move(kept);
}

ParseResult ParseCsvManifest(std::string_view text, Source source) {
  ParseResult result;
  const auto rows = internal::ParseCsv(text);
  if (rows.empty()) return result;
  std::unordered_map<std::string, std::size_t> columns;
  for (std::size_t i = 0; i < rows[0].fields.size(); ++i) {
    columns.emplace(Trim(rows[0].fields[i]), i);
  }
  for (const auto& required : SchemaFor(source).required_columns) {
    if (!columns.contains(required)) {
      throw Error(ErrorCode::kMalformedManifest, "header is missing column '" + required + "'");
    }
  }
  std::vector<std::size_t> lines;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].fields.size() != rows[0].fields.size()) {
      throw Error(ErrorCode::kMalformedManifest,
                  "line " + std::to_string(rows[r].line) + " has " +
                      std::to_string(rows[r].fields.size()) + " fields, header has " +
                      std::to_string(rows[0].fields.size()));
    }
    CsvFields fields(columns, rows[r].fields);
    if (auto rec = BuildRecording(fields, source, rows[r].line, result.issues)) {
      result.records.push_back(std::move(*rec));
      lines.push_back(rows[r].line);
    }
  }
  DropDuplicateIds(result, lines);
  return result;
}

template <typename Fn>
void ForEachJsonLine(std::string_view text, Fn&& fn) {
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    ++line;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    if (Trim(raw).empty()) continue;
    json object;
    try {
      object = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kMalformedManifest,
                  "line " + std::to_string(line) + ": " + e.what());
    }
    if (!object.is_object()) {
      throw Error(ErrorCode::kMalformedManifest,
                  "line " + std::to_string(line) + " is not a JSON object");
    }
    fn(line, object);
  }
}

ParseResult ParseJsonlManifest(std::string_view text, Source source) {
  ParseResult result;
  std::vector<std::size_t> lines;
  ForEachJsonLine(text, [&](std::size_t line, const json& object) {
    JsonFields fields(object);
    if (auto rec = BuildRecording(fields, source, line, result.issues)) {
      result.records.push_back(std::move(*rec));
      lines.push_back(line);
    }
  });
  DropDuplicateIds(result, lines);
  return result;
}

json RecordingToJson(const Recording& r) {
  json j;
  j["id"] = r.id;
  j["source"] = std::string(SourceName(r.source));
  if (r.species_common) j["speciesCommon"] = *r.species_common;
  if (r.species_scientific) j["speciesScientific"] = *r.species_scientific;
  if (r.notes) j["notes"] = *r.notes;
  if (r.call_type) j["callType"] = *r.call_type;
  if (r.behavior) j["behavior"] = *r.behavior;
  j["backgroundSpecies"] = r.background_species;
  if (r.num_animals) j["numAnimals"] = *r.num_animals;
  if (r.recorded_date) j["recordedDate"] = FormatDate(*r.recorded_date);
  if (r.recorded_time) j["recordedTime"] = FormatTime(*r.recorded_time);
  if (r.location) j["location"] = *r.location;
  j["audioPath"] = r.audio_path;
  j["license"] = r.license;
  return j;
}

std::optional<std::string> OptString(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

Recording RecordingFromJson(const json& j) {
  Recording r;
  try {
    r.id = j.at("id").get<std::string>();
    r.source = ParseSource(j.at("source").get<std::string>());
    r.species_common = OptString(j, "speciesCommon");
    r.species_scientific = OptString(j, "speciesScientific");
    r.notes = OptString(j, "notes");
    r.call_type = OptString(j, "callType");
    r.behavior = OptString(j, "behavior");
    if (j.contains("backgroundSpecies")) {
      r.background_species = j.at("backgroundSpecies").get<std::vector<std::string>>();
    }
    if (j.contains("numAnimals") && !j.at("numAnimals").is_null()) {
      r.num_animals = j.at("numAnimals").get<int>();
    }
    if (auto d = OptString(j, "recordedDate")) {
      r.recorded_date = ParseDate(*d);
      if (!r.recorded_date) throw Error(ErrorCode::kMalformedManifest, "bad date " + *d);
    }
    if (auto t = OptString(j, "recordedTime")) {
      r.recorded_time = ParseTime(*t);
      if (!r.recorded_time) throw Error(ErrorCode::kMalformedManifest, "bad time " + *t);
    }
    r.location = OptString(j, "location");
    r.audio_path = j.at("audioPath").get<std::string>();
    r.license = j.value("license", "");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest, e.what());
  }
  return r;
}

}  // namespace

ParseResult ParseManifestText(std::string_view text, Source source) {
  if (source == Source::kSynthetic) {
    // Synthetic corpora are written directly in the normalized format.
    ParseResult result;
    std::vector<std::size_t> lines;
    ForEachJsonLine(text, [&](std::size_t line, const json& object) {
      Recording r = RecordingFromJson(object);
      if (!IsContainedRelativePath(r.audio_path)) {
        result.issues.push_back({line, ManifestIssue::Severity::kError, r.id,
                                 "audio path escapes the corpus root"});
        return;
      }
      result.records.push_back(std::move(r));
      lines.push_back(line);
    });
    DropDuplicateIds(result, lines);
    return result;
  }
  return SchemaFor(source).jsonl ? ParseJsonlManifest(text, source)
                                 : ParseCsvManifest(text, source);
}

ParseResult ParseManifest(const std::filesystem::path& path, Source source) {
  return ParseManifestText(ReadFile(path), source);
}

std::string RecordingToJsonLine(const Recording& record) {
  return RecordingToJson(record).dump();
}

Recording RecordingFromJsonLine(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedManifest, e.what());
  }
  return RecordingFromJson(j);
}

void WriteNormalizedManifest(const std::filesystem::path& path,
                             const std::vector<Recording>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& r : records) out << RecordingToJsonLine(r) << '\n';
}

std::vector<Recording> ReadNormalizedManifest(const std::filesystem::path& path) {
  return ParseManifestText(ReadFile(path), Source::kSynthetic).records;
}

void WriteIssueReport(const std::filesystem::path& path,
                      const std::vector<ManifestIssue>& issues) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& issue : issues) {
    json j{{"line", issue.line},
           {"severity", issue.severity == ManifestIssue::Severity::kError ? "error" : "warning"},
           {"id", issue.record_id},
           {"reason", issue.reason}};
    out << j.dump() << '\n';
  }
}

namespace {
std::string Lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}
}  // namespace

void NameTable::Add(std::string scientific, std::string common) {
  to_scientific_.insert_or_assign(Lower(common), scientific);
  to_common_.insert_or_assign(Lower(scientific), std::move(common));
}

const std::string* NameTable::CommonFor(std::string_view scientific) const {
  const auto it = to_common_.find(Lower(scientific));
  return it == to_common_.end() ? nullptr : &it->second;
}

const std::string* NameTable::ScientificFor(std::string_view common) const {
  const auto it = to_scientific_.find(Lower(common));
  return it == to_scientific_.end() ? nullptr : &it->second;
}

NameTable NameTable::FromCsv(const std::filesystem::path& path) {
  const auto rows = internal::ParseCsv(ReadFile(path));
  NameTable table;
  if (rows.empty()) return table;
  const auto& header = rows[0].fields;
  const auto sci = std::find(header.begin(), header.end(), "scientific_name");
  const auto com = std::find(header.begin(), header.end(), "common_name");
  if (sci == header.end() || com == header.end()) {
    throw Error(ErrorCode::kMalformedManifest,
                "name table needs scientific_name and common_name columns");
  }
  const auto si = static_cast<std::size_t>(sci - header.begin());
  const auto ci = static_cast<std::size_t>(com - header.begin());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].fields.size() != header.size()) {
      throw Error(ErrorCode::kMalformedManifest,
                  "name table line " + std::to_string(rows[r].line) + " has wrong field count");
    }
    auto s = NonEmpty(rows[r].fields[si]);
    auto c = NonEmpty(rows[r].fields[ci]);
    if (s && c) table.Add(*s, *c);
  }
  return table;
}

std::vector<Recording> MapSpeciesNames(std::vector<Recording> records,
                                       const NameTable& table,
                                       NameMappingReport* report) {
  NameMappingReport local;
  for (auto& r : records) {
    if (r.species_common && r.species_scientific) continue;
    if (r.species_scientific) {
      if (const auto* common = table.CommonFor(*r.species_scientific)) {
        r.species_common = *common;
        ++local.filled_common;
      } else {
        ++local.unmapped;
        local.unmapped_names.push_back(*r.species_scientific);
      }
    } else if (r.species_common) {
      if (const auto* scientific = table.ScientificFor(*r.species_common)) {
        r.species_scientific = *scientific;
        ++local.filled_scientific;
      } else {
        ++local.unmapped;
        local.unmapped_names.push_back(*r.species_common);
      }
    }
  }
  if (report) *report = std::move(local);
  return records;
}

CorpusSplit BuildSpeciesSplit(const std::vector<Recording>& records,
                              const SplitOptions& options) {
  if (records.empty()) throw Error(ErrorCode::kEmptyCorpus, "no recordings to split");
  if (options.test_fraction < 0.0 || options.test_fraction > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "test fraction must lie in [0, 1]");
  }

  std::map<std::string, std::vector<std::size_t>> by_species;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_species[records[i].SpeciesKey()].push_back(i);
  }

  // Eligible records in a canonical order so the draw depends only on content.
  std::vector<std::size_t> eligible;
  for (const auto& [species, members] : by_species) {
    if (species.empty() || members.size() < options.min_count) continue;
    eligible.insert(eligible.end(), members.begin(), members.end());
  }
  std::sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
    return records[a].id < records[b].id;
  });

  const auto target = std::min<std::size_t>(
      eligible.size(),
      static_cast<std::size_t>(std::llround(options.test_fraction * eligible.size())));
  std::mt19937_64 rng(options.seed);
  internal::Shuffle(eligible, rng);
  eligible.resize(target);
  std::unordered_set<std::size_t> candidates(eligible.begin(), eligible.end());

  // Absent fields become the "unknown" sentinel, which collides with itself.
  using Triple = std::tuple<std::string, std::string, std::string, std::string>;
  auto triple = [&](const Recording& r) {
    return Triple{r.SpeciesKey(),
                  r.recorded_date ? FormatDate(*r.recorded_date) : "unknown",
                  r.recorded_time ? FormatTime(*r.recorded_time) : "unknown",
                  r.location.value_or("unknown")};
  };
  std::set<Triple> train_triples;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!candidates.contains(i)) train_triples.insert(triple(records[i]));
  }

  // Candidates sharing a triple with any non-candidate are all rejected
  // together, so rejecting one never exposes another.
  CorpusSplit split;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (candidates.contains(i) && !train_triples.contains(triple(records[i]))) {
      split.test_ids.insert(records[i].id);
    } else {
      split.train_ids.insert(records[i].id);
    }
  }
  return split;
}

void WriteSplit(const std::filesystem::path& path, const CorpusSplit& split,
                const SplitOptions& options) {
  json j{{"seed", options.seed},
         {"minCount", options.min_count},
         {"testFraction", options.test_fraction},
         {"train", split.train_ids},
         {"test", split.test_ids}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

CorpusSplit ReadSplit(const std::filesystem::path& path) {
  try {
    const json j = json::parse(ReadFile(path));
    CorpusSplit split;
    split.train_ids = j.at("train").get<std::set<std::string>>();
    split.test_ids = j.at("test").get<std::set<std::string>>();
    return split;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest, "split file: " + std::string(e.what()));
  }
}

}  // namespace bioclap
