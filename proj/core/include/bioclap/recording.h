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

#ifndef BIOCLAP_RECORDING_H_
#define BIOCLAP_RECORDING_H_

#include <chrono>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace bioclap {

enum class Source { kINaturalist, kXenoCanto, kWatkins, kAsa, kAudioCaps, kSynthetic };

std::string_view SourceName(Source source);
// Throws Error{kUnknownSource}.
Source ParseSource(std::string_view name);

// Seconds since midnight, [0, 86400).
struct TimeOfDay {
  int seconds = 0;
  friend bool operator==(const TimeOfDay&, const TimeOfDay&) = default;
  friend auto operator<=>(const TimeOfDay&, const TimeOfDay&) = default;
};

// Accepts YYYY-MM-DD (a trailing "T..." or " ..." suffix is ignored).
std::optional<std::chrono::year_month_day> ParseDate(std::string_view text);
// Accepts HH:MM or HH:MM:SS.
std::optional<TimeOfDay> ParseTime(std::string_view text);
std::string FormatDate(const std::chrono::year_month_day& date);
std::string FormatTime(const TimeOfDay& time);

// Normalized archive metadata for one recording.
struct Recording {
  std::string id;
  Source source = Source::kSynthetic;
  std::optional<std::string> species_common;
  std::optional<std::string> species_scientific;
  std::optional<std::string> notes;
  std::optional<std::string> call_type;
  std::optional<std::string> behavior;
  std::vector<std::string> background_species;
  std::optional<int> num_animals;
  std::optional<std::chrono::year_month_day> recorded_date;
  std::optional<TimeOfDay> recorded_time;
  std::optional<std::string> location;
  std::string audio_path;
  std::string license;

  friend bool operator==(const Recording&, const Recording&) = default;

  // Scientific name when present, else the common name, else empty.
  std::string SpeciesKey() const;
};

struct CorpusSplit {
  std::set<std::string> train_ids;
  std::set<std::string> test_ids;
};

// True when `path` is relative and cannot escape its root via "..".
bool IsContainedRelativePath(std::string_view path);

}  // namespace bioclap

#endif  // BIOCLAP_RECORDING_H_
