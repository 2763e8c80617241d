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

#include "bioclap/recording.h"

#include <charconv>
#include <cstdio>
#include <filesystem>

#include "bioclap/error.h"

namespace bioclap {
namespace {

bool ParseInt(std::string_view text, int* out) {
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), *out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

std::string_view SourceName(Source source) {
  switch (source) {
    case Source::kINaturalist: return "inaturalist";
    case Source::kXenoCanto: return "xenocanto";
    case Source::kWatkins: return "watkins";
    case Source::kAsa: return "asa";
    case Source::kAudioCaps: return "audiocaps";
    case Source::kSynthetic: return "synthetic";
  }
  return "unknown";
}

Source ParseSource(std::string_view name) {
  for (Source s : {Source::kINaturalist, Source::kXenoCanto, Source::kWatkins,
                   Source::kAsa, Source::kAudioCaps, Source::kSynthetic}) {
    if (SourceName(s) == name) return s;
  }
  throw Error(ErrorCode::kUnknownSource, std::string(name));
}

std::optional<std::chrono::year_month_day> ParseDate(std::string_view text) {
  if (const auto cut = text.find_first_of("T "); cut != std::string_view::npos) {
    text = text.substr(0, cut);
  }
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0, m = 0, d = 0;
  if (!ParseInt(text.substr(0, 4), &y) || !ParseInt(text.substr(5, 2), &m) ||
      !ParseInt(text.substr(8, 2), &d)) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year(y),
                                        std::chrono::month(static_cast<unsigned>(m)),
                                        std::chrono::day(static_cast<unsigned>(d))};
  if (!ymd.ok()) return std::nullopt;
  return ymd;
}

std::optional<TimeOfDay> ParseTime(std::string_view text) {
  int h = 0, m = 0, s = 0;
  if (text.size() == 5 && text[2] == ':') {
    if (!ParseInt(text.substr(0, 2), &h) || !ParseInt(text.substr(3, 2), &m)) {
      return std::nullopt;
    }
  } else if (text.size() == 8 && text[2] == ':' && text[5] == ':') {
    if (!ParseInt(text.substr(0, 2), &h) || !ParseInt(text.substr(3, 2), &m) ||
        !ParseInt(text.substr(6, 2), &s)) {
      return std::nullopt;
    }
  } else {
    return std::nullopt;
  }
  if (h < 0 || h > 23 || m < 0 || m > 59 || s < 0 || s > 59) return std::nullopt;
  return TimeOfDay{h * 3600 + m * 60 + s};
}

std::string FormatDate(const std::chrono::year_month_day& date) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

std::string FormatTime(const TimeOfDay& time) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d:%02d:%02d", time.seconds / 3600,
                (time.seconds / 60) % 60, time.seconds % 60);
  return buf;
}

std::string Recording::SpeciesKey() const {
  if (species_scientific) return *species_scientific;
  if (species_common) return *species_common;
  return {};
}

bool IsContainedRelativePath(std::string_view path) {
  if (path.empty()) return false;
  const std::filesystem::path p(path);
  if (p.is_absolute() || p.has_root_name() || p.has_root_directory()) return false;
  int depth = 0;
  for (const auto& part : p.lexically_normal()) {
    if (part == "..") {
      if (--depth < 0) return false;
    } else if (part != "." && !part.empty()) {
      ++depth;
    }
  }
  return depth > 0;
}

}  // namespace bioclap
