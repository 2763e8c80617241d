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

#include <gtest/gtest.h>

#include "bioclap/error.h"
#include "bioclap/recording.h"
#include "csv.h"

namespace bioclap {
namespace {

using std::chrono::day;
using std::chrono::month;
using std::chrono::year;

TEST(SourceTest, NamesRoundTrip) {
  for (Source s : {Source::kINaturalist, Source::kXenoCanto, Source::kWatkins, Source::kAsa,
                   Source::kAudioCaps, Source::kSynthetic}) {
    EXPECT_EQ(ParseSource(SourceName(s)), s);
  }
}

TEST(SourceTest, UnknownSourceThrows) {
  try {
    ParseSource("macaulay");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownSource);
  }
}

TEST(DateTest, ParsesIsoDateAndIgnoresSuffix) {
  const auto d = ParseDate("2021-05-07");
  ASSERT_TRUE(d);
  EXPECT_EQ(*d, year(2021) / month(5) / day(7));
  EXPECT_EQ(ParseDate("2021-05-07T06:30:00Z"), d);
  EXPECT_EQ(ParseDate("2021-05-07 06:30"), d);
  EXPECT_EQ(FormatDate(*d), "2021-05-07");
}

TEST(DateTest, RejectsInvalid) {
  EXPECT_FALSE(ParseDate(""));
  EXPECT_FALSE(ParseDate("2021-13-01"));
  EXPECT_FALSE(ParseDate("2021-02-30"));
  EXPECT_FALSE(ParseDate("05/07/2021"));
}

TEST(TimeTest, ParsesHoursMinutesSeconds) {
  EXPECT_EQ(ParseTime("06:30")->seconds, 6 * 3600 + 30 * 60);
  EXPECT_EQ(ParseTime("23:59:59")->seconds, 86399);
  EXPECT_FALSE(ParseTime("24:00"));
  EXPECT_FALSE(ParseTime("6h30"));
  EXPECT_EQ(FormatTime(*ParseTime("07:05")), "07:05:00");
}

TEST(PathTest, ContainedRelativePaths) {
  EXPECT_TRUE(IsContainedRelativePath("audio/a.wav"));
  EXPECT_TRUE(IsContainedRelativePath("a/../b.wav"));
  EXPECT_FALSE(IsContainedRelativePath("/etc/passwd"));
  EXPECT_FALSE(IsContainedRelativePath("../outside.wav"));
  EXPECT_FALSE(IsContainedRelativePath("a/../../b.wav"));
  EXPECT_FALSE(IsContainedRelativePath(""));
}

TEST(RecordingTest, SpeciesKeyPrefersScientific) {
  Recording r;
  r.species_common = "Wood Thrush";
  EXPECT_EQ(r.SpeciesKey(), "Wood Thrush");
  r.species_scientific = "Hylocichla mustelina";
  EXPECT_EQ(r.SpeciesKey(), "Hylocichla mustelina");
}

TEST(CsvTest, QuotedFieldsAndEmbeddedNewlines) {
  const auto rows = internal::ParseCsv("a,b,c\n1,\"x, y\",\"say \"\"hi\"\"\"\n2,\"multi\nline\",z\n");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].fields[1], "x, y");
  EXPECT_EQ(rows[1].fields[2], "say \"hi\"");
  EXPECT_EQ(rows[2].fields[1], "multi\nline");
  EXPECT_EQ(rows[2].line, 3u);
}

TEST(CsvTest, CrLfAndTrailingEmptyField) {
  const auto rows = internal::ParseCsv("a,b\r\n1,\r\n");
  ASSERT_EQ(rows.size(), 2u);
  ASSERT_EQ(rows[1].fields.size(), 2u);
  EXPECT_EQ(rows[1].fields[1], "");
}

TEST(CsvTest, UnterminatedQuoteIsMalformed) {
  try {
    internal::ParseCsv("a,b\n1,\"open\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedManifest);
  }
}

TEST(CsvTest, EscapeRoundTrips) {
  for (std::string s : {"plain", "with,comma", "with \"quote\"", "new\nline"}) {
    const auto rows = internal::ParseCsv(internal::CsvEscape(s) + "\n");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].fields[0], s);
  }
}

}  // namespace
}  // namespace bioclap
