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

#include <cmath>
#include <random>

#include "bioclap/archive_ingest.h"
#include "bioclap/error.h"
#include "test_support.h"

namespace bioclap {
namespace {

using std::chrono::day;
using std::chrono::month;
using std::chrono::year;

constexpr char kInatHeader[] =
    "id,scientific_name,common_name,description,observed_on,time_observed,place_guess,"
    "audio_path,license\n";

template <typename Fn>
ErrorCode CodeOf(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIo;
}

TEST(ParseManifestTest, XenoCantoRowMapsFields) {
  const auto result = ParseManifestText(
      R"({"id":"XC1","species":"Hylocichla mustelina","en":"Wood Thrush","type":"song",)"
      R"("also":["American Robin","Veery"],"animals":2,"date":"2019-06-01","time":"05:40",)"
      R"("loc":"Ithaca","file":"xc/XC1.wav","lic":"CC-BY"})",
      Source::kXenoCanto);
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_TRUE(result.issues.empty());
  const Recording& r = result.records[0];
  EXPECT_EQ(r.species_scientific, "Hylocichla mustelina");
  EXPECT_EQ(r.species_common, "Wood Thrush");
  EXPECT_EQ(r.call_type, "song");
  EXPECT_EQ(r.background_species, (std::vector<std::string>{"American Robin", "Veery"}));
  EXPECT_EQ(r.num_animals, 2);
  EXPECT_EQ(r.recorded_date, year(2019) / month(6) / day(1));
  EXPECT_EQ(r.recorded_time->seconds, 5 * 3600 + 40 * 60);
  EXPECT_EQ(r.location, "Ithaca");
  EXPECT_EQ(r.audio_path, "xc/XC1.wav");
  EXPECT_EQ(r.license, "CC-BY");
  EXPECT_EQ(r.source, Source::kXenoCanto);
}

TEST(ParseManifestTest, XenoCantoSemicolonBackgroundList) {
  const auto result = ParseManifestText(
      R"({"id":"XC2","species":"Turdus migratorius","also":"Veery; Ovenbird","file":"a.wav"})",
      Source::kXenoCanto);
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_EQ(result.records[0].background_species,
            (std::vector<std::string>{"Veery", "Ovenbird"}));
}

TEST(ParseManifestTest, EmptyManifestGivesEmptyList) {
  for (Source s : {Source::kINaturalist, Source::kXenoCanto, Source::kWatkins, Source::kAsa,
                   Source::kAudioCaps, Source::kSynthetic}) {
    const auto result = ParseManifestText("", s);
    EXPECT_TRUE(result.records.empty());
    EXPECT_TRUE(result.issues.empty());
  }
}

TEST(ParseManifestTest, InatRowMissingBothSpeciesIsReportedAndExcluded) {
  const std::string text = std::string(kInatHeader) +
                           "1,Hylocichla mustelina,Wood Thrush,singing,2020-05-01,06:00,"
                           "Somewhere,a/1.wav,CC0\n"
                           "2,,,unknown bird,2020-05-02,,,a/2.wav,CC0\n";
  const auto result = ParseManifestText(text, Source::kINaturalist);
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_EQ(result.records[0].id, "1");
  EXPECT_EQ(result.records[0].notes, "singing");
  ASSERT_EQ(result.issues.size(), 1u);
  EXPECT_EQ(result.issues[0].record_id, "2");
  EXPECT_EQ(result.issues[0].line, 3u);
  EXPECT_EQ(result.issues[0].severity, ManifestIssue::Severity::kError);
}

TEST(ParseManifestTest, HeaderWithoutRequiredColumnIsMalformed) {
  EXPECT_EQ(CodeOf([] { ParseManifestText("id,common_name\n1,Wood Thrush\n", Source::kINaturalist); }),
            ErrorCode::kMalformedManifest);
}

TEST(ParseManifestTest, RowCountMismatchIsMalformed) {
  const std::string text = std::string(kInatHeader) + "1,Hylocichla mustelina\n";
  EXPECT_EQ(CodeOf([&] { ParseManifestText(text, Source::kINaturalist); }),
            ErrorCode::kMalformedManifest);
}

TEST(ParseManifestTest, BadJsonLineIsMalformed) {
  EXPECT_EQ(CodeOf([] { ParseManifestText("{\"id\": \"x\"\n", Source::kXenoCanto); }),
            ErrorCode::kMalformedManifest);
}

TEST(ParseManifestTest, RowErrorsAndWarnings) {
  const std::string text = std::string(kInatHeader) +
                           "1,Hylocichla mustelina,,,not-a-date,25:00,,a/1.wav,\n"
                           "1,Hylocichla mustelina,,,,,,a/dup.wav,\n"
                           "3,Hylocichla mustelina,,,,,,../escape.wav,\n"
                           "4,Hylocichla mustelina,,,,,,,\n"
                           ",Hylocichla mustelina,,,,,,a/5.wav,\n";
  const auto result = ParseManifestText(text, Source::kINaturalist);
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_FALSE(result.records[0].recorded_date);
  EXPECT_FALSE(result.records[0].recorded_time);
  std::size_t errors = 0, warnings = 0;
  for (const auto& i : result.issues) {
    (i.severity == ManifestIssue::Severity::kError ? errors : warnings) += 1;
  }
  EXPECT_EQ(errors, 4u);  // duplicate, escape, missing path, missing id
  EXPECT_EQ(warnings, 2u);
}

TEST(ParseManifestTest, WatkinsAsaAndAudioCaps) {
  const auto watkins = ParseManifestText(
      "id,species_common,species_scientific,signal_type,num_animals,behavior,notes,date,"
      "location,audio_path,license\n"
      "W1,Sperm Whale,Physeter macrocephalus,clicks,3,foraging,Regular echolocation clicks,"
      "1985-07-12,Caribbean,w/W1.wav,research\n",
      Source::kWatkins);
  ASSERT_EQ(watkins.records.size(), 1u);
  EXPECT_EQ(watkins.records[0].call_type, "clicks");
  EXPECT_EQ(watkins.records[0].num_animals, 3);
  EXPECT_EQ(watkins.records[0].notes, "Regular echolocation clicks");

  const auto asa = ParseManifestText(
      "id,scientific_name,date,time,locality,audio_path,license\n"
      "A1,Parus major,2001-04-03,07:15,Berlin,asa/A1.wav,CC-BY-SA\n",
      Source::kAsa);
  ASSERT_EQ(asa.records.size(), 1u);
  EXPECT_FALSE(asa.records[0].species_common);
  EXPECT_EQ(asa.records[0].species_scientific, "Parus major");

  const auto caps = ParseManifestText(
      "audiocap_id,caption,audio_path\n91,A dog barks while cars pass,ac/91.wav\n",
      Source::kAudioCaps);
  ASSERT_EQ(caps.records.size(), 1u);
  EXPECT_EQ(caps.records[0].notes, "A dog barks while cars pass");
  EXPECT_FALSE(caps.records[0].species_common);
}

Recording FullRecord() {
  Recording r;
  r.id = "rec\"1";
  r.source = Source::kXenoCanto;
  r.species_common = "Wood Thrush";
  r.species_scientific = "Hylocichla mustelina";
  r.notes = "Flute-like song,\nrepeated";
  r.call_type = "song";
  r.behavior = "Perched";
  r.background_species = {"Veery"};
  r.num_animals = 2;
  r.recorded_date = year(2019) / month(6) / day(1);
  r.recorded_time = TimeOfDay{3600};
  r.location = "Ithaca, NY";
  r.audio_path = "xc/ü.wav";
  r.license = "CC-BY";
  return r;
}

TEST(NormalizedManifestTest, RoundTrip) {
  Recording sparse;
  sparse.id = "s";
  sparse.species_common = "Veery";
  sparse.audio_path = "s.wav";
  const std::vector<Recording> records{FullRecord(), sparse};
  testing::TempDir dir;
  WriteNormalizedManifest(dir / "records.jsonl", records);
  EXPECT_EQ(ReadNormalizedManifest(dir / "records.jsonl"), records);
  EXPECT_EQ(RecordingFromJsonLine(RecordingToJsonLine(records[0])), records[0]);
  // The normalized format is also accepted as the synthetic source.
  EXPECT_EQ(ParseManifest(dir / "records.jsonl", Source::kSynthetic).records, records);
}

TEST(IssueReportTest, WritesJsonLines) {
  testing::TempDir dir;
  WriteIssueReport(dir / "issues.jsonl",
                   {{3, ManifestIssue::Severity::kError, "2", "missing both species name fields"}});
  const std::string text = testing::ReadFile(dir / "issues.jsonl");
  EXPECT_NE(text.find("\"line\":3"), std::string::npos);
  EXPECT_NE(text.find("\"severity\":\"error\""), std::string::npos);
}

TEST(MapSpeciesNamesTest, FillsMissingFormOnly) {
  NameTable table;
  table.Add("Hylocichla mustelina", "Wood Thrush");
  Recording only_sci;
  only_sci.id = "a";
  only_sci.species_scientific = "hylocichla mustelina";
  Recording both = only_sci;
  both.id = "b";
  both.species_scientific = "Hylocichla mustelina";
  both.species_common = "Thrush (local name)";
  Recording only_common;
  only_common.id = "c";
  only_common.species_common = "Wood Thrush";
  Recording unmapped;
  unmapped.id = "d";
  unmapped.species_scientific = "Catharus fuscescens";

  NameMappingReport report;
  const auto out = MapSpeciesNames({only_sci, both, only_common, unmapped}, table, &report);
  EXPECT_EQ(out[0].species_common, "Wood Thrush");
  EXPECT_EQ(out[1], both);
  EXPECT_EQ(out[2].species_scientific, "Hylocichla mustelina");
  EXPECT_EQ(out[3], unmapped);
  EXPECT_EQ(report.filled_common, 1u);
  EXPECT_EQ(report.filled_scientific, 1u);
  EXPECT_EQ(report.unmapped, 1u);
  EXPECT_EQ(report.unmapped_names, std::vector<std::string>{"Catharus fuscescens"});
}

TEST(MapSpeciesNamesTest, LoadsTableFromCsv) {
  testing::TempDir dir;
  testing::WriteFile(dir / "names.csv",
                     "scientific_name,common_name\nHylocichla mustelina,Wood Thrush\n");
  const NameTable table = NameTable::FromCsv(dir / "names.csv");
  ASSERT_NE(table.CommonFor("Hylocichla mustelina"), nullptr);
  EXPECT_EQ(*table.CommonFor("Hylocichla mustelina"), "Wood Thrush");
  EXPECT_EQ(*table.ScientificFor("wood thrush"), "Hylocichla mustelina");
  EXPECT_EQ(table.CommonFor("Unknown"), nullptr);
}

Recording Rec(std::string id, std::string species, int day_of_month, std::string loc = "site") {
  Recording r;
  r.id = std::move(id);
  r.species_scientific = std::move(species);
  r.recorded_date = year(2020) / month(1) / day(static_cast<unsigned>(day_of_month % 28 + 1));
  r.recorded_time = TimeOfDay{day_of_month * 60};
  r.location = std::move(loc);
  r.audio_path = r.id + ".wav";
  return r;
}

TEST(SpeciesSplitTest, SpeciesBelowThresholdContributesNothing) {
  std::vector<Recording> records;
  for (int i = 0; i < 69; ++i) records.push_back(Rec("few" + std::to_string(i), "Rare", i));
  for (int i = 0; i < 70; ++i) records.push_back(Rec("many" + std::to_string(i), "Common", i));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CorpusSplit split = BuildSpeciesSplit(records, {70, 0.5, seed});
    EXPECT_FALSE(split.test_ids.empty());
    for (const auto& id : split.test_ids) EXPECT_EQ(id.rfind("many", 0), 0u) << id;
    EXPECT_EQ(split.test_ids.size() + split.train_ids.size(), records.size());
  }
}

TEST(SpeciesSplitTest, CollidingCandidateStaysInTrain) {
  // Two records of one species share date/time/location; every other record
  // is unique. With fraction 0.5 and enough seeds, each of the pair is sampled
  // without the other at some point and must then be rejected.
  std::vector<Recording> records;
  for (int i = 0; i < 10; ++i) records.push_back(Rec("r" + std::to_string(i), "S", i, "loc" + std::to_string(i)));
  records.push_back(Rec("twinA", "S", 99, "pond"));
  records.push_back(Rec("twinB", "S", 99, "pond"));
  int exercised = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const CorpusSplit split = BuildSpeciesSplit(records, {5, 0.5, seed});
    const bool a = split.test_ids.contains("twinA");
    const bool b = split.test_ids.contains("twinB");
    EXPECT_EQ(a, b) << "seed " << seed;  // one alone in test would collide with train
    if (!a && !b) ++exercised;
  }
  EXPECT_GT(exercised, 0);
}

TEST(SpeciesSplitTest, MissingFieldsCollideAsUnknown) {
  std::vector<Recording> records;
  for (int i = 0; i < 4; ++i) {
    Recording r;
    r.id = "u" + std::to_string(i);
    r.species_common = "Ghost";
    r.audio_path = r.id + ".wav";
    records.push_back(r);
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EXPECT_TRUE(BuildSpeciesSplit(records, {1, 0.25, seed}).test_ids.empty());
  }
}

TEST(SpeciesSplitTest, DeterministicAndDisjointWithBoundedSize) {
  std::mt19937_64 rng(7);
  std::vector<Recording> records;
  for (int i = 0; i < 600; ++i) {
    const int species = static_cast<int>(rng() % 6);
    records.push_back(Rec("x" + std::to_string(i), "sp" + std::to_string(species),
                          static_cast<int>(rng() % 40), "l" + std::to_string(rng() % 3)));
  }
  const SplitOptions options{70, 0.10, 42};
  const CorpusSplit a = BuildSpeciesSplit(records, options);
  const CorpusSplit b = BuildSpeciesSplit(records, options);
  EXPECT_EQ(a.test_ids, b.test_ids);
  EXPECT_EQ(a.train_ids, b.train_ids);

  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) ++counts[r.SpeciesKey()];
  std::size_t eligible = 0;
  for (const auto& [s, c] : counts) eligible += c >= 70 ? c : 0;
  EXPECT_LE(a.test_ids.size(), static_cast<std::size_t>(std::ceil(0.10 * eligible)));

  std::map<std::string, const Recording*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  for (const auto& t : a.test_ids) {
    EXPECT_FALSE(a.train_ids.contains(t));
    const Recording& tr = *by_id[t];
    for (const auto& r : a.train_ids) {
      const Recording& rr = *by_id[r];
      if (rr.SpeciesKey() != tr.SpeciesKey()) continue;
      EXPECT_FALSE(rr.recorded_date == tr.recorded_date && rr.recorded_time == tr.recorded_time &&
                   rr.location == tr.location)
          << t << " collides with " << r;
    }
  }
}

TEST(SpeciesSplitTest, EmptyCorpusThrows) {
  EXPECT_EQ(CodeOf([] { BuildSpeciesSplit({}, {}); }), ErrorCode::kEmptyCorpus);
}

TEST(SpeciesSplitTest, FileRoundTrip) {
  CorpusSplit split;
  split.train_ids = {"a", "b"};
  split.test_ids = {"c"};
  testing::TempDir dir;
  WriteSplit(dir / "split.json", split, {70, 0.1, 3});
  const CorpusSplit back = ReadSplit(dir / "split.json");
  EXPECT_EQ(back.train_ids, split.train_ids);
  EXPECT_EQ(back.test_ids, split.test_ids);
}

}  // namespace
}  // namespace bioclap
