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

#include <atomic>
#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include "bioclap/archive_ingest.h"
#include "bioclap/caption_clients.h"
#include "bioclap/captioner.h"
#include "bioclap/error.h"
#include "json.hpp"
#include "captioner_fixtures.h"
#include "test_support.h"

namespace bioclap {
namespace {

Recording Inat(std::string common, std::string scientific, std::optional<std::string> notes) {
  Recording r;
  r.id = "inat-1";
  r.source = Source::kINaturalist;
  if (!common.empty()) r.species_common = std::move(common);
  if (!scientific.empty()) r.species_scientific = std::move(scientific);
  r.notes = std::move(notes);
  r.audio_path = "a.wav";
  return r;
}

TEST(TemplateCaptionTest, ArticleRule) {
  EXPECT_EQ(TemplateCaption(Inat("Wood Thrush", "", {}), NameForm::kCommon).text,
            "The sound of a Wood Thrush");
  EXPECT_EQ(TemplateCaption(Inat("Eastern Whipbird", "", {}), NameForm::kCommon).text,
            "The sound of an Eastern Whipbird");
  EXPECT_EQ(IndefiniteArticle("owl"), "an");
  EXPECT_EQ(IndefiniteArticle("Humpback Whale"), "a");
  EXPECT_EQ(IndefiniteArticle("Ibis"), "an");
  const Caption c = TemplateCaption(Inat("Wood Thrush", "", {}), NameForm::kCommon);
  EXPECT_EQ(c.origin, CaptionOrigin::kTemplate);
  EXPECT_EQ(c.name_form, NameForm::kCommon);
  EXPECT_EQ(c.recording_id, "inat-1");
}

TEST(TemplateCaptionTest, MissingNameThrows) {
  try {
    TemplateCaption(Inat("Wood Thrush", "", {}), NameForm::kScientific);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingName);
  }
}

TEST(MetadataTemplateCaptionTest, GoldenCorpus) {
  std::ifstream in(std::string(BIOCLAP_TEST_DATA_DIR) + "/metadata_captions.jsonl");
  ASSERT_TRUE(in);
  std::string line;
  int cases = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const Recording r = RecordingFromJsonLine(j["record"].dump());
    for (const auto& [key, form] : {std::pair{"common", NameForm::kCommon},
                                    std::pair{"scientific", NameForm::kScientific}}) {
      if (!j.contains(key)) continue;
      EXPECT_EQ(MetadataTemplateCaption(r, form).text, j[key].get<std::string>()) << r.id;
      ++cases;
    }
  }
  EXPECT_GE(cases, 10);
}

TEST(MetadataTemplateCaptionTest, DegeneratesToTemplate) {
  Recording r = Inat("Wood Thrush", "Hylocichla mustelina", {});
  r.source = Source::kXenoCanto;
  for (NameForm f : {NameForm::kCommon, NameForm::kScientific}) {
    EXPECT_EQ(MetadataTemplateCaption(r, f).text, TemplateCaption(r, f).text);
  }
  r.call_type = "song";
  EXPECT_EQ(MetadataTemplateCaption(r, NameForm::kCommon).origin,
            CaptionOrigin::kMetadataTemplate);
}

TEST(SanitizeTest, CollapsesWhitespaceAndQuotes) {
  EXPECT_EQ(SanitizeCaptionText("  \"A  Wood Thrush\n sings\"  "), "A Wood Thrush sings");
  EXPECT_EQ(SanitizeCaptionText(" \t\n"), "");
}

TEST(LlmCaptionTest, MockOutcomes) {
  const Recording r = Inat("Wood Thrush", "", "sang at dusk");
  ScriptedCaptionClient echo({ClientReply::Text("A Wood Thrush sings at dusk")});
  const auto ok = LlmCaption(r, PromptKind::kINaturalistNotes, echo);
  ASSERT_TRUE(std::holds_alternative<Caption>(ok));
  EXPECT_EQ(std::get<Caption>(ok).text, "A Wood Thrush sings at dusk");
  EXPECT_EQ(std::get<Caption>(ok).origin, CaptionOrigin::kLlm);
  ASSERT_EQ(echo.requests().size(), 1u);
  EXPECT_EQ(echo.requests()[0].species_name, "Wood Thrush");
  EXPECT_EQ(echo.requests()[0].notes, "sang at dusk");
  EXPECT_NE(echo.requests()[0].prompt.find("sang at dusk"), std::string::npos);

  ScriptedCaptionClient timeout({ClientReply::Failure("timeout")});
  const auto failed = LlmCaption(r, PromptKind::kINaturalistNotes, timeout);
  ASSERT_TRUE(std::holds_alternative<CaptionIssue>(failed));
  EXPECT_EQ(std::get<CaptionIssue>(failed).kind, IssueKind::kClientError);

  ScriptedCaptionClient empty({ClientReply::Text("   ")});
  const auto blank = LlmCaption(r, PromptKind::kINaturalistNotes, empty);
  ASSERT_TRUE(std::holds_alternative<CaptionIssue>(blank));
  EXPECT_EQ(std::get<CaptionIssue>(blank).kind, IssueKind::kEmptyOutput);
}

Caption Text(std::string t) { return Caption{"r", std::move(t), NameForm::kCommon, CaptionOrigin::kLlm}; }

TEST(LocationLeakTest, DetectorExamples) {
  const RuleBasedLocationDetector d;
  EXPECT_TRUE(DetectLocationLeak(Text("A Song Sparrow singing in Golden Gate Park"), d));
  EXPECT_FALSE(DetectLocationLeak(Text("A Song Sparrow singing at dawn"), d));
  EXPECT_TRUE(DetectLocationLeak(Text("A Song Sparrow near 37.77N, 122.41W"), d));
  EXPECT_TRUE(DetectLocationLeak(Text("Calls recorded at -33.865, 151.209 at night"), d));
  EXPECT_TRUE(DetectLocationLeak(Text("A frog chorus at Jamaica Bay Wildlife Refuge"), d));
  EXPECT_TRUE(DetectLocationLeak(Text("A loon calls across Lake Winnipesaukee"), d));
  EXPECT_TRUE(DetectLocationLeak(Text("Howler monkeys roaring in Costa Rica"), d));
  EXPECT_FALSE(DetectLocationLeak(Text("The Park is quiet as a Wren sings"), d));
  EXPECT_FALSE(DetectLocationLeak(Text("A whale clicks 3 times, 2 seconds apart"), d));
  const auto issue = DetectLocationLeak(Text("A Song Sparrow singing in Golden Gate Park"), d);
  EXPECT_EQ(issue->kind, IssueKind::kLocationLeak);
}

TEST(LocationLeakTest, SpeciesNamesAreExempt) {
  const RuleBasedLocationDetector d;
  const std::vector<std::string> exempt{"Cape May Warbler", "Carolina Wren"};
  EXPECT_FALSE(DetectLocationLeak(Text("The sound of a Cape May Warbler"), d, exempt));
  EXPECT_FALSE(DetectLocationLeak(Text("A Carolina Wren sings"), d, exempt));
  EXPECT_TRUE(DetectLocationLeak(Text("A Cape May Warbler sings at Cape May"), d, exempt));
}

TEST(LocationLeakTest, LoadsGazetteer) {
  RuleBasedLocationDetector d;
  EXPECT_FALSE(DetectLocationLeak(Text("owls heard around sapsucker woods"), d));
  d.LoadGazetteer(std::string(BIOCLAP_TEST_DATA_DIR) + "/gazetteer.txt");
  EXPECT_TRUE(DetectLocationLeak(Text("owls heard around sapsucker woods"), d));
}

TEST(MissingSpeciesTest, Examples) {
  const Recording r = Inat("Wood Thrush", "Hylocichla mustelina", {});
  EXPECT_TRUE(DetectMissingSpecies(Text("A bird sings twice"), r));
  EXPECT_FALSE(DetectMissingSpecies(Text("The sound of a wood thrush"), r));
  Caption sci{"r", "Hylocichla mustelina song", NameForm::kScientific, CaptionOrigin::kLlm};
  EXPECT_FALSE(DetectMissingSpecies(sci, r));
  EXPECT_EQ(DetectMissingSpecies(Text("A bird sings twice"), r)->kind, IssueKind::kMissingSpecies);
}

TEST(CaptionPipelineTest, NoNotesGivesTwoTemplatesWithoutCalls) {
  const Recording r = Inat("Wood Thrush", "Hylocichla mustelina", std::nullopt);
  ScriptedCaptionClient client({ClientReply::Text("unused")});
  const auto result = CaptionPipeline(r, &client, RuleBasedLocationDetector());
  EXPECT_EQ(client.calls(), 0);
  EXPECT_EQ(result.client_calls, 0);
  ASSERT_EQ(result.captions.size(), 2u);
  EXPECT_EQ(result.captions[0].text, "The sound of a Wood Thrush");
  EXPECT_EQ(result.captions[0].name_form, NameForm::kCommon);
  EXPECT_EQ(result.captions[1].text, "The sound of a Hylocichla mustelina");
  EXPECT_EQ(result.captions[1].name_form, NameForm::kScientific);
  EXPECT_TRUE(result.issues.empty());
}

TEST(CaptionPipelineTest, LocationLeakOnceThenClean) {
  const Recording r = Inat("Song Sparrow", "Melospiza melodia", "heard in Golden Gate Park");
  ScriptedCaptionClient client({ClientReply::Text("A Song Sparrow singing in Golden Gate Park"),
                                ClientReply::Text("A Song Sparrow singing a bright trill")});
  const auto result = CaptionPipeline(r, &client, RuleBasedLocationDetector());
  EXPECT_EQ(client.calls(), 2);
  ASSERT_EQ(result.issues.size(), 1u);
  EXPECT_EQ(result.issues[0].kind, IssueKind::kLocationLeak);
  ASSERT_EQ(result.captions.size(), 2u);
  EXPECT_EQ(result.captions[0].text, "A Song Sparrow singing a bright trill");
  EXPECT_EQ(result.captions[0].origin, CaptionOrigin::kLlmRetry);
  EXPECT_EQ(result.captions[1].text, "A Melospiza melodia singing a bright trill");
  EXPECT_EQ(result.captions[1].name_form, NameForm::kScientific);

  const auto requests = client.requests();
  EXPECT_EQ(requests[0].prompt_kind, PromptKind::kINaturalistNotes);
  EXPECT_EQ(requests[1].prompt_kind, PromptKind::kRetryLocationLeak);
  EXPECT_EQ(requests[1].metadata.at("issue"), "location_leak");
  EXPECT_EQ(requests[1].metadata.at("previousCaption"),
            "A Song Sparrow singing in Golden Gate Park");
}

TEST(CaptionPipelineTest, AlwaysFailingClientFallsBack) {
  const Recording r = Inat("Wood Thrush", "Hylocichla mustelina", "notes");
  ScriptedCaptionClient client({ClientReply::Failure("503")});
  const int max_retries = 2;
  const auto result = CaptionPipeline(r, &client, RuleBasedLocationDetector(), max_retries);
  EXPECT_EQ(client.calls(), 1 + max_retries);
  ASSERT_EQ(result.issues.size(), static_cast<std::size_t>(max_retries));
  for (const auto& i : result.issues) EXPECT_EQ(i.kind, IssueKind::kClientError);
  ASSERT_EQ(result.captions.size(), 2u);
  EXPECT_EQ(result.captions[0], TemplateCaption(r, NameForm::kCommon));
  EXPECT_EQ(result.captions[1], TemplateCaption(r, NameForm::kScientific));
  EXPECT_EQ(client.requests()[1].prompt_kind, PromptKind::kRetryClientError);
}

TEST(CaptionPipelineTest, MissingSpeciesThenFixed) {
  const Recording r = Inat("Wood Thrush", "", "notes");
  ScriptedCaptionClient client({ClientReply::Text("A bird sings"), ClientReply::Text(""),
                                ClientReply::Text("\"A Wood Thrush sings\"")});
  const auto result = CaptionPipeline(r, &client, RuleBasedLocationDetector(), 2);
  EXPECT_EQ(client.calls(), 3);
  ASSERT_EQ(result.issues.size(), 2u);
  EXPECT_EQ(result.issues[0].kind, IssueKind::kMissingSpecies);
  EXPECT_EQ(result.issues[1].kind, IssueKind::kEmptyOutput);
  ASSERT_EQ(result.captions.size(), 1u);  // no scientific name on the record
  EXPECT_EQ(result.captions[0].text, "A Wood Thrush sings");
  EXPECT_EQ(client.requests()[1].prompt_kind, PromptKind::kRetryMissingSpecies);
  EXPECT_EQ(client.requests()[2].prompt_kind, PromptKind::kRetryEmptyOutput);
}

TEST(CaptionPipelineTest, ZeroRetriesCallsOnce) {
  const Recording r = Inat("Wood Thrush", "", "notes");
  ScriptedCaptionClient client({ClientReply::Failure("down")});
  const auto result = CaptionPipeline(r, &client, RuleBasedLocationDetector(), 0);
  EXPECT_EQ(client.calls(), 1);
  EXPECT_TRUE(result.issues.empty());
  EXPECT_EQ(result.captions[0].origin, CaptionOrigin::kTemplate);
}

TEST(CaptionPipelineTest, AudioCapsKeepsDatasetCaption) {
  Recording r;
  r.id = "91";
  r.source = Source::kAudioCaps;
  r.notes = " A dog barks  while cars pass ";
  ScriptedCaptionClient client({ClientReply::Text("unused")});
  const auto result = CaptionPipeline(r, &client, RuleBasedLocationDetector());
  EXPECT_EQ(client.calls(), 0);
  ASSERT_EQ(result.captions.size(), 1u);
  EXPECT_EQ(result.captions[0].text, "A dog barks while cars pass");
}

TEST(CaptionPipelineTest, XenoCantoUsesMetadataTemplate) {
  Recording r = Inat("Wood Thrush", "Hylocichla mustelina", "rmk text");
  r.source = Source::kXenoCanto;
  r.call_type = "song";
  ScriptedCaptionClient client({ClientReply::Text("unused")});
  const auto result = CaptionPipeline(r, &client, RuleBasedLocationDetector());
  EXPECT_EQ(client.calls(), 0);
  ASSERT_EQ(result.captions.size(), 2u);
  EXPECT_EQ(result.captions[0].text, "The song of a Wood Thrush");
  EXPECT_EQ(result.captions[0].origin, CaptionOrigin::kMetadataTemplate);
}

void ExpectValidCaption(const Caption& c, const Recording& r, const LocationDetector& d) {
  const auto violation = testing::CaptionViolation(c, r, d);
  EXPECT_FALSE(violation.has_value()) << *violation << ": " << c.text;
}

TEST(CaptionPipelineProperty, RandomRecordsYieldValidCaptionsWithinCallBudget) {
  std::mt19937_64 rng(2024);
  const RuleBasedLocationDetector detector;
  for (int i = 0; i < 1000; ++i) {
    const Recording r = testing::RandomRecord(rng, i);
    const int max_retries = static_cast<int>(rng() % 4);
    const std::uint64_t client_seed = rng();
    auto run = [&] {
      std::mt19937_64 reply_rng(client_seed);
      FunctionCaptionClient client(
          [&](const CaptionRequest& req) { return testing::RandomReply(reply_rng, req); });
      auto result = CaptionPipeline(r, &client, detector, max_retries);
      EXPECT_EQ(client.calls(), result.client_calls);
      return result;
    };
    const PipelineResult result = run();
    EXPECT_LE(result.client_calls, 1 + max_retries);
    const bool llm = r.notes && (r.source == Source::kINaturalist || r.source == Source::kWatkins);
    if (!llm) EXPECT_EQ(result.client_calls, 0);
    const std::size_t forms = (r.species_common ? 1 : 0) + (r.species_scientific ? 1 : 0);
    ASSERT_EQ(result.captions.size(), forms);
    for (const auto& c : result.captions) ExpectValidCaption(c, r, detector);

    const PipelineResult again = run();
    EXPECT_EQ(again.captions, result.captions);
  }
}

TEST(CaptionCorpusTest, PreservesOrderAndBoundsInFlight) {
  std::vector<Recording> records;
  for (int i = 0; i < 12; ++i) {
    Recording r = Inat("Wood Thrush", "", "notes");
    r.id = "r" + std::to_string(i);
    records.push_back(r);
  }
  std::atomic<int> in_flight{0}, peak{0};
  FunctionCaptionClient client([&](const CaptionRequest&) {
    const int now = ++in_flight;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --in_flight;
    return ClientReply::Text("A Wood Thrush sings");
  });
  const auto result = CaptionCorpus(records, &client, RuleBasedLocationDetector(), {2, 3});
  EXPECT_LE(peak.load(), 3);
  ASSERT_EQ(result.captions.size(), 12u);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(result.captions[i].recording_id, "r" + std::to_string(i));
  EXPECT_EQ(result.client_calls, 12);
}

TEST(CaptionFilesTest, RoundTripAndGrouping) {
  const std::vector<Caption> captions{
      {"a", "The sound of a Wood Thrush", NameForm::kCommon, CaptionOrigin::kTemplate},
      {"a", "The sound of a Hylocichla mustelina", NameForm::kScientific, CaptionOrigin::kTemplate},
      {"b", "A \"quoted\" caption", NameForm::kCommon, CaptionOrigin::kLlmRetry}};
  testing::TempDir dir;
  WriteCaptions(dir / "captions.jsonl", captions);
  EXPECT_EQ(ReadCaptions(dir / "captions.jsonl"), captions);
  EXPECT_EQ(CaptionFromJsonLine(CaptionToJsonLine(captions[2])), captions[2]);
  const auto grouped = GroupCaptions(captions);
  EXPECT_EQ(grouped.at("a").size(), 2u);
  EXPECT_EQ(grouped.at("b").size(), 1u);
  const std::string line = CaptionToJsonLine(captions[2]);
  EXPECT_NE(line.find("\"origin\":\"llm_retry\""), std::string::npos);
  EXPECT_NE(line.find("\"recordingId\":\"b\""), std::string::npos);

  WriteCaptionIssues(dir / "issues.jsonl", std::vector<CaptionIssue>{{"a", IssueKind::kLocationLeak, "Park"}});
  EXPECT_NE(testing::ReadFile(dir / "issues.jsonl").find("location_leak"), std::string::npos);
}

TEST(PromptTest, RenderSubstitutesFields) {
  const std::string p =
      RenderPrompt(PromptKind::kRetryMissingSpecies, "Wood Thrush", "n1", "meta", "prev");
  EXPECT_NE(p.find("\"Wood Thrush\""), std::string::npos);
  EXPECT_NE(p.find("Caption: prev"), std::string::npos);
  EXPECT_EQ(p.find('{'), std::string::npos);
  EXPECT_EQ(PromptKindForSource(Source::kWatkins), PromptKind::kWatkinsNotes);
  EXPECT_EQ(RetryPromptFor(IssueKind::kLocationLeak), PromptKind::kRetryLocationLeak);
}

}  // namespace
}  // namespace bioclap
