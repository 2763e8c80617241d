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

#ifndef BIOCLAP_CAPTIONER_H_
#define BIOCLAP_CAPTIONER_H_

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bioclap/recording.h"

namespace bioclap {

enum class NameForm { kCommon, kScientific };
enum class CaptionOrigin { kTemplate, kMetadataTemplate, kLlm, kLlmRetry };

std::string_view NameFormName(NameForm form);
std::string_view CaptionOriginName(CaptionOrigin origin);

struct Caption {
  std::string recording_id;
  std::string text;
  NameForm name_form = NameForm::kCommon;
  CaptionOrigin origin = CaptionOrigin::kTemplate;

  friend bool operator==(const Caption&, const Caption&) = default;
};

enum class IssueKind { kLocationLeak, kMissingSpecies, kEmptyOutput, kClientError };
std::string_view IssueKindName(IssueKind kind);

struct CaptionIssue {
  std::string recording_id;
  IssueKind kind = IssueKind::kClientError;
  std::string detail;
};

// Which prompt asset a captioning request uses. The first group summarizes
// field notes for a source; the retry group re-prompts after a detected issue.
enum class PromptKind {
  kINaturalistNotes,
  kWatkinsNotes,
  kGenericNotes,
  kRetryLocationLeak,
  kRetryMissingSpecies,
  kRetryEmptyOutput,
  kRetryClientError,
};
std::string_view PromptKindName(PromptKind kind);
PromptKind PromptKindForSource(Source source);
PromptKind RetryPromptFor(IssueKind kind);
// Prompt text with {species}, {notes}, {metadata} and {previous} filled in.
std::string RenderPrompt(PromptKind kind, std::string_view species, std::string_view notes,
                         std::string_view metadata, std::string_view previous);

struct CaptionRequest {
  PromptKind prompt_kind = PromptKind::kGenericNotes;
  std::string prompt;
  std::string species_name;
  std::string notes;
  std::map<std::string, std::string> metadata;
};

// Either text or an error description (timeout, refusal, transport failure).
struct ClientReply {
  std::optional<std::string> text;
  std::string error;

  static ClientReply Text(std::string t) { return {std::move(t), {}}; }
  static ClientReply Failure(std::string e) { return {std::nullopt, std::move(e)}; }
};

class CaptionClient {
 public:
  virtual ~CaptionClient() = default;
  // Must be safe to call from several threads at once.
  virtual ClientReply Complete(const CaptionRequest& request) = 0;
};

class LocationDetector {
 public:
  virtual ~LocationDetector() = default;
  // Returns the offending mention, if any. Occurrences of `exempt` terms
  // (species names) are masked before detection.
  virtual std::optional<std::string> FindLocation(
      std::string_view text, std::span<const std::string> exempt) const = 0;
};

// Gazetteer of place names plus two pattern rules: capitalized phrases ending
// in a place noun ("Point Reyes National Seashore", "Lake Tahoe") and
// latitude/longitude pairs.
class RuleBasedLocationDetector : public LocationDetector {
 public:
  // Starts with the built-in gazetteer.
  RuleBasedLocationDetector();
  explicit RuleBasedLocationDetector(std::vector<std::string> gazetteer);

  void AddPlace(std::string place);
  // One place per line; blank lines and '#' comments ignored.
  void LoadGazetteer(const std::filesystem::path& path);

  std::optional<std::string> FindLocation(
      std::string_view text, std::span<const std::string> exempt) const override;

 private:
  std::vector<std::string> places_lower_;
  std::vector<std::string> places_;
};

// "The sound of a/an {name}". Throws Error{kMissingName}.
Caption TemplateCaption(const Recording& record, NameForm form);

// Clause grammar over call type, behavior, animal count and background
// species; see docs/captions.md. Throws Error{kMissingName}.
Caption MetadataTemplateCaption(const Recording& record, NameForm form);

// Indefinite article for a noun phrase: "an" iff it starts with a vowel letter.
std::string_view IndefiniteArticle(std::string_view noun);

// Collapses whitespace runs (including newlines) and trims.
std::string SanitizeCaptionText(std::string_view text);

using LlmOutcome = std::variant<Caption, CaptionIssue>;

// One client call. Failures are returned, never thrown.
LlmOutcome LlmCaption(const Recording& record, PromptKind prompt_kind, CaptionClient& client,
                      NameForm form = NameForm::kCommon);

std::optional<CaptionIssue> DetectLocationLeak(const Caption& caption,
                                               const LocationDetector& detector,
                                               std::span<const std::string> exempt = {});
std::optional<CaptionIssue> DetectMissingSpecies(const Caption& caption,
                                                 const Recording& record);

struct PipelineResult {
  std::vector<Caption> captions;
  std::vector<CaptionIssue> issues;
  int client_calls = 0;
};

// Full per-record flow: notes go to the client, flagged output is re-prompted
// up to `max_retries` times with issue-specific prompts, and anything still
// failing falls back to the template. With `client == nullptr` only templates
// are used. Emits one caption per available name form (one for AudioCaps).
PipelineResult CaptionPipeline(const Recording& record, CaptionClient* client,
                               const LocationDetector& detector, int max_retries = 2);

struct CorpusCaptionOptions {
  int max_retries = 2;
  std::size_t max_in_flight = 4;
};

// Runs CaptionPipeline over every record with at most `max_in_flight` records
// in progress. Output order follows input order.
PipelineResult CaptionCorpus(std::span<const Recording> records, CaptionClient* client,
                             const LocationDetector& detector,
                             const CorpusCaptionOptions& options = {});

std::string CaptionToJsonLine(const Caption& caption);
Caption CaptionFromJsonLine(std::string_view line);
void WriteCaptions(const std::filesystem::path& path, std::span<const Caption> captions);
std::vector<Caption> ReadCaptions(const std::filesystem::path& path);
void WriteCaptionIssues(const std::filesystem::path& path,
                        std::span<const CaptionIssue> issues);

// recording id -> captions, preserving file order.
std::map<std::string, std::vector<Caption>> GroupCaptions(std::span<const Caption> captions);

}  // namespace bioclap

#endif  // BIOCLAP_CAPTIONER_H_
