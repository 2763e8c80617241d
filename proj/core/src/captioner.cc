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

#include "bioclap/captioner.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <future>
#include <sstream>

#include "bioclap/error.h"
#include "json.hpp"

namespace bioclap {
namespace {

using nlohmann::json;

constexpr std::string_view kTemplatePrefix = "The sound of ";

std::string Lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

const std::optional<std::string>& NameField(const Recording& r, NameForm form) {
  return form == NameForm::kCommon ? r.species_common : r.species_scientific;
}

const std::string& RequireName(const Recording& r, NameForm form) {
  const auto& name = NameField(r, form);
  if (!name || Trim(*name).empty()) {
    throw Error(ErrorCode::kMissingName,
                "recording " + r.id + " has no " + std::string(NameFormName(form)) + " name");
  }
  return *name;
}

std::string WithArticle(std::string_view noun) {
  return std::string(IndefiniteArticle(noun)) + " " + std::string(noun);
}

std::string CountWord(int n) {
  static constexpr std::string_view kWords[] = {"zero", "one", "two",   "three", "four", "five",
                                                "six",  "seven", "eight", "nine",  "ten"};
  if (n >= 0 && n <= 10) return std::string(kWords[n]);
  return std::to_string(n);
}

std::string JoinList(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += (i + 1 == items.size()) ? " and " : ", ";
    out += items[i];
  }
  return out;
}

// "call, song" -> "call and song"
std::string NormalizeCallType(std::string_view raw) {
  std::vector<std::string> parts;
  std::stringstream ss{std::string(raw)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::string t = SanitizeCaptionText(Lower(item));
    if (!t.empty()) parts.push_back(std::move(t));
  }
  return JoinList(parts);
}

std::size_t FindCaseInsensitive(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  const std::string h = Lower(haystack);
  const std::string n = Lower(needle);
  return h.find(n);
}

std::vector<std::string> ExemptTerms(const Recording& r) {
  std::vector<std::string> terms;
  if (r.species_common) terms.push_back(*r.species_common);
  if (r.species_scientific) terms.push_back(*r.species_scientific);
  for (const auto& b : r.background_species) terms.push_back(b);
  return terms;
}

bool UsesLlm(const Recording& r) {
  return r.notes.has_value() &&
         (r.source == Source::kINaturalist || r.source == Source::kWatkins);
}

std::string MetadataSummary(const Recording& r) {
  std::vector<std::string> parts;
  if (r.call_type) parts.push_back("call type: " + *r.call_type);
  if (r.behavior) parts.push_back("behavior: " + *r.behavior);
  if (r.num_animals) parts.push_back("number of animals: " + std::to_string(*r.num_animals));
  if (!r.background_species.empty()) {
    parts.push_back("background species: " + JoinList(r.background_species));
  }
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : "; ") + p;
  return out;
}

Caption BaseTemplateCaption(const Recording& record, NameForm form) {
  return record.source == Source::kXenoCanto || record.source == Source::kSynthetic
             ? MetadataTemplateCaption(record, form)
             : TemplateCaption(record, form);
}

// Replaces the first case-insensitive occurrence of `from` with `to`.
std::optional<std::string> SwapName(std::string_view text, std::string_view from,
                                    std::string_view to) {
  const auto pos = FindCaseInsensitive(text, from);
  if (pos == std::string::npos) return std::nullopt;
  std::string out(text.substr(0, pos));
  out += to;
  out += text.substr(pos + from.size());
  return out;
}

bool CaptionIsClean(const Caption& caption, const Recording& record,
                    const LocationDetector& detector,
                    std::span<const std::string> exempt) {
  return !caption.text.empty() && !DetectMissingSpecies(caption, record) &&
         !DetectLocationLeak(caption, detector, exempt);
}

}  // namespace

std::string_view NameFormName(NameForm form) {
  return form == NameForm::kCommon ? "common" : "scientific";
}

std::string_view CaptionOriginName(CaptionOrigin origin) {
  switch (origin) {
    case CaptionOrigin::kTemplate: return "template";
    case CaptionOrigin::kMetadataTemplate: return "metadata_template";
    case CaptionOrigin::kLlm: return "llm";
    case CaptionOrigin::kLlmRetry: return "llm_retry";
  }
  return "template";
}

std::string_view IssueKindName(IssueKind kind) {
  switch (kind) {
    case IssueKind::kLocationLeak: return "location_leak";
    case IssueKind::kMissingSpecies: return "missing_species";
    case IssueKind::kEmptyOutput: return "empty_output";
    case IssueKind::kClientError: return "client_error";
  }
  return "client_error";
}

std::string_view PromptKindName(PromptKind kind) {
  switch (kind) {
    case PromptKind::kINaturalistNotes: return "inaturalist_notes";
    case PromptKind::kWatkinsNotes: return "watkins_notes";
    case PromptKind::kGenericNotes: return "generic_notes";
    case PromptKind::kRetryLocationLeak: return "retry_location_leak";
    case PromptKind::kRetryMissingSpecies: return "retry_missing_species";
    case PromptKind::kRetryEmptyOutput: return "retry_empty_output";
    case PromptKind::kRetryClientError: return "retry_client_error";
  }
  return "generic_notes";
}

PromptKind PromptKindForSource(Source source) {
  switch (source) {
    case Source::kINaturalist: return PromptKind::kINaturalistNotes;
    case Source::kWatkins: return PromptKind::kWatkinsNotes;
    default: return PromptKind::kGenericNotes;
  }
}

PromptKind RetryPromptFor(IssueKind kind) {
  switch (kind) {
    case IssueKind::kLocationLeak: return PromptKind::kRetryLocationLeak;
    case IssueKind::kMissingSpecies: return PromptKind::kRetryMissingSpecies;
    case IssueKind::kEmptyOutput: return PromptKind::kRetryEmptyOutput;
    case IssueKind::kClientError: return PromptKind::kRetryClientError;
  }
  return PromptKind::kRetryClientError;
}

std::string RenderPrompt(PromptKind kind, std::string_view species, std::string_view notes,
                         std::string_view metadata, std::string_view previous) {
  // Prompt assets. Versioned with the code; bump kPromptVersion in
  // caption_clients.cc when editing.
  std::string_view tmpl;
  switch (kind) {
    case PromptKind::kINaturalistNotes:
      tmpl =
          "Write one short caption describing what can be heard in an audio recording of a "
          "{species}. Use the recordist's notes below. Keep audible information, behavior and "
          "context. Leave out places, dates, people and anything that cannot be heard. The "
          "caption must name the {species}.\nNotes: {notes}";
      break;
    case PromptKind::kWatkinsNotes:
      tmpl =
          "Summarize this marine mammal recording of a {species} as one short audio caption. "
          "Mention signal type, number of animals and behavior when given. Leave out vessel "
          "names, places and dates. The caption must name the {species}.\nMetadata: "
          "{metadata}\nNotes: {notes}";
      break;
    case PromptKind::kGenericNotes:
      tmpl =
          "Write one short audio caption for a recording of a {species} from these notes, "
          "keeping only audible information. Name the {species}.\nNotes: {notes}";
      break;
    case PromptKind::kRetryLocationLeak:
      tmpl =
          "Rewrite this audio caption without mentioning any specific place, site or "
          "coordinates. Keep the species name {species} and everything audible.\nCaption: "
          "{previous}";
      break;
    case PromptKind::kRetryMissingSpecies:
      tmpl =
          "This audio caption must name the animal as \"{species}\". Rewrite it so that it "
          "does, keeping the rest.\nCaption: {previous}\nNotes: {notes}";
      break;
    case PromptKind::kRetryEmptyOutput:
      tmpl =
          "The previous answer was empty. Write one short caption describing what can be "
          "heard in a recording of a {species}.\nNotes: {notes}";
      break;
    case PromptKind::kRetryClientError:
      tmpl =
          "Write one short caption describing what can be heard in a recording of a "
          "{species}.\nNotes: {notes}";
      break;
  }
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      const auto key = tmpl.substr(i + 1, close - i - 1);
      if (key == "species") out += species;
      else if (key == "notes") out += notes;
      else if (key == "metadata") out += metadata;
      else if (key == "previous") out += previous;
      i = close + 1;
    } else {
      out.push_back(tmpl[i++]);
    }
  }
  return out;
}

std::string_view IndefiniteArticle(std::string_view noun) {
  const auto first = noun.find_first_not_of(" \t");
  if (first == std::string_view::npos) return "a";
  switch (std::tolower(static_cast<unsigned char>(noun[first]))) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
      return "an";
    default:
      return "a";
  }
}

std::string SanitizeCaptionText(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    return SanitizeCaptionText(std::string_view(out).substr(1, out.size() - 2));
  }
  return out;
}

Caption TemplateCaption(const Recording& record, NameForm form) {
  const std::string name = Trim(RequireName(record, form));
  return Caption{record.id, std::string(kTemplatePrefix) + WithArticle(name), form,
                 CaptionOrigin::kTemplate};
}

Caption MetadataTemplateCaption(const Recording& record, NameForm form) {
  const std::string name = Trim(RequireName(record, form));
  const std::string call = record.call_type ? NormalizeCallType(*record.call_type) : "";
  const bool has_behavior = record.behavior && !Trim(*record.behavior).empty();
  const bool has_count = record.num_animals && *record.num_animals >= 2;
  std::vector<std::string> background;
  for (const auto& b : record.background_species) {
    std::string t = SanitizeCaptionText(b);
    if (!t.empty()) background.push_back(WithArticle(t));
  }
  if (call.empty() && !has_behavior && !has_count && background.empty()) {
    return TemplateCaption(record, form);
  }
  std::string text = "The " + (call.empty() ? std::string("sound") : call) + " of " +
                     WithArticle(name);
  if (has_behavior) text += ", " + SanitizeCaptionText(Lower(*record.behavior));
  if (has_count) text += ", " + CountWord(*record.num_animals) + " individuals";
  if (!background.empty()) text += ", with " + JoinList(background) + " in the background";
  return Caption{record.id, std::move(text), form, CaptionOrigin::kMetadataTemplate};
}

LlmOutcome LlmCaption(const Recording& record, PromptKind prompt_kind, CaptionClient& client,
                      NameForm form) {
  CaptionRequest request;
  request.prompt_kind = prompt_kind;
  request.species_name = RequireName(record, form);
  request.notes = record.notes.value_or("");
  request.metadata["source"] = std::string(SourceName(record.source));
  if (!MetadataSummary(record).empty()) request.metadata["summary"] = MetadataSummary(record);
  request.prompt = RenderPrompt(prompt_kind, request.species_name, request.notes,
                                MetadataSummary(record), "");
  const ClientReply reply = client.Complete(request);
  if (!reply.text) {
    return CaptionIssue{record.id, IssueKind::kClientError, reply.error};
  }
  std::string text = SanitizeCaptionText(*reply.text);
  if (text.empty()) return CaptionIssue{record.id, IssueKind::kEmptyOutput, "empty caption"};
  return Caption{record.id, std::move(text), form, CaptionOrigin::kLlm};
}

std::optional<CaptionIssue> DetectLocationLeak(const Caption& caption,
                                               const LocationDetector& detector,
                                               std::span<const std::string> exempt) {
  if (auto hit = detector.FindLocation(caption.text, exempt)) {
    return CaptionIssue{caption.recording_id, IssueKind::kLocationLeak, *hit};
  }
  return std::nullopt;
}

std::optional<CaptionIssue> DetectMissingSpecies(const Caption& caption,
                                                 const Recording& record) {
  const std::string name = Trim(RequireName(record, caption.name_form));
  if (FindCaseInsensitive(caption.text, name) != std::string::npos) return std::nullopt;
  return CaptionIssue{caption.recording_id, IssueKind::kMissingSpecies,
                      "caption does not mention " + name};
}

PipelineResult CaptionPipeline(const Recording& record, CaptionClient* client,
                               const LocationDetector& detector, int max_retries) {
  PipelineResult result;
  if (record.source == Source::kAudioCaps) {
    if (record.notes && !SanitizeCaptionText(*record.notes).empty()) {
      result.captions.push_back(Caption{record.id, SanitizeCaptionText(*record.notes),
                                        NameForm::kCommon, CaptionOrigin::kTemplate});
    }
    return result;
  }

  std::vector<NameForm> forms;
  if (record.species_common) forms.push_back(NameForm::kCommon);
  if (record.species_scientific) forms.push_back(NameForm::kScientific);
  if (forms.empty()) return result;
  const std::vector<std::string> exempt = ExemptTerms(record);

  auto emit_templates = [&] {
    for (NameForm f : forms) result.captions.push_back(BaseTemplateCaption(record, f));
  };

  if (client == nullptr || !UsesLlm(record)) {
    emit_templates();
    return result;
  }

  const NameForm prompt_form = forms.front();
  const std::string prompt_name = *NameField(record, prompt_form);
  std::optional<Caption> accepted;
  std::optional<CaptionIssue> last_issue;
  std::string previous;

  for (int attempt = 0; attempt <= max_retries && !accepted; ++attempt) {
    CaptionRequest request;
    request.prompt_kind =
        attempt == 0 ? PromptKindForSource(record.source) : RetryPromptFor(last_issue->kind);
    request.species_name = prompt_name;
    request.notes = *record.notes;
    request.metadata["source"] = std::string(SourceName(record.source));
    const std::string summary = MetadataSummary(record);
    if (!summary.empty()) request.metadata["summary"] = summary;
    if (attempt > 0) {
      request.metadata["issue"] = std::string(IssueKindName(last_issue->kind));
      if (!previous.empty()) request.metadata["previousCaption"] = previous;
    }
    request.prompt =
        RenderPrompt(request.prompt_kind, prompt_name, *record.notes, summary, previous);

    ++result.client_calls;
    const ClientReply reply = client->Complete(request);
    if (!reply.text) {
      last_issue = CaptionIssue{record.id, IssueKind::kClientError, reply.error};
    } else if (std::string text = SanitizeCaptionText(*reply.text); text.empty()) {
      last_issue = CaptionIssue{record.id, IssueKind::kEmptyOutput, "empty caption"};
    } else {
      Caption candidate{record.id, text, prompt_form,
                        attempt == 0 ? CaptionOrigin::kLlm : CaptionOrigin::kLlmRetry};
      previous = text;
      last_issue = DetectMissingSpecies(candidate, record);
      if (!last_issue) last_issue = DetectLocationLeak(candidate, detector, exempt);
      if (!last_issue) accepted = std::move(candidate);
    }
    // Only failures that trigger a re-prompt are logged.
    if (last_issue && !accepted && attempt < max_retries) result.issues.push_back(*last_issue);
  }

  if (!accepted) {
    emit_templates();
    return result;
  }

  for (NameForm f : forms) {
    if (f == prompt_form) {
      result.captions.push_back(*accepted);
      continue;
    }
    // The other name form reuses the accepted text with the name swapped.
    std::optional<std::string> swapped =
        SwapName(accepted->text, prompt_name, *NameField(record, f));
    Caption other{record.id, swapped.value_or(""), f, accepted->origin};
    if (!swapped || !CaptionIsClean(other, record, detector, exempt)) {
      other = BaseTemplateCaption(record, f);
    }
    result.captions.push_back(std::move(other));
  }
  return result;
}

PipelineResult CaptionCorpus(std::span<const Recording> records, CaptionClient* client,
                             const LocationDetector& detector,
                             const CorpusCaptionOptions& options) {
  std::vector<PipelineResult> per_record(records.size());
  const std::size_t width = std::max<std::size_t>(1, options.max_in_flight);
  for (std::size_t start = 0; start < records.size(); start += width) {
    const std::size_t end = std::min(records.size(), start + width);
    std::vector<std::future<PipelineResult>> wave;
    for (std::size_t i = start; i < end; ++i) {
      wave.push_back(std::async(std::launch::async, [&, i] {
        return CaptionPipeline(records[i], client, detector, options.max_retries);
      }));
    }
    for (std::size_t i = start; i < end; ++i) per_record[i] = wave[i - start].get();
  }
  PipelineResult merged;
  for (auto& r : per_record) {
    std::move(r.captions.begin(), r.captions.end(), std::back_inserter(merged.captions));
    std::move(r.issues.begin(), r.issues.end(), std::back_inserter(merged.issues));
    merged.client_calls += r.client_calls;
  }
  return merged;
}

std::string CaptionToJsonLine(const Caption& caption) {
  return json{{"recordingId", caption.recording_id},
              {"text", caption.text},
              {"nameForm", std::string(NameFormName(caption.name_form))},
              {"origin", std::string(CaptionOriginName(caption.origin))}}
      .dump();
}

Caption CaptionFromJsonLine(std::string_view line) {
  try {
    const json j = json::parse(line);
    Caption c;
    c.recording_id = j.at("recordingId").get<std::string>();
    c.text = j.at("text").get<std::string>();
    const auto form = j.at("nameForm").get<std::string>();
    if (form == "common") c.name_form = NameForm::kCommon;
    else if (form == "scientific") c.name_form = NameForm::kScientific;
    else throw Error(ErrorCode::kMalformedManifest, "unknown nameForm " + form);
    const auto origin = j.at("origin").get<std::string>();
    bool known = false;
    for (CaptionOrigin o : {CaptionOrigin::kTemplate, CaptionOrigin::kMetadataTemplate,
                            CaptionOrigin::kLlm, CaptionOrigin::kLlmRetry}) {
      if (CaptionOriginName(o) == origin) {
        c.origin = o;
        known = true;
      }
    }
    if (!known) throw Error(ErrorCode::kMalformedManifest, "unknown origin " + origin);
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest, e.what());
  }
}

void WriteCaptions(const std::filesystem::path& path, std::span<const Caption> captions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& c : captions) out << CaptionToJsonLine(c) << '\n';
}

std::vector<Caption> ReadCaptions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<Caption> out;
  std::string line;
  while (std::getline(in, line)) {
    if (Trim(line).empty()) continue;
    out.push_back(CaptionFromJsonLine(line));
  }
  return out;
}

void WriteCaptionIssues(const std::filesystem::path& path,
                        std::span<const CaptionIssue> issues) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& i : issues) {
    out << json{{"recordingId", i.recording_id},
                {"kind", std::string(IssueKindName(i.kind))},
                {"detail", i.detail}}
               .dump()
        << '\n';
  }
}

std::map<std::string, std::vector<Caption>> GroupCaptions(std::span<const Caption> captions) {
  std::map<std::string, std::vector<Caption>> out;
  for (const auto& c : captions) out[c.recording_id].push_back(c);
  return out;
}

}  // namespace bioclap
