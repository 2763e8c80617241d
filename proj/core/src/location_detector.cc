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

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "bioclap/captioner.h"
#include "bioclap/error.h"

namespace bioclap {
namespace {

std::string Lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool IsWordChar(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Whole-word, case-insensitive phrase search over an already-lowercased text.
bool ContainsPhrase(const std::string& text_lower, const std::string& phrase_lower) {
  if (phrase_lower.empty()) return false;
  for (auto pos = text_lower.find(phrase_lower); pos != std::string::npos;
       pos = text_lower.find(phrase_lower, pos + 1)) {
    const bool left_ok = pos == 0 || !IsWordChar(text_lower[pos - 1]);
    const auto end = pos + phrase_lower.size();
    const bool right_ok = end == text_lower.size() || !IsWordChar(text_lower[end]);
    if (left_ok && right_ok) return true;
  }
  return false;
}

std::string MaskTerms(std::string_view text, std::span<const std::string> exempt) {
  std::string out(text);
  std::vector<std::string> terms(exempt.begin(), exempt.end());
  // Longest first so "American Robin" is masked before "Robin".
  std::sort(terms.begin(), terms.end(),
            [](const auto& a, const auto& b) { return a.size() > b.size(); });
  for (const auto& term : terms) {
    if (term.empty()) continue;
    const std::string needle = Lower(term);
    std::string lowered = Lower(out);
    for (auto pos = lowered.find(needle); pos != std::string::npos;
         pos = lowered.find(needle)) {
      out.replace(pos, needle.size(), "species");
      lowered = Lower(out);
    }
  }
  return out;
}

const std::vector<std::string>& DefaultGazetteer() {
  static const std::vector<std::string> kPlaces = {
      // Protected areas and landmarks frequently named in field notes.
      "Golden Gate Park", "Central Park", "Yellowstone", "Yosemite", "Everglades",
      "Point Reyes", "Big Bend", "Cape May", "Monterey Bay", "Kruger", "Serengeti",
      "Masai Mara", "Okavango", "Daintree", "Kakadu", "Great Barrier Reef", "Galapagos",
      "Amazon", "Pantanal", "Borneo", "Madagascar", "Tasmania", "Patagonia",
      "Costa Rica", "Panama", "Ecuador", "Colombia", "Peru", "Brazil", "Argentina",
      "Mexico", "Canada", "Alaska", "Hawaii", "Florida", "Texas", "Arizona", "Oregon",
      "Ontario", "Quebec", "Queensland", "New South Wales", "Victoria", "Scotland",
      "England", "Ireland", "France", "Germany", "Spain", "Portugal", "Italy", "Sweden",
      "Norway", "Finland", "Poland", "Netherlands", "Kenya", "Tanzania", "Uganda",
      "South Africa", "Namibia", "Botswana", "India", "Sri Lanka", "Nepal", "Thailand",
      "Vietnam", "Malaysia", "Indonesia", "Philippines", "Japan", "China", "Taiwan",
      "Australia", "New Zealand", "San Francisco", "Los Angeles", "San Diego", "Seattle",
      "Portland", "Chicago", "New York", "Boston", "Toronto", "Vancouver", "Montreal",
      "London", "Paris", "Berlin", "Madrid", "Lisbon", "Sydney", "Melbourne",
      "Brisbane", "Cairns", "Auckland", "Nairobi", "Cape Town", "Mumbai", "Bangkok",
      "Singapore", "Tokyo", "Lima", "Quito", "Bogota", "Manaus"};
  return kPlaces;
}

const std::unordered_set<std::string>& LeadingStopwords() {
  static const std::unordered_set<std::string> kWords = {
      "The", "A", "An", "In", "On", "At", "Near", "By", "From", "This", "That", "Its",
      "Their", "His", "Her", "Our", "Some", "Several", "Two", "Three", "Deep", "Dense",
      "Open", "Old", "Nearby", "Distant", "Calling", "Singing"};
  return kWords;
}

// Capitalized phrase ending in a place noun, or a place noun followed by a
// capitalized name.
const std::regex& PlacePhrasePattern() {
  static const std::regex kPattern(
      R"(((?:[A-Z][a-z'\-]+\s+)+(?:National\s+Park|National\s+Forest|Park|Reserve|Preserve|Refuge|Sanctuary|County|Province|Lake|River|Creek|Island|Islands|Bay|Mountains|Valley|Canyon|Beach|Wetlands|Marsh|Trail|Road|Street|Avenue|Airport)\b)|(\b(?:Lake|Mount|Mt\.|Cape|Isla|Rio|Sierra|Port|Fort)\s+[A-Z][a-z'\-]+))");
  return kPattern;
}

const std::regex& CoordinatePattern() {
  static const std::regex kPattern(
      R"((\d{1,3}(?:\.\d+)?\s*(?:°)?\s*[NSns]?\s*,?\s*\d{1,3}(?:\.\d+)?\s*(?:°)?\s*[EWew]\b)|(-?\d{1,2}\.\d{2,}\s*,\s*-?\d{1,3}\.\d{2,}))");
  return kPattern;
}

}  // namespace

RuleBasedLocationDetector::RuleBasedLocationDetector()
    : RuleBasedLocationDetector(DefaultGazetteer()) {}

RuleBasedLocationDetector::RuleBasedLocationDetector(std::vector<std::string> gazetteer) {
  for (auto& place : gazetteer) AddPlace(std::move(place));
}

void RuleBasedLocationDetector::AddPlace(std::string place) {
  if (place.empty()) return;
  places_lower_.push_back(Lower(place));
  places_.push_back(std::move(place));
}

void RuleBasedLocationDetector::LoadGazetteer(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open gazetteer " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    AddPlace(line.substr(first, last - first + 1));
  }
}

std::optional<std::string> RuleBasedLocationDetector::FindLocation(
    std::string_view text, std::span<const std::string> exempt) const {
  const std::string masked = MaskTerms(text, exempt);
  const std::string lowered = Lower(masked);
  for (std::size_t i = 0; i < places_lower_.size(); ++i) {
    if (ContainsPhrase(lowered, places_lower_[i])) return places_[i];
  }

  std::smatch match;
  if (std::regex_search(masked, match, CoordinatePattern())) return match.str(0);

  for (auto it = std::sregex_iterator(masked.begin(), masked.end(), PlacePhrasePattern());
       it != std::sregex_iterator(); ++it) {
    // Drop sentence-initial words such as "The" that only look like names.
    std::istringstream words(it->str(0));
    std::vector<std::string> tokens;
    for (std::string w; words >> w;) tokens.push_back(w);
    std::size_t first = 0;
    while (first < tokens.size() && LeadingStopwords().contains(tokens[first])) ++first;
    if (tokens.size() - first >= 2) {
      std::string phrase;
      for (std::size_t k = first; k < tokens.size(); ++k) {
        phrase += (phrase.empty() ? "" : " ") + tokens[k];
      }
      return phrase;
    }
  }
  return std::nullopt;
}

}  // namespace bioclap
