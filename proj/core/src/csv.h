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

#ifndef BIOCLAP_SRC_CSV_H_
#define BIOCLAP_SRC_CSV_H_

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace bioclap::internal {

struct CsvRow {
  std::size_t line = 0;  // 1-based line where the row starts
  std::vector<std::string> fields;
};

// RFC 4180: quoted fields may hold commas, doubled quotes and newlines.
// Blank lines are skipped. Throws Error{kMalformedManifest} on an
// unterminated quote.
std::vector<CsvRow> ParseCsv(std::string_view text);

std::string CsvEscape(std::string_view field);

}  // namespace bioclap::internal

#endif  // BIOCLAP_SRC_CSV_H_
