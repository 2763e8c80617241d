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

#ifndef BIOCLAP_TOOLS_CLI_H_
#define BIOCLAP_TOOLS_CLI_H_

#include <ostream>

namespace bioclap::tools {

// Runs one `bioclap` subcommand. Returns 0 on success, 1 on a runtime error
// (reported on `err` as a JSON object) and 2 on a usage error.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bioclap::tools

#endif  // BIOCLAP_TOOLS_CLI_H_
