// Copyright 2026 The Tamperloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TAMPERLOC_CLI_HPP_
#define TAMPERLOC_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace tamperloc::cli {

// Parses `args` (without the program name), dispatches the subcommand and
// returns the process exit code: 0 ok, 2 config, 3 data, 4 numerical.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tamperloc::cli

#endif  // TAMPERLOC_CLI_HPP_
