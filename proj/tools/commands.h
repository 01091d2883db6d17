// Copyright 2026 The symflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SYMFLOW_TOOLS_COMMANDS_H_
#define SYMFLOW_TOOLS_COMMANDS_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace symflow {

enum ExitCode {
  kExitOk = 0,
  kExitFailure = 1,  // a failed check or an unexpected runtime error
  kExitUsage = 2,
  kExitValidation = 3,
  kExitDivergence = 4,
};

// Parses `args` (without the program name) and runs one command. Reports
// go to `out`, progress and errors to `err`.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace symflow

#endif  // SYMFLOW_TOOLS_COMMANDS_H_
