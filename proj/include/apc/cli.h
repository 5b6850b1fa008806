// Copyright 2026 The apcspeech Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef APC_CLI_H_
#define APC_CLI_H_

// Command-line front end. RunCli is what the apc executable calls; tests
// drive it directly with argument vectors.

#include <ostream>
#include <string>
#include <vector>

namespace apc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// args excludes the program name. Results go to out; failures print one
// line "error<TAB>kind<TAB>message" to err.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Front end of the corpus writer tool.
int RunDeskCorpusCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace apc

#endif  // APC_CLI_H_
