// Copyright 2026 The MLMME Authors.
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

#ifndef MLMME_CLI_H_
#define MLMME_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace mlmme::cli {

enum ExitCode : int {
  kOk = 0,
  kUsageError = 1,      // bad flags or configuration
  kDataError = 2,       // unreadable or malformed inputs
  kNumericalError = 3,  // non-finite values, failed gradient check
};

// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace mlmme::cli

#endif  // MLMME_CLI_H_
