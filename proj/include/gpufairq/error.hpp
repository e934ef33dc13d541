// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gpufairq {

// Invalid parameters, malformed configuration or out-of-range values.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A file could not be read or parsed. Carries the 1-based line number when
// the failure is tied to a specific row (0 otherwise).
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(format(path, line, what)), path_(path), line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& path, std::size_t line,
                            const std::string& what) {
    std::string out = path;
    if (line > 0) out += ":" + std::to_string(line);
    return out + ": " + what;
  }

  std::string path_;
  std::size_t line_;
};

}  // namespace gpufairq
