// Copyright 2026 The hierfl Authors
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

// Reader for the TOML subset used by run configs: [section] headers,
// key = value pairs, # comments, strings, integers, floats, booleans and
// (possibly multi-line) arrays of those. Sections become nested objects.

#ifndef HFL_TOML_H_
#define HFL_TOML_H_

#include <filesystem>
#include <string_view>

#include "json.hpp"

namespace hfl {

// Throws ParseError carrying the 1-based line number.
nlohmann::json parse_toml(std::string_view text);
nlohmann::json load_toml(const std::filesystem::path& path);

}  // namespace hfl

#endif  // HFL_TOML_H_
