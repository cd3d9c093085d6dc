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

#include "hfl/toml.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "hfl/error.h"

namespace hfl {
namespace {

using nlohmann::json;

bool is_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

// Drops a trailing # comment that is not inside a string.
std::string_view strip_comment(std::string_view s) {
  char quote = 0;
  for (size_t k = 0; k < s.size(); ++k) {
    if (quote == '"' && s[k] == '\\') {
      ++k;
    } else if (quote != 0) {
      if (s[k] == quote) quote = 0;
    } else if (s[k] == '"' || s[k] == '\'') {
      quote = s[k];
    } else if (s[k] == '#') {
      return s.substr(0, k);
    }
  }
  return s;
}

// Net bracket depth of `s`, ignoring brackets inside strings.
int bracket_balance(std::string_view s) {
  int depth = 0;
  char quote = 0;
  for (size_t k = 0; k < s.size(); ++k) {
    if (quote == '"' && s[k] == '\\') {
      ++k;
    } else if (quote != 0) {
      if (s[k] == quote) quote = 0;
    } else if (s[k] == '"' || s[k] == '\'') {
      quote = s[k];
    } else {
      if (s[k] == '[') ++depth;
      if (s[k] == ']') --depth;
    }
  }
  return depth;
}

class ValueParser {
 public:
  ValueParser(std::string_view s, int line) : s_(s), line_(line) {}

  json parse_all() {
    json v = parse_value();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing characters");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what, line_);
  }

  void skip_ws() {
    while (pos_ < s_.size() &&
           std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
  }

  json parse_value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return parse_string();
    if (c == '\'') return parse_literal();
    if (c == '[') return parse_array();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return parse_number();
  }

  json parse_string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  json parse_literal() {
    const size_t end = s_.find('\'', ++pos_);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  json parse_array() {
    ++pos_;
    json arr = json::array();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return arr;
    }
    for (;;) {
      arr.push_back(parse_value());
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return arr;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      fail("expected ',' or ']' in array");
    }
  }

  json parse_number() {
    size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' &&
           !std::isspace(static_cast<unsigned char>(s_[end])))
      ++end;
    std::string tok(s_.substr(pos_, end - pos_));
    std::erase(tok, '_');
    if (tok.empty()) fail("missing value");
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    const char* digits = (*b == '+') ? b + 1 : b;
    const bool integral =
        tok.find_first_of(".eE") == std::string::npos &&
        tok.find("inf") == std::string::npos && tok.find("nan") == std::string::npos;
    if (integral) {
      int64_t v = 0;
      auto [p, ec] = std::from_chars(digits, e, v);
      if (ec == std::errc() && p == e) {
        pos_ = end;
        return v;
      }
    } else {
      double v = 0.0;
      auto [p, ec] = std::from_chars(digits, e, v);
      if (ec == std::errc() && p == e) {
        pos_ = end;
        return v;
      }
    }
    fail("invalid value '" + tok + "'");
  }

  std::string_view s_;
  int line_;
  size_t pos_ = 0;
};

}  // namespace

nlohmann::json parse_toml(std::string_view text) {
  json root = json::object();
  json* section = &root;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line(trim(strip_comment(raw)));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("malformed section header", line_no);
      std::string name(trim(std::string_view(line).substr(1, line.size() - 2)));
      if (name.empty() || !std::all_of(name.begin(), name.end(), is_key_char))
        throw ParseError("invalid section name '" + name + "'", line_no);
      if (root.contains(name))
        throw ParseError("duplicate section [" + name + "]", line_no);
      root[name] = json::object();
      section = &root[name];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    std::string key(trim(std::string_view(line).substr(0, eq)));
    if (key.empty() || !std::all_of(key.begin(), key.end(), is_key_char))
      throw ParseError("invalid key '" + key + "'", line_no);
    if (section->contains(key))
      throw ParseError("duplicate key '" + key + "'", line_no);
    std::string value(trim(std::string_view(line).substr(eq + 1)));
    const int start_line = line_no;
    while (bracket_balance(value) > 0 && std::getline(in, raw)) {
      ++line_no;
      value += ' ';
      value += trim(strip_comment(raw));
    }
    (*section)[key] = ValueParser(value, start_line).parse_all();
  }
  return root;
}

nlohmann::json load_toml(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str());
}

}  // namespace hfl
