// Copyright 2026 The TruthV Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "truthv/error.hpp"

namespace truthv {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

namespace io {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '", path.string(), "'");
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::kIo, "read failed for '", path.string(), "'");
  return data;
}

inline void write_file(const std::filesystem::path& path,
                       std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write '", path.string(), "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for '", path.string(), "'");
}

// Splits on '\n'. A trailing newline does not produce an empty last line.
inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Lossless text form of a double ("%a").
inline std::string to_hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline double parse_hexfloat(const std::string& s) {
  if (s.empty()) fail(ErrorKind::kFormat, "empty numeric field");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  // ERANGE is reported for subnormals too; only reject unparsed input.
  if (end != s.c_str() + s.size())
    fail(ErrorKind::kFormat, "bad numeric value '", s, "'");
  return v;
}

// Parses one JSON line, reporting the 1-based line number on failure.
inline Json parse_json_line(std::string_view line, std::size_t line_no,
                            std::string_view what) {
  try {
    return Json::parse(line);
  } catch (const Json::exception& e) {
    fail(ErrorKind::kFormat, what, " line ", line_no, ": ", e.what());
  }
}

// Field access that turns nlohmann type errors into kFormat errors.
template <typename T>
T get_field(const Json& obj, const char* key, std::string_view context) {
  if (!obj.is_object() || !obj.contains(key))
    fail(ErrorKind::kFormat, context, ": missing field '", key, "'");
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception&) {
    fail(ErrorKind::kFormat, context, ": field '", key, "' has the wrong type");
  }
}

}  // namespace io
}  // namespace truthv
