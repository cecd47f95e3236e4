// SPDX-License-Identifier: Apache-2.0
//
// nrfrt: differentiable RF ray tracing with neural reflectance fields
// Copyright (C) 2026 The nrfrt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "nrf/json_util.hpp"

#include "nrf/error.hpp"

#include <algorithm>
#include <cmath>

namespace nrf::json_util {

Json parse(std::string_view text, const std::string& source) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte > 0 ? byte - 1 : 0), '\n');
    throw ParseError(source + ":" + std::to_string(line) + ": " + e.what());
  }
}

std::string dump(const Json& doc) { return doc.dump(2) + "\n"; }

void expect_format(const Json& doc, std::string_view format, int version,
                   const std::string& source) {
  if (!doc.is_object()) throw ParseError(source + ": top level must be an object");
  const std::string got = get_string(doc, "format", source);
  if (got != format) {
    throw ParseError(source + ": format is '" + got + "', expected '" + std::string(format) + "'");
  }
  const int v = get_int(doc, "version", source);
  if (v != version) {
    throw ParseError(source + ": unsupported version " + std::to_string(v));
  }
}

const Json& get_field(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing field '" + key + "'");
  return *it;
}

const Json& get_array(const Json& obj, const char* key, const std::string& where) {
  const Json& v = get_field(obj, key, where);
  if (!v.is_array()) throw ParseError(where + ": field '" + key + "' must be a list");
  return v;
}

double get_number(const Json& obj, const char* key, const std::string& where) {
  const Json& v = get_field(obj, key, where);
  if (!v.is_number()) throw ParseError(where + ": field '" + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(where + ": field '" + key + "' is not finite");
  return d;
}

int get_int(const Json& obj, const char* key, const std::string& where) {
  const Json& v = get_field(obj, key, where);
  if (!v.is_number_integer()) throw ParseError(where + ": field '" + key + "' must be an integer");
  return v.get<int>();
}

std::string get_string(const Json& obj, const char* key, const std::string& where) {
  const Json& v = get_field(obj, key, where);
  if (!v.is_string()) throw ParseError(where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

double number_or(const Json& obj, const char* key, double fallback, const std::string& where) {
  return obj.contains(key) ? get_number(obj, key, where) : fallback;
}

int int_or(const Json& obj, const char* key, int fallback, const std::string& where) {
  return obj.contains(key) ? get_int(obj, key, where) : fallback;
}

bool bool_or(const Json& obj, const char* key, bool fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_boolean()) throw ParseError(where + ": field '" + key + "' must be true/false");
  return v.get<bool>();
}

}  // namespace nrf::json_util
