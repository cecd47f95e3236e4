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

#pragma once

// Thin helpers over nlohmann::ordered_json used by every text file format in
// the project (scene, configs, sidecar, manifest). Field access errors name
// the file and the JSON path.

#include <json.hpp>

#include <string>
#include <string_view>

namespace nrf::json_util {

using Json = nlohmann::ordered_json;

Json parse(std::string_view text, const std::string& source);
std::string dump(const Json& doc);

void expect_format(const Json& doc, std::string_view format, int version,
                   const std::string& source);

const Json& get_field(const Json& obj, const char* key, const std::string& where);
const Json& get_array(const Json& obj, const char* key, const std::string& where);
double get_number(const Json& obj, const char* key, const std::string& where);
int get_int(const Json& obj, const char* key, const std::string& where);
std::string get_string(const Json& obj, const char* key, const std::string& where);

double number_or(const Json& obj, const char* key, double fallback, const std::string& where);
int int_or(const Json& obj, const char* key, int fallback, const std::string& where);
bool bool_or(const Json& obj, const char* key, bool fallback, const std::string& where);

}  // namespace nrf::json_util
