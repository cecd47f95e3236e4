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

#include <filesystem>
#include <string>

namespace nrf {

inline constexpr const char* kToolVersion = "1.0.0";

/// SHA-256 of a file as lowercase hex.
std::string sha256_file(const std::filesystem::path& path);

/// Entry point of the `nrfrt` tool; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace nrf
