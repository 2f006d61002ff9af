// Copyright 2026 The ppcl Authors. All Rights Reserved.
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

#pragma once

#include <cstdint>
#include <string_view>

namespace ppcl {

/// Logs a warning and bumps the process-wide warning counter.
void warn(std::string_view message);
void info(std::string_view message);

/// Number of warnings emitted so far; tests diff it around a call.
std::uint64_t warning_count();

/// 0 = warnings only, 1 = info, 2 = debug.
void set_verbosity(int level);

}  // namespace ppcl
