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

#include "ppcl/log.h"

#include <atomic>

#include <spdlog/spdlog.h>

namespace ppcl {

namespace {
std::atomic<std::uint64_t> g_warnings{0};
}

void warn(std::string_view message) {
  g_warnings.fetch_add(1, std::memory_order_relaxed);
  spdlog::warn("{}", message);
}

void info(std::string_view message) { spdlog::info("{}", message); }

std::uint64_t warning_count() { return g_warnings.load(std::memory_order_relaxed); }

void set_verbosity(int level) {
  switch (level) {
    case 0:
      spdlog::set_level(spdlog::level::warn);
      break;
    case 1:
      spdlog::set_level(spdlog::level::info);
      break;
    default:
      spdlog::set_level(spdlog::level::debug);
      break;
  }
}

}  // namespace ppcl
