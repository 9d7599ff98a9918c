// Copyright 2026 The MPDL Authors.
//
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

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>

namespace mpdl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitProtocol = 3;
inline constexpr int kExitIo = 4;

/// Entry point of the experiment runner. Subcommands: mpdl, privacy-sweep,
/// graph, selftest.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// SHA-1 of "blob <size>\0" followed by the content, as git computes it.
std::string git_blob_sha1(std::span<const std::uint8_t> content);

/// Quick oracle checks of every module. Returns the number of failed checks.
int selftest(std::ostream& out);

}  // namespace mpdl::cli
