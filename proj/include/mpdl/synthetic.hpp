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

#include "mpdl/data.hpp"

namespace mpdl::synthetic {

struct LinearTask {
  PartyDataset full;              // A columns first, then B columns
  FeatureAssignment assignment;   // matches the column layout
};

/// x^A ~ U[0,1]^d_a, x^B = M x^A + noise, min-max scaled to [0,1]. Labels
/// split a random projection of [x^A, x^B] at its median.
LinearTask make_linear_task(std::size_t n, std::size_t d_a, std::size_t d_b, double noise,
                            std::uint64_t seed);

}  // namespace mpdl::synthetic
