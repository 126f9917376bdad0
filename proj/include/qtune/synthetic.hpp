// Copyright 2026 The QTune Authors.
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

#include "qtune/io.hpp"
#include "qtune/types.hpp"

namespace qtune {

struct MixtureSpec {
  Index clusters = 64;
  double center_spread = 4.0;  // stddev of cluster centers around the origin
  double cluster_sigma = 1.0;  // within-cluster stddev
};

// Seeded Gaussian-mixture sampler. The mixture (centers) is derived from
// `seed` alone, so data and query draws with different `stream` values come
// from one distribution.
Mat sample_gaussian_mixture(Index count, Index dim, const MixtureSpec& spec, std::uint64_t seed,
                            std::uint64_t stream = 0);

Dataset make_synthetic_dataset(Index count, Index dim, const MixtureSpec& spec, std::uint64_t seed);
QuerySet make_synthetic_queries(Index count, Index dim, const MixtureSpec& spec, std::uint64_t seed);

}  // namespace qtune
