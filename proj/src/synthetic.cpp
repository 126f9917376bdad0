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

#include "qtune/synthetic.hpp"

#include <cmath>
#include <random>

namespace qtune {

namespace {

// Explicit uniform/normal draws instead of std distributions so that sampled
// values are identical across standard library implementations.
double next_unit(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

double next_normal(std::mt19937_64& rng) {
  // Box-Muller; consumes two draws per call.
  double u1 = next_unit(rng);
  while (u1 <= 0.0) u1 = next_unit(rng);
  const double u2 = next_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

Mat sample_gaussian_mixture(Index count, Index dim, const MixtureSpec& spec, std::uint64_t seed,
                            std::uint64_t stream) {
  if (count < 0 || dim < 1 || spec.clusters < 1) {
    throw InvalidArgument("sample_gaussian_mixture: bad shape");
  }
  std::mt19937_64 center_rng(seed * 0x9e3779b97f4a7c15ull + 1);
  Mat centers(spec.clusters, dim);
  for (Index c = 0; c < spec.clusters; ++c) {
    for (Index j = 0; j < dim; ++j) {
      centers(c, j) = float(spec.center_spread * next_normal(center_rng));
    }
  }

  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + 0x5851f42d4c957f2dull * (stream + 2));
  Mat out(count, dim);
  for (Index i = 0; i < count; ++i) {
    const Index c = Index(rng() % std::uint64_t(spec.clusters));
    for (Index j = 0; j < dim; ++j) {
      out(i, j) = centers(c, j) + float(spec.cluster_sigma * next_normal(rng));
    }
  }
  return out;
}

Dataset make_synthetic_dataset(Index count, Index dim, const MixtureSpec& spec,
                               std::uint64_t seed) {
  Dataset ds;
  ds.vectors = sample_gaussian_mixture(count, dim, spec, seed, /*stream=*/0);
  return ds;
}

QuerySet make_synthetic_queries(Index count, Index dim, const MixtureSpec& spec,
                                std::uint64_t seed) {
  QuerySet qs;
  qs.queries = sample_gaussian_mixture(count, dim, spec, seed, /*stream=*/1);
  return qs;
}

}  // namespace qtune
