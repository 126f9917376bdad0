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

#include <vector>

#include "qtune/types.hpp"

namespace qtune {

struct VQCodebook {
  Mat centroids;                                    // c x d
  std::vector<std::int32_t> codes;                  // per point, argmin centroid
  std::vector<std::vector<std::int32_t>> buckets;   // per centroid, members ascending
  std::vector<double> objective_log;                // mean squared error per iteration

  Index centroid_count() const { return centroids.rows(); }
};

// Lloyd's algorithm with k-means++ seeding. Assignment ties go to the smaller
// centroid index; empty clusters are re-seeded from the point farthest from
// its centroid. Deterministic for a fixed seed, independent of thread count.
VQCodebook train_vq(Eigen::Ref<const Mat> data, Index centroid_count, std::uint64_t seed,
                    int iterations = 20);

}  // namespace qtune
