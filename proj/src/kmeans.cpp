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

#include "qtune/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace qtune {

namespace {

double next_unit(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

Mat kmeanspp_init(Eigen::Ref<const Mat> data, Index c, std::mt19937_64& rng) {
  const Index n = data.rows();
  Mat centers(c, data.cols());
  std::vector<char> used(std::size_t(n), 0);

  const Index first = Index(rng() % std::uint64_t(n));
  centers.row(0) = data.row(first);
  used[std::size_t(first)] = 1;

  VecD min_d2 = VecD::Constant(n, std::numeric_limits<double>::infinity());
  for (Index k = 1; k < c; ++k) {
    double total = 0.0;
    for (Index j = 0; j < n; ++j) {
      const double d2 = double((data.row(j) - centers.row(k - 1)).squaredNorm());
      if (d2 < min_d2[j]) min_d2[j] = d2;
      if (!used[std::size_t(j)]) total += min_d2[j];
    }
    Index pick = -1;
    if (total > 0.0) {
      const double u = next_unit(rng) * total;
      double acc = 0.0;
      for (Index j = 0; j < n; ++j) {
        if (used[std::size_t(j)]) continue;
        acc += min_d2[j];
        if (acc > u) {
          pick = j;
          break;
        }
      }
    }
    if (pick < 0) {
      // All remaining mass is zero (duplicate points); take the first unused.
      for (Index j = 0; j < n; ++j) {
        if (!used[std::size_t(j)]) {
          pick = j;
          break;
        }
      }
    }
    centers.row(k) = data.row(pick);
    used[std::size_t(pick)] = 1;
  }
  return centers;
}

}  // namespace

VQCodebook train_vq(Eigen::Ref<const Mat> data, Index centroid_count, std::uint64_t seed,
                    int iterations) {
  const Index n = data.rows();
  const Index d = data.cols();
  if (centroid_count < 1) throw InvalidArgument("train_vq: centroid count must be positive");
  if (centroid_count > n) throw InvalidArgument("train_vq: more centroids than points");
  if (iterations < 1) throw InvalidArgument("train_vq: iterations must be positive");

  std::mt19937_64 rng(seed ^ 0x7ea3a0f4d2cb51efull);
  VQCodebook book;
  book.centroids = kmeanspp_init(data, centroid_count, rng);
  book.codes.assign(std::size_t(n), 0);

  std::vector<float> assign_d2(std::size_t(n), 0.0f);
  const auto assign_all = [&]() {
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < n; ++j) {
      float best = std::numeric_limits<float>::infinity();
      std::int32_t arg = 0;
      for (Index k = 0; k < centroid_count; ++k) {
        const float d2 = (data.row(j) - book.centroids.row(k)).squaredNorm();
        if (d2 < best) {
          best = d2;
          arg = std::int32_t(k);
        }
      }
      book.codes[std::size_t(j)] = arg;
      assign_d2[std::size_t(j)] = best;
    }
  };
  const auto log_objective = [&]() {
    double sum = 0.0;
    for (Index j = 0; j < n; ++j) {
      sum += (data.row(j).cast<double>() - book.centroids.row(book.codes[std::size_t(j)]).cast<double>())
                 .squaredNorm();
    }
    book.objective_log.push_back(sum / double(n));
  };

  std::vector<std::int64_t> sizes(static_cast<std::size_t>(centroid_count));
  MatD sums(centroid_count, d);
  for (int iter = 0; iter < iterations; ++iter) {
    assign_all();
    log_objective();

    std::fill(sizes.begin(), sizes.end(), 0);
    sums.setZero();
    for (Index j = 0; j < n; ++j) {
      const auto k = book.codes[std::size_t(j)];
      sums.row(k) += data.row(j).cast<double>();
      ++sizes[std::size_t(k)];
    }
    std::vector<char> claimed(std::size_t(n), 0);
    for (Index k = 0; k < centroid_count; ++k) {
      if (sizes[std::size_t(k)] > 0) {
        book.centroids.row(k) = (sums.row(k) / double(sizes[std::size_t(k)])).cast<float>();
        continue;
      }
      // Re-seed from the point currently farthest from its centroid.
      Index far = 0;
      float far_d2 = -1.0f;
      for (Index j = 0; j < n; ++j) {
        if (!claimed[std::size_t(j)] && assign_d2[std::size_t(j)] > far_d2) {
          far_d2 = assign_d2[std::size_t(j)];
          far = j;
        }
      }
      claimed[std::size_t(far)] = 1;
      book.centroids.row(k) = data.row(far);
    }
  }

  assign_all();
  log_objective();

  book.buckets.assign(std::size_t(centroid_count), {});
  for (Index j = 0; j < n; ++j) {
    book.buckets[std::size_t(book.codes[std::size_t(j)])].push_back(std::int32_t(j));
  }
  return book;
}

}  // namespace qtune
