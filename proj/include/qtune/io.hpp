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

#include <filesystem>
#include <vector>

#include "qtune/types.hpp"

namespace qtune {

enum class ElementKind { kFloat32, kUint8 };
enum class VecFormat { kFvecs, kBvecs };

// Dense in-memory dataset. bvecs payloads are widened to float32 on load;
// `kind` is kept for footprint accounting (1 byte/dim vs 4 bytes/dim).
struct Dataset {
  Mat vectors;
  ElementKind kind = ElementKind::kFloat32;

  Index rows() const { return vectors.rows(); }
  Index dim() const { return vectors.cols(); }
  int bytes_per_dim() const { return kind == ElementKind::kUint8 ? 1 : 4; }
  std::int64_t bytes() const { return std::int64_t(rows()) * dim() * bytes_per_dim(); }
};

struct QuerySet {
  Mat queries;

  Index count() const { return queries.rows(); }
  Index dim() const { return queries.cols(); }
};

// Exact k-nearest-neighbor table. Each row is sorted ascending by
// (distance, datapoint index); distances are kept in double precision.
struct GroundTruth {
  IdxMat indices;   // n_q x k
  MatD distances;   // n_q x k

  Index query_count() const { return indices.rows(); }
  Index k() const { return indices.cols(); }
};

Dataset load_vectors(const std::filesystem::path& path, VecFormat format);
void save_vectors(const std::filesystem::path& path, const Dataset& ds, VecFormat format);

IdxMat load_ivecs(const std::filesystem::path& path);
void save_ivecs(const std::filesystem::path& path, const IdxMat& rows);

double distance(Metric metric, Eigen::Ref<const Vec> a, Eigen::Ref<const Vec> b);

// Brute-force exact search; ties broken toward the smaller datapoint index.
// Parallel over queries, output independent of thread count.
GroundTruth compute_ground_truth(const Dataset& ds, const QuerySet& qs, Index k, Metric metric);

void save_ground_truth(const std::filesystem::path& prefix, const GroundTruth& gt);
GroundTruth load_ground_truth(const std::filesystem::path& prefix);

}  // namespace qtune
