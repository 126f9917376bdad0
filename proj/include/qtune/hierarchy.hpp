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
#include <optional>
#include <vector>

#include "qtune/io.hpp"
#include "qtune/pq.hpp"
#include "qtune/types.hpp"

namespace qtune {

enum class LevelKind { kVqBroadcast, kPq, kExact };
enum class CentroidStore { kFloat32, kInt8 };

struct LevelConfig {
  LevelKind kind = LevelKind::kVqBroadcast;
  // vq
  Index centroids = 0;
  CentroidStore store = CentroidStore::kFloat32;
  // pq
  Index dims_per_block = 0;
  int bits = 8;
  Index train_sample = 0;
  int iterations = 0;  // 0 = default (20 for vq, 10 for pq)
};

// Levels are listed in ascending bitrate order. A pq entry that precedes a
// vq entry encodes that vq stage's centroid table; a trailing pq entry
// encodes the dataset itself. keep_exact appends an uncompressed level.
struct HierarchyConfig {
  Metric metric = Metric::kSquaredEuclidean;
  std::vector<LevelConfig> levels;
  bool keep_exact = true;
  std::uint64_t seed = 0;

  static HierarchyConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

// One encoding of all n datapoints. Levels whose payload lives on a centroid
// table map points to shared representatives; storage and distance
// materialization are per representative.
struct QuantizationLevel {
  LevelKind kind = LevelKind::kExact;
  std::int64_t footprint_bytes = 0;
  Index rep_count = 0;
  double compression_ratio = 0.0;

  std::vector<std::int32_t> rep_of_point;          // empty => identity mapping
  std::vector<std::vector<std::int32_t>> buckets;  // per rep, members ascending

  // vq_broadcast payload
  Mat centroids;  // dequantized compute form
  CentroidStore store = CentroidStore::kFloat32;
  Int8Mat centroids_i8;
  Vec i8_scales;

  // pq payload (codes hold rep_count rows)
  PQCodebook pq;

  bool identity_reps() const { return rep_of_point.empty(); }
  Index rep_of(Index point) const {
    return identity_reps() ? point : Index(rep_of_point[std::size_t(point)]);
  }
};

struct QuantizationHierarchy {
  Mat data;  // n x d; exact-level payload and PQ training source
  ElementKind element_kind = ElementKind::kFloat32;
  Metric metric = Metric::kSquaredEuclidean;
  std::uint64_t seed = 0;
  std::vector<QuantizationLevel> levels;

  Index point_count() const { return data.rows(); }
  Index dim() const { return data.cols(); }
  Index level_count() const { return Index(levels.size()); }
  int bytes_per_dim() const { return element_kind == ElementKind::kUint8 ? 1 : 4; }
  std::int64_t dataset_bytes() const {
    return std::int64_t(point_count()) * dim() * bytes_per_dim();
  }
  std::vector<std::int64_t> footprints() const;
};

QuantizationHierarchy build_hierarchy(const Dataset& ds, const HierarchyConfig& config,
                                      std::uint64_t seed);

// Footprint accounting without building; usable at any n.
std::vector<std::int64_t> planned_footprints(const HierarchyConfig& config, Index n, Index d,
                                             int bytes_per_dim);

void save_hierarchy(const QuantizationHierarchy& h, const std::filesystem::path& dir);
QuantizationHierarchy load_hierarchy(const std::filesystem::path& dir);
std::uint64_t hierarchy_hash(const std::filesystem::path& dir);

// Per-(query, level) scoring state: vq distances are materialized once per
// representative, pq levels build one lookup table per query.
class LevelScorer {
 public:
  LevelScorer(const QuantizationHierarchy& h, Index level, Eigen::Ref<const Vec> query);

  Index rep_count() const { return level_->rep_count; }
  bool identity_reps() const { return level_->identity_reps(); }
  Index rep_of(Index point) const { return level_->rep_of(point); }
  double rep_distance(Index rep) const;
  double point_score(Index point) const { return rep_distance(rep_of(point)); }
  VecD materialize_rep_distances() const;

 private:
  const QuantizationHierarchy* h_;
  const QuantizationLevel* level_;
  Vec query_;
  VecD vq_distances_;
  PQLookupTable lut_;
};

double quantized_distance(const QuantizationHierarchy& h, Index level,
                          Eigen::Ref<const Vec> query, Index point);

}  // namespace qtune
