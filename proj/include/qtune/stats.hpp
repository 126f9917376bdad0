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
#include <utility>
#include <vector>

#include "qtune/hierarchy.hpp"
#include "qtune/search.hpp"

namespace qtune {

// Per-(query, level) rank statistics. u holds each ground-truth neighbor's
// level distance, sorted ascending by (distance, neighbor index); v holds the
// matching single-layer ranks: v[c] = number of points ordered strictly
// before neighbor c under that level's (distance, index) order.
struct StatsTensors {
  Index n_q = 0, m = 0, k = 0;
  std::vector<std::vector<std::pair<double, std::int32_t>>> u;  // [a*m+b] -> k pairs
  std::vector<std::vector<std::int64_t>> v;                     // [a*m+b] -> k ranks

  std::size_t slot(Index a, Index b) const { return std::size_t(a * m + b); }
};

StatsTensors compute_U(const QuerySet& qs, const GroundTruth& gt,
                       const QuantizationHierarchy& h);
void compute_V(StatsTensors& tensors, const QuantizationHierarchy& h, const QuerySet& qs);

// Dense per-level loss rows over depths 0..n. Rows are non-increasing and end
// at zero; the smoothing floor keeps depth-0 entries finite.
struct LossMatrix {
  std::vector<std::vector<double>> rows;  // m rows, each n+1 entries
  double floor = 0.5;
  Index k = 0, n_q = 0;
};

LossMatrix loss_matrix(const StatsTensors& tensors, Index n, double floor = 0.5);

struct ConvexLossCurve {
  std::vector<std::int64_t> knots;  // breakpoint depths, ascending
  std::vector<double> values;       // loss at each knot
  std::vector<double> slopes;       // between consecutive knots, non-decreasing

  double value_at(std::int64_t t) const;
  std::int64_t min_depth() const { return knots.front(); }
  std::int64_t max_depth() const { return knots.back(); }
};

// Lower convex hull of one loss row (monotone chain); interior points above
// a segment are dropped, endpoints always kept.
ConvexLossCurve convexify(const std::vector<double>& row);

double proxy_recall(const Tuning& tuning, const std::vector<ConvexLossCurve>& curves);

// Bundle persisted by the stats phase; the complete tuner input contract.
struct RecallStats {
  Index m = 0, n = 0, k = 0, n_q = 0;
  double floor = 0.5;
  Metric metric = Metric::kSquaredEuclidean;
  std::vector<std::int64_t> footprints;
  std::int64_t dataset_bytes = 0;
  std::uint64_t hierarchy_digest = 0;
  LossMatrix loss;
  std::vector<ConvexLossCurve> curves;
};

RecallStats compute_stats(const QuantizationHierarchy& h, const QuerySet& qs,
                          const GroundTruth& gt, double floor = 0.5,
                          std::uint64_t hierarchy_digest = 0);

void save_stats(const std::filesystem::path& dir, const RecallStats& stats);
RecallStats load_stats(const std::filesystem::path& dir);

}  // namespace qtune
