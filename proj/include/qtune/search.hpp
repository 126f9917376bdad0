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

#include "qtune/hierarchy.hpp"
#include "qtune/types.hpp"

namespace qtune {

struct Tuning {
  std::vector<std::int64_t> t;  // per level, non-increasing

  Index size() const { return Index(t.size()); }
};

// Throws unless t has one entry per level, is non-increasing, stays within
// [0, n], and its last entry is at least `min_last`.
void validate_tuning(const QuantizationHierarchy& h, const Tuning& tuning,
                     std::int64_t min_last = 0);

struct SearchTrace {
  std::vector<std::vector<std::int32_t>> candidates;  // per level, ascending index
  std::vector<std::int64_t> points_scored;            // per level
  std::vector<double> bytes_accessed;                 // per level

  double total_bytes() const;
};

// Progressive narrowing over the hierarchy's levels in ascending bitrate
// order. At each level the previous candidates are re-ranked under that
// level's distances and truncated to exactly t_i entries; vq_broadcast
// levels consume whole buckets in centroid-distance order, with the last
// bucket cut by ascending datapoint index. Ties elsewhere break toward the
// smaller datapoint index. The result is Cand_m sorted by
// (final-level distance, index).
std::vector<std::int32_t> quantized_search(const QuantizationHierarchy& h, const Tuning& tuning,
                                           Eigen::Ref<const Vec> query,
                                           SearchTrace* trace = nullptr);

// Top `depth` points under one level's distances alone, ties by index,
// unrestricted by other levels.
std::vector<std::int32_t> single_layer_topk(const QuantizationHierarchy& h, Index level,
                                            Eigen::Ref<const Vec> query, std::int64_t depth);

// Deterministic per-query byte accounting: the entry level is read in full
// and each deeper level is charged its per-point share for every candidate
// scored there.
double modeled_bytes_per_query(const std::vector<std::int64_t>& footprints, Index n,
                               const Tuning& tuning);

struct RecallSummary {
  std::vector<double> per_query;
  double arithmetic_mean = 0.0;
  double geometric_mean = 0.0;
};

RecallSummary evaluate_recall(const std::vector<std::vector<std::int32_t>>& results,
                              const GroundTruth& gt, Index k, double floor = 0.5);

struct BenchRow {
  Tuning tuning;
  double modeled_cost = 0.0;      // fraction of a brute-force scan
  double bytes_per_query = 0.0;   // instrumented
  double recall_arithmetic = 0.0;
  double recall_geometric = 0.0;
  double seconds_per_query = 0.0;
  double qps = 0.0;
};

// Evaluates each tuning over the query set: instrumented bytes (identical
// for every query), recall@k against gt, and wall time as the median of
// `timing_repeats` passes after one warmup pass.
std::vector<BenchRow> bench(const QuantizationHierarchy& h, const std::vector<Tuning>& tunings,
                            const QuerySet& qs, const GroundTruth& gt, Index k, int threads = 0,
                            int timing_repeats = 5);

}  // namespace qtune
