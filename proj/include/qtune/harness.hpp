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
#include <string>
#include <vector>

#include "qtune/search.hpp"
#include "qtune/stats.hpp"
#include "qtune/synthetic.hpp"
#include "qtune/tuner.hpp"

namespace qtune::harness {

// Disjoint seeded query split; train gets round(fraction * n_q) rows.
struct SplitQueries {
  QuerySet train;
  QuerySet holdout;
};
SplitQueries split_queries(const QuerySet& qs, double train_fraction, std::uint64_t seed);

// Named hierarchy shapes scaled to (n, d). "desk3" is a single vq tier over
// a dataset pq plus exact reranking; "desk5" stacks two vq tiers, each with
// a pq of its centroid table; "shallow-small"/"shallow-large" are the
// one-tier ablation shapes; "deep1b" is the billion-scale five-level layout
// (footprint accounting only at desk scale).
HierarchyConfig preset_config(const std::string& name, Index n, Index d, Metric metric,
                              std::uint64_t seed);
std::vector<std::string> preset_names();

double pearson_r2(const std::vector<double>& x, const std::vector<double>& y);

struct GridSpec {
  std::vector<std::vector<std::int64_t>> level_values;  // levels 1..m-1, each ascending
  std::vector<std::int64_t> last_level_values;          // empty = inherit t_{m-1}
};

// Monotone non-increasing tuples only; refuses more than 100000 cells.
std::vector<Tuning> expand_grid(const GridSpec& spec, Index levels, Index k);
GridSpec default_grid(Index n, Index levels, Index k, Index target_cells);

struct ParityPoint {
  Tuning grid_tuning;
  double grid_cost = 0.0;
  double grid_recall = 0.0;
  Tuning tuner_tuning;
  double tuner_cost = 0.0;
  double tuner_recall = 0.0;
  double recall_gap = 0.0;  // grid - tuner, positive means grid ahead
};

struct GridReport {
  std::vector<BenchRow> grid_rows;
  std::vector<std::size_t> pareto_cells;  // indices into grid_rows
  std::vector<ParityPoint> parity;
  double max_recall_gap = 0.0;
  double stats_seconds = 0.0;
  double solve_seconds = 0.0;
};

GridReport run_grid_parity(const QuantizationHierarchy& h, const QuerySet& tuning_qs,
                           const GroundTruth& tuning_gt, const QuerySet& eval_qs,
                           const GroundTruth& eval_gt, Index k,
                           const std::vector<Tuning>& grid, int threads);

struct ModelAccuracyReport {
  std::vector<BenchRow> rows;
  std::vector<double> modeled_recalls;
  std::vector<double> modeled_costs;
  double recall_r2 = 0.0;
  double max_bytes_error = 0.0;  // |instrumented - modeled| over all rows
  double time_r2 = 0.0;          // informational, machine dependent
};

ModelAccuracyReport run_model_accuracy(const QuantizationHierarchy& h, const RecallStats& stats,
                                       const QuerySet& eval_qs, const GroundTruth& eval_gt,
                                       Index k, Index tuning_count, int threads,
                                       int timing_repeats = 5);

struct OosBudgetRow {
  double budget = 0.0;
  double in_sample_recall = 0.0;
  double out_of_sample_recall = 0.0;
  double delta = 0.0;
};

// Train on each half, evaluate both tunings on the second half.
std::vector<OosBudgetRow> run_out_of_sample(const QuantizationHierarchy& h, const QuerySet& qs,
                                            Index k, const std::vector<double>& budgets,
                                            std::uint64_t seed, int threads);

struct SampleSizeRow {
  Index sample_size = 0;
  double budget = 0.0;
  std::vector<double> recalls;  // one per replica
  double mean = 0.0;
  double stddev = 0.0;
};

std::vector<SampleSizeRow> run_sample_size_study(const QuantizationHierarchy& h,
                                                 const QuerySet& pool,
                                                 const QuerySet& holdout_qs,
                                                 const GroundTruth& holdout_gt, Index k,
                                                 const std::vector<Index>& sizes, Index replicas,
                                                 const std::vector<double>& budgets, int threads);

// Evenly spread cost budgets across a frontier's attainable range.
std::vector<double> spread_budgets(const std::vector<FrontierEntry>& frontier, Index count);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
std::vector<std::string> bench_csv_header(Index levels);
std::vector<std::string> bench_csv_row(std::size_t id, const BenchRow& row);

}  // namespace qtune::harness
