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

#include "qtune/stats.hpp"

namespace qtune {

// Linear per-level read-cost coefficients. The entry level is always read in
// full (a0); level i's retained candidates charge the next level's per-point
// share; the final level adds no marginal cost.
struct CostModel {
  double a0 = 0.0;
  std::vector<double> a;  // size m-1, a[i] multiplies t_{i+1 in 1-based terms}
  Index n = 0;
  std::int64_t dataset_bytes = 0;
  std::vector<std::int64_t> footprints;

  Index level_count() const { return Index(footprints.size()); }

  static CostModel from_footprints(const std::vector<std::int64_t>& footprints, Index n,
                                   std::int64_t dataset_bytes);
  static CostModel from_stats(const RecallStats& stats);
};

// Fraction of a brute-force scan's memory traffic, as a function of t.
double cost(const Tuning& tuning, const CostModel& cm);

// Roofline variant for batched querying: each level pays the larger of its
// arithmetic share and its (capped) bandwidth share.
double batched_cost(const Tuning& tuning, double batch_size, double rho, const CostModel& cm);

struct SolveResult {
  Tuning tuning;
  double objective = 0.0;  // sum of hull value + lambda * coefficient * t
  double loss_sum = 0.0;
  double cost_value = 0.0;
};

// Minimizes sum_i [hull_i(t_i) + lambda * a_i * t_i] subject to
// t_1 >= ... >= t_m >= t_min over the shared grid of hull breakpoint depths.
// Ties prefer larger t (the rightmost row minimum). solve_basic is the
// O(N*m) reference recurrence; solve_fast maintains the piecewise-component
// representation of the running row minima and answers in O(m log N) using
// prefix sums prepared once at construction.
class TradeoffSolver {
 public:
  TradeoffSolver(std::vector<ConvexLossCurve> curves, CostModel cm, std::int64_t t_min);

  Index level_count() const { return Index(curves_.size()); }
  const std::vector<std::int64_t>& columns() const { return cols_; }
  const CostModel& cost_model() const { return cm_; }
  const std::vector<ConvexLossCurve>& curves() const { return curves_; }
  std::int64_t min_depth() const { return t_min_; }
  double min_cost() const;

  SolveResult solve_basic(double lambda) const;
  SolveResult solve_fast(double lambda) const;

  std::vector<double> candidate_lambdas() const;
  // Probe multipliers covering every region between consecutive candidates.
  std::vector<double> probe_lambdas() const;

  double evaluate_objective(const Tuning& tuning, double lambda) const;
  double loss_sum(const Tuning& tuning) const;

  // Audit hooks (tests): explicit running-minima tables, basic vs component
  // reconstruction. Only permitted for small grids.
  MatD dp_table_basic(double lambda) const;
  MatD dp_table_fast(double lambda) const;

 private:
  SolveResult finish(std::vector<std::size_t> choice_cols, double lambda) const;
  double level_coefficient(Index level) const;

  std::vector<ConvexLossCurve> curves_;
  CostModel cm_;
  std::int64_t t_min_ = 0;
  std::vector<std::int64_t> cols_;
  MatD hull_prefix_;                 // (m+1) x N
  std::vector<double> cost_prefix_;  // m+1
};

Tuning tune_for_cost(double j_max, const TradeoffSolver& solver);
Tuning tune_for_recall(double loss_max, const TradeoffSolver& solver);

struct FrontierEntry {
  double lambda = 0.0;
  Tuning tuning;
  double loss_sum = 0.0;
  double cost_value = 0.0;
  double proxy_recall = 0.0;
};

// Tunings swept over the probe multipliers, deduplicated and sorted by cost;
// gaps between adjacent distinct solutions are refined by bisection.
std::vector<FrontierEntry> pareto_frontier(const TradeoffSolver& solver);

// Convenience wrappers building a solver per call.
Tuning tune_for_cost(double j_max, const std::vector<ConvexLossCurve>& curves,
                     const CostModel& cm, std::int64_t t_min);
Tuning tune_for_recall(double loss_max, const std::vector<ConvexLossCurve>& curves,
                       const CostModel& cm, std::int64_t t_min);

}  // namespace qtune
