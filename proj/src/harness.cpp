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

#include "qtune/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>

namespace qtune::harness {

namespace {

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::vector<Index> seeded_permutation(Index count, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<std::size_t>(count));
  std::iota(perm.begin(), perm.end(), Index(0));
  std::mt19937_64 rng(seed ^ 0x1f3d5b79a2c4e6f8ull);
  for (Index i = count - 1; i > 0; --i) {
    const Index j = Index(rng() % std::uint64_t(i + 1));
    std::swap(perm[std::size_t(i)], perm[std::size_t(j)]);
  }
  return perm;
}

QuerySet gather_queries(const QuerySet& qs, const std::vector<Index>& rows, std::size_t begin,
                        std::size_t end) {
  QuerySet out;
  out.queries.resize(Index(end - begin), qs.dim());
  for (std::size_t i = begin; i < end; ++i) {
    out.queries.row(Index(i - begin)) = qs.queries.row(rows[i]);
  }
  return out;
}

std::vector<std::int64_t> log_spaced(std::int64_t lo, std::int64_t hi, Index count) {
  std::vector<std::int64_t> values;
  if (lo > hi) return values;
  const double a = std::log(double(std::max<std::int64_t>(lo, 1)));
  const double b = std::log(double(std::max<std::int64_t>(hi, 1)));
  for (Index i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : double(i) / double(count - 1);
    values.push_back(std::llround(std::exp(a + (b - a) * f)));
  }
  values.front() = lo;
  values.back() = hi;
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

GroundTruth ground_truth_for(const QuantizationHierarchy& h, const QuerySet& qs, Index k) {
  Dataset ds;
  ds.vectors = h.data;
  ds.kind = h.element_kind;
  return compute_ground_truth(ds, qs, k, h.metric);
}

}  // namespace

SplitQueries split_queries(const QuerySet& qs, double train_fraction, std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw InvalidArgument("split_queries: fraction must be in (0, 1)");
  }
  const auto perm = seeded_permutation(qs.count(), seed);
  const auto cut = std::size_t(std::llround(train_fraction * double(qs.count())));
  SplitQueries split;
  split.train = gather_queries(qs, perm, 0, cut);
  split.holdout = gather_queries(qs, perm, cut, perm.size());
  return split;
}

std::vector<std::string> preset_names() {
  return {"desk3", "desk5", "shallow-small", "shallow-large", "deep1b"};
}

HierarchyConfig preset_config(const std::string& name, Index n, Index d, Metric metric,
                              std::uint64_t seed) {
  HierarchyConfig cfg;
  cfg.metric = metric;
  cfg.seed = seed;
  cfg.keep_exact = true;

  const auto vq_level = [](Index centroids, int iterations) {
    LevelConfig lc;
    lc.kind = LevelKind::kVqBroadcast;
    lc.centroids = centroids;
    lc.store = CentroidStore::kInt8;
    lc.iterations = iterations;
    return lc;
  };
  const auto pq_level = [](Index dims_per_block, int bits, Index train_sample) {
    LevelConfig lc;
    lc.kind = LevelKind::kPq;
    lc.dims_per_block = dims_per_block;
    lc.bits = bits;
    lc.train_sample = train_sample;
    return lc;
  };

  const Index fine = std::max<Index>(8, n / 64);
  const Index coarse = std::max<Index>(8, fine / 16);
  const Index data_dpb = std::max<Index>(2, d / 8);
  const Index table_dpb = std::max<Index>(2, d / 6);

  if (name == "desk3") {
    cfg.levels = {vq_level(fine, 12), pq_level(data_dpb, 8, 16384)};
  } else if (name == "desk5") {
    cfg.levels = {pq_level(table_dpb, 4, 0), vq_level(coarse, 12), pq_level(table_dpb, 4, 0),
                  vq_level(fine, 12), pq_level(data_dpb, 8, 16384)};
  } else if (name == "shallow-small") {
    cfg.levels = {vq_level(std::max<Index>(8, n / 1024), 12), pq_level(data_dpb, 8, 16384)};
  } else if (name == "shallow-large") {
    cfg.levels = {vq_level(std::max<Index>(8, n / 16), 12), pq_level(data_dpb, 8, 16384)};
  } else if (name == "deep1b") {
    cfg.levels = {pq_level(4, 4, 0), vq_level(40000, 0), pq_level(3, 4, 0),
                  vq_level(4000000, 0), pq_level(1, 4, 0)};
    cfg.keep_exact = false;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  return cfg;
}

double pearson_r2(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidArgument("pearson_r2: need matched samples");
  }
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  const double cov = sxy - sx * sy / n;
  const double vx = sxx - sx * sx / n;
  const double vy = syy - sy * sy / n;
  if (vx <= 0.0 || vy <= 0.0) return 0.0;
  return (cov * cov) / (vx * vy);
}

std::vector<Tuning> expand_grid(const GridSpec& spec, Index levels, Index k) {
  if (Index(spec.level_values.size()) != levels - 1) {
    throw InvalidArgument("grid spec must cover the m-1 tunable levels");
  }
  std::vector<Tuning> grid;
  Tuning current;
  current.t.assign(std::size_t(levels), 0);

  const auto emit_last = [&](std::int64_t upper) {
    if (spec.last_level_values.empty()) {
      current.t[std::size_t(levels - 1)] = upper;  // inherit
      grid.push_back(current);
      return;
    }
    for (const std::int64_t v : spec.last_level_values) {
      if (v >= k && v <= upper) {
        current.t[std::size_t(levels - 1)] = v;
        grid.push_back(current);
      }
    }
  };

  const std::function<void(Index, std::int64_t)> recurse = [&](Index level,
                                                               std::int64_t upper) {
    if (grid.size() > 100000) throw InvalidArgument("grid too large (over 100000 cells)");
    if (level == levels - 1) {
      emit_last(upper);
      return;
    }
    for (const std::int64_t v : spec.level_values[std::size_t(level)]) {
      if (v >= k && v <= upper) {
        current.t[std::size_t(level)] = v;
        recurse(level + 1, v);
      }
    }
  };
  recurse(0, std::numeric_limits<std::int64_t>::max());
  if (grid.size() > 100000) throw InvalidArgument("grid too large (over 100000 cells)");
  return grid;
}

GridSpec default_grid(Index n, Index levels, Index k, Index target_cells) {
  if (levels < 2) throw InvalidArgument("default_grid: need at least two levels");
  GridSpec spec;
  const Index tunable = levels - 1;
  const Index per_level =
      std::max<Index>(3, Index(std::ceil(std::pow(double(target_cells) * 2.0,
                                                  1.0 / double(tunable)))));
  for (Index i = 0; i < tunable; ++i) {
    // Deeper levels narrow; spans shrink by powers of four.
    const std::int64_t hi = std::max<std::int64_t>(k * 2, n / (4 << (2 * i)));
    const std::int64_t lo = std::max<std::int64_t>(k, hi / 256);
    spec.level_values.push_back(log_spaced(lo, hi, per_level));
  }
  return spec;
}

GridReport run_grid_parity(const QuantizationHierarchy& h, const QuerySet& tuning_qs,
                           const GroundTruth& tuning_gt, const QuerySet& eval_qs,
                           const GroundTruth& eval_gt, Index k,
                           const std::vector<Tuning>& grid, int threads) {
  GridReport report;

  Timer stats_timer;
  const RecallStats stats = compute_stats(h, tuning_qs, tuning_gt);
  report.stats_seconds = stats_timer.seconds();

  Timer solve_timer;
  const TradeoffSolver solver(stats.curves, CostModel::from_stats(stats), k);
  report.solve_seconds = solve_timer.seconds();

  report.grid_rows = bench(h, grid, eval_qs, eval_gt, k, threads, /*timing_repeats=*/0);

  // Empirical Pareto subset of the grid under (modeled cost, recall).
  std::vector<std::size_t> order(report.grid_rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = report.grid_rows[a];
    const auto& rb = report.grid_rows[b];
    return ra.modeled_cost != rb.modeled_cost ? ra.modeled_cost < rb.modeled_cost
                                              : ra.recall_arithmetic > rb.recall_arithmetic;
  });
  double best_recall = -1.0;
  for (const std::size_t idx : order) {
    if (report.grid_rows[idx].recall_arithmetic > best_recall) {
      best_recall = report.grid_rows[idx].recall_arithmetic;
      report.pareto_cells.push_back(idx);
    }
  }

  // The tuner answers each Pareto point at the same or lower modeled cost.
  std::vector<Tuning> tuner_tunings;
  std::vector<std::size_t> point_to_tuning;
  Timer tune_timer;
  for (const std::size_t idx : report.pareto_cells) {
    const Tuning t = tune_for_cost(report.grid_rows[idx].modeled_cost, solver);
    std::size_t found = tuner_tunings.size();
    for (std::size_t i = 0; i < tuner_tunings.size(); ++i) {
      if (tuner_tunings[i].t == t.t) {
        found = i;
        break;
      }
    }
    if (found == tuner_tunings.size()) tuner_tunings.push_back(t);
    point_to_tuning.push_back(found);
  }
  report.solve_seconds += tune_timer.seconds();

  const auto tuner_rows =
      bench(h, tuner_tunings, eval_qs, eval_gt, k, threads, /*timing_repeats=*/0);
  for (std::size_t p = 0; p < report.pareto_cells.size(); ++p) {
    const auto& grid_row = report.grid_rows[report.pareto_cells[p]];
    const auto& tuner_row = tuner_rows[point_to_tuning[p]];
    ParityPoint point;
    point.grid_tuning = grid_row.tuning;
    point.grid_cost = grid_row.modeled_cost;
    point.grid_recall = grid_row.recall_arithmetic;
    point.tuner_tuning = tuner_row.tuning;
    point.tuner_cost = tuner_row.modeled_cost;
    point.tuner_recall = tuner_row.recall_arithmetic;
    point.recall_gap = point.grid_recall - point.tuner_recall;
    report.max_recall_gap = std::max(report.max_recall_gap, point.recall_gap);
    report.parity.push_back(std::move(point));
  }
  return report;
}

ModelAccuracyReport run_model_accuracy(const QuantizationHierarchy& h, const RecallStats& stats,
                                       const QuerySet& eval_qs, const GroundTruth& eval_gt,
                                       Index k, Index tuning_count, int threads,
                                       int timing_repeats) {
  const TradeoffSolver solver(stats.curves, CostModel::from_stats(stats), k);
  const auto frontier = pareto_frontier(solver);
  if (Index(frontier.size()) < 2) throw InvalidArgument("frontier too small for model accuracy");

  // Evenly spaced frontier entries by cost.
  std::vector<std::size_t> picks;
  const Index want = std::min<Index>(tuning_count, Index(frontier.size()));
  for (Index i = 0; i < want; ++i) {
    picks.push_back(std::size_t((double(i) / double(want - 1)) * double(frontier.size() - 1)));
  }
  picks.erase(std::unique(picks.begin(), picks.end()), picks.end());

  ModelAccuracyReport report;
  std::vector<Tuning> tunings;
  for (const std::size_t p : picks) {
    tunings.push_back(frontier[p].tuning);
    report.modeled_recalls.push_back(frontier[p].proxy_recall);
    report.modeled_costs.push_back(frontier[p].cost_value);
  }
  report.rows = bench(h, tunings, eval_qs, eval_gt, k, threads, timing_repeats);

  std::vector<double> empirical, seconds;
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& row = report.rows[i];
    empirical.push_back(row.recall_arithmetic);
    seconds.push_back(row.seconds_per_query);
    const double modeled_bytes =
        modeled_bytes_per_query(h.footprints(), h.point_count(), row.tuning);
    report.max_bytes_error =
        std::max(report.max_bytes_error, std::abs(row.bytes_per_query - modeled_bytes));
  }
  report.recall_r2 = pearson_r2(report.modeled_recalls, empirical);
  report.time_r2 = timing_repeats > 0 ? pearson_r2(report.modeled_costs, seconds) : 0.0;
  return report;
}

std::vector<OosBudgetRow> run_out_of_sample(const QuantizationHierarchy& h, const QuerySet& qs,
                                            Index k, const std::vector<double>& budgets,
                                            std::uint64_t seed, int threads) {
  const SplitQueries split = split_queries(qs, 0.5, seed);
  const GroundTruth gt_train = ground_truth_for(h, split.train, k);
  const GroundTruth gt_holdout = ground_truth_for(h, split.holdout, k);

  const RecallStats stats_train = compute_stats(h, split.train, gt_train);
  const RecallStats stats_holdout = compute_stats(h, split.holdout, gt_holdout);
  const TradeoffSolver solver_train(stats_train.curves, CostModel::from_stats(stats_train), k);
  const TradeoffSolver solver_holdout(stats_holdout.curves,
                                      CostModel::from_stats(stats_holdout), k);

  std::vector<OosBudgetRow> rows;
  for (const double budget : budgets) {
    const Tuning out_t = tune_for_cost(budget, solver_train);     // trained off-split
    const Tuning in_t = tune_for_cost(budget, solver_holdout);    // trained on eval split
    const auto benched = bench(h, {out_t, in_t}, split.holdout, gt_holdout, k, threads, 0);
    OosBudgetRow row;
    row.budget = budget;
    row.out_of_sample_recall = benched[0].recall_arithmetic;
    row.in_sample_recall = benched[1].recall_arithmetic;
    row.delta = std::abs(row.in_sample_recall - row.out_of_sample_recall);
    rows.push_back(row);
  }
  return rows;
}

std::vector<SampleSizeRow> run_sample_size_study(const QuantizationHierarchy& h,
                                                 const QuerySet& pool,
                                                 const QuerySet& holdout_qs,
                                                 const GroundTruth& holdout_gt, Index k,
                                                 const std::vector<Index>& sizes, Index replicas,
                                                 const std::vector<double>& budgets,
                                                 int threads) {
  Index needed = 0;
  for (const Index size : sizes) needed += size * replicas;
  if (needed > pool.count()) throw InvalidArgument("sample study: query pool too small");

  std::vector<SampleSizeRow> rows;
  Index cursor = 0;
  for (const Index size : sizes) {
    std::vector<std::vector<double>> recalls(budgets.size());
    for (Index rep = 0; rep < replicas; ++rep) {
      QuerySet sample;
      sample.queries = pool.queries.middleRows(cursor, size);
      cursor += size;
      const GroundTruth sample_gt = ground_truth_for(h, sample, k);
      const RecallStats stats = compute_stats(h, sample, sample_gt);
      const TradeoffSolver solver(stats.curves, CostModel::from_stats(stats), k);
      std::vector<Tuning> tunings;
      for (const double budget : budgets) tunings.push_back(tune_for_cost(budget, solver));
      const auto benched = bench(h, tunings, holdout_qs, holdout_gt, k, threads, 0);
      for (std::size_t b = 0; b < budgets.size(); ++b) {
        recalls[b].push_back(benched[b].recall_arithmetic);
      }
    }
    for (std::size_t b = 0; b < budgets.size(); ++b) {
      SampleSizeRow row;
      row.sample_size = size;
      row.budget = budgets[b];
      row.recalls = recalls[b];
      double mean = 0.0;
      for (const double r : row.recalls) mean += r;
      mean /= double(row.recalls.size());
      double var = 0.0;
      for (const double r : row.recalls) var += (r - mean) * (r - mean);
      var /= double(row.recalls.size() - 1);
      row.mean = mean;
      row.stddev = std::sqrt(var);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<double> spread_budgets(const std::vector<FrontierEntry>& frontier, Index count) {
  if (frontier.empty()) throw InvalidArgument("spread_budgets: empty frontier");
  std::vector<double> budgets;
  const double lo = frontier.front().cost_value;
  const double hi = frontier.back().cost_value;
  for (Index i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.5 : double(i) / double(count - 1);
    budgets.push_back(lo + (hi - lo) * f);
  }
  return budgets;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << header[i] << (i + 1 < header.size() ? "," : "\n");
  }
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << row[i] << (i + 1 < row.size() ? "," : "\n");
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::string> bench_csv_header(Index levels) {
  std::vector<std::string> header{"tuning_id"};
  for (Index i = 1; i <= levels; ++i) header.push_back("t_" + std::to_string(i));
  header.insert(header.end(), {"modeled_cost", "bytes_per_query", "recall_at_k", "qps"});
  return header;
}

std::vector<std::string> bench_csv_row(std::size_t id, const BenchRow& row) {
  std::vector<std::string> cells{std::to_string(id)};
  for (const std::int64_t t : row.tuning.t) cells.push_back(std::to_string(t));
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", row.modeled_cost);
  cells.push_back(buf);
  std::snprintf(buf, sizeof(buf), "%.17g", row.bytes_per_query);
  cells.push_back(buf);
  std::snprintf(buf, sizeof(buf), "%.6f", row.recall_arithmetic);
  cells.push_back(buf);
  std::snprintf(buf, sizeof(buf), "%.3f", row.qps);
  cells.push_back(buf);
  return cells;
}

}  // namespace qtune::harness
