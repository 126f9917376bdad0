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

#include "qtune/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qtune {

CostModel CostModel::from_footprints(const std::vector<std::int64_t>& footprints, Index n,
                                     std::int64_t dataset_bytes) {
  if (footprints.empty()) throw InvalidArgument("cost model: no levels");
  if (n < 1 || dataset_bytes < 1) throw InvalidArgument("cost model: bad dataset shape");
  CostModel cm;
  cm.footprints = footprints;
  cm.n = n;
  cm.dataset_bytes = dataset_bytes;
  cm.a0 = double(footprints[0]) / double(dataset_bytes);
  for (std::size_t i = 1; i < footprints.size(); ++i) {
    cm.a.push_back(double(footprints[i]) / (double(n) * double(dataset_bytes)));
  }
  return cm;
}

CostModel CostModel::from_stats(const RecallStats& stats) {
  return from_footprints(stats.footprints, stats.n, stats.dataset_bytes);
}

double cost(const Tuning& tuning, const CostModel& cm) {
  if (tuning.size() != cm.level_count()) throw InvalidArgument("cost: tuning length mismatch");
  double j = cm.a0;
  for (std::size_t i = 0; i < cm.a.size(); ++i) j += cm.a[i] * double(tuning.t[i]);
  return j;
}

double batched_cost(const Tuning& tuning, double batch_size, double rho, const CostModel& cm) {
  if (tuning.size() != cm.level_count()) {
    throw InvalidArgument("batched_cost: tuning length mismatch");
  }
  if (batch_size < 1.0) throw InvalidArgument("batched_cost: batch size must be >= 1");
  if (rho <= 0.0) throw InvalidArgument("batched_cost: rho must be positive");
  double total = 0.0;
  for (Index i = 0; i < cm.level_count(); ++i) {
    const double alpha =
        (i == 0) ? 1.0 : double(tuning.t[std::size_t(i - 1)]) / double(cm.n);
    const double share = std::max(alpha * batch_size / rho, std::min(1.0, alpha * batch_size));
    total += share * double(cm.footprints[std::size_t(i)]);
  }
  return total / double(cm.dataset_bytes);
}

TradeoffSolver::TradeoffSolver(std::vector<ConvexLossCurve> curves, CostModel cm,
                               std::int64_t t_min)
    : curves_(std::move(curves)), cm_(std::move(cm)), t_min_(t_min) {
  const Index m = Index(curves_.size());
  if (m < 1) throw InvalidArgument("solver: no loss curves");
  if (cm_.level_count() != m) throw InvalidArgument("solver: cost model level mismatch");
  const std::int64_t n = cm_.n;
  if (t_min_ < 0 || t_min_ > n) throw InvalidArgument("solver: infeasible minimum depth");
  for (const auto& curve : curves_) {
    if (curve.min_depth() > t_min_ || curve.max_depth() < n) {
      throw InvalidArgument("solver: loss curve does not cover the depth range");
    }
  }

  cols_.push_back(t_min_);
  cols_.push_back(n);
  for (const auto& curve : curves_) {
    for (const std::int64_t knot : curve.knots) {
      if (knot > t_min_ && knot < n) cols_.push_back(knot);
    }
  }
  std::sort(cols_.begin(), cols_.end());
  cols_.erase(std::unique(cols_.begin(), cols_.end()), cols_.end());

  const Index cols = Index(cols_.size());
  hull_prefix_.resize(m + 1, cols);
  hull_prefix_.row(0).setZero();
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < cols; ++j) {
      hull_prefix_(i + 1, j) =
          hull_prefix_(i, j) + curves_[std::size_t(i)].value_at(cols_[std::size_t(j)]);
    }
  }
  cost_prefix_.assign(std::size_t(m) + 1, 0.0);
  for (Index i = 0; i < m; ++i) {
    cost_prefix_[std::size_t(i) + 1] = cost_prefix_[std::size_t(i)] + level_coefficient(i);
  }
}

double TradeoffSolver::level_coefficient(Index level) const {
  return level + 1 < level_count() ? cm_.a[std::size_t(level)] : 0.0;
}

double TradeoffSolver::min_cost() const {
  Tuning floor_tuning;
  floor_tuning.t.assign(std::size_t(level_count()), t_min_);
  return cost(floor_tuning, cm_);
}

double TradeoffSolver::evaluate_objective(const Tuning& tuning, double lambda) const {
  double total = 0.0;
  for (Index i = 0; i < level_count(); ++i) {
    total += curves_[std::size_t(i)].value_at(tuning.t[std::size_t(i)]) +
             lambda * level_coefficient(i) * double(tuning.t[std::size_t(i)]);
  }
  return total;
}

double TradeoffSolver::loss_sum(const Tuning& tuning) const {
  double total = 0.0;
  for (Index i = 0; i < level_count(); ++i) {
    total += curves_[std::size_t(i)].value_at(tuning.t[std::size_t(i)]);
  }
  return total;
}

SolveResult TradeoffSolver::finish(std::vector<std::size_t> choice_cols, double lambda) const {
  SolveResult result;
  result.tuning.t.resize(choice_cols.size());
  for (std::size_t i = 0; i < choice_cols.size(); ++i) {
    result.tuning.t[i] = cols_[choice_cols[i]];
  }
  result.objective = evaluate_objective(result.tuning, lambda);
  result.loss_sum = loss_sum(result.tuning);
  result.cost_value = cost(result.tuning, cm_);
  return result;
}

SolveResult TradeoffSolver::solve_basic(double lambda) const {
  const Index m = level_count();
  const std::size_t cols = cols_.size();
  const auto m_value = [&](Index level, std::size_t j) {
    return hull_prefix_(level + 1, Index(j)) - hull_prefix_(level, Index(j)) +
           lambda * level_coefficient(level) * double(cols_[j]);
  };

  std::vector<double> prev(cols, 0.0);  // running minima over levels so far
  std::vector<double> cur(cols, 0.0);
  std::vector<std::vector<char>> take(std::size_t(m), std::vector<char>(cols, 0));
  for (Index i = 0; i < m; ++i) {
    for (std::size_t j = cols; j-- > 0;) {
      const double take_here = m_value(i, j) + prev[j];
      const double skip = (j + 1 < cols) ? cur[j + 1] : std::numeric_limits<double>::infinity();
      if (skip <= take_here) {
        cur[j] = skip;
      } else {
        cur[j] = take_here;
        take[std::size_t(i)][j] = 1;
      }
    }
    prev = cur;
  }

  std::vector<std::size_t> choice(std::size_t(m), 0);
  std::size_t j = 0;
  for (Index i = m; i-- > 0;) {  // levels m..1; deeper levels pick first
    while (!take[std::size_t(i)][j]) ++j;
    choice[std::size_t(i)] = j;
  }
  return finish(std::move(choice), lambda);
}

namespace {

struct Component {
  std::size_t left = 0;  // first column covered
  Index run = 0;         // number of most recent level rows summed
  double offset = 0.0;
};

}  // namespace

SolveResult TradeoffSolver::solve_fast(double lambda) const {
  const Index m = level_count();
  const std::size_t cols = cols_.size();

  std::vector<Component> comps{{0, 0, 0.0}};
  const auto prev_minima = [&](Index level, std::size_t j) {
    // Value of the running minima after `level` rows, at column j.
    std::size_t lo = 0, hi = comps.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi + 1) / 2;
      if (comps[mid].left <= j) lo = mid;
      else hi = mid - 1;
    }
    const Component& c = comps[lo];
    if (c.run == 0) return c.offset;
    return c.offset + hull_prefix_(level, Index(j)) - hull_prefix_(level - c.run, Index(j)) +
           lambda * double(cols_[j]) *
               (cost_prefix_[std::size_t(level)] - cost_prefix_[std::size_t(level - c.run)]);
  };

  std::vector<std::size_t> j_star(std::size_t(m), 0);
  for (Index i = 0; i < m; ++i) {
    const auto g = [&](std::size_t j) {
      return hull_prefix_(i + 1, Index(j)) - hull_prefix_(i, Index(j)) +
             lambda * level_coefficient(i) * double(cols_[j]) + prev_minima(i, j);
    };
    // Rightmost minimum of the convex g: first column whose forward
    // difference turns strictly positive.
    std::size_t ans = cols - 1;
    std::size_t lo = 0, hi = cols >= 2 ? cols - 2 : 0;
    while (cols >= 2 && lo <= hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (g(mid + 1) > g(mid)) {
        ans = mid;
        if (mid == 0) break;
        hi = mid - 1;
      } else {
        lo = mid + 1;
      }
    }
    j_star[std::size_t(i)] = ans;

    std::vector<Component> next;
    if (ans > 0) next.push_back({0, 0, g(ans)});
    for (const Component& c : comps) {
      const std::size_t end =
          (&c == &comps.back()) ? cols : (&c + 1)->left;  // exclusive column bound
      if (end <= ans) continue;
      next.push_back({std::max(c.left, ans), c.run + 1, c.offset});
    }
    comps = std::move(next);
  }

  std::vector<std::size_t> choice(std::size_t(m), 0);
  std::size_t floor_col = 0;
  for (Index i = m; i-- > 0;) {
    floor_col = std::max(floor_col, j_star[std::size_t(i)]);
    choice[std::size_t(i)] = floor_col;
  }
  return finish(std::move(choice), lambda);
}

MatD TradeoffSolver::dp_table_basic(double lambda) const {
  const Index m = level_count();
  const std::size_t cols = cols_.size();
  if (cols > 4096) throw InvalidArgument("dp audit limited to small grids");
  MatD table(m, Index(cols));
  std::vector<double> prev(cols, 0.0);
  std::vector<double> cur(cols, 0.0);
  for (Index i = 0; i < m; ++i) {
    for (std::size_t j = cols; j-- > 0;) {
      const double take_here = hull_prefix_(i + 1, Index(j)) - hull_prefix_(i, Index(j)) +
                               lambda * level_coefficient(i) * double(cols_[j]) + prev[j];
      const double skip = (j + 1 < cols) ? cur[j + 1] : std::numeric_limits<double>::infinity();
      cur[j] = std::min(skip, take_here);
      table(i, Index(j)) = cur[j];
    }
    prev = cur;
  }
  return table;
}

MatD TradeoffSolver::dp_table_fast(double lambda) const {
  const Index m = level_count();
  const std::size_t cols = cols_.size();
  if (cols > 4096) throw InvalidArgument("dp audit limited to small grids");
  MatD table(m, Index(cols));

  std::vector<Component> comps{{0, 0, 0.0}};
  const auto prev_minima = [&](Index level, std::size_t j) {
    std::size_t lo = 0, hi = comps.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi + 1) / 2;
      if (comps[mid].left <= j) lo = mid;
      else hi = mid - 1;
    }
    const Component& c = comps[lo];
    if (c.run == 0) return c.offset;
    return c.offset + hull_prefix_(level, Index(j)) - hull_prefix_(level - c.run, Index(j)) +
           lambda * double(cols_[j]) *
               (cost_prefix_[std::size_t(level)] - cost_prefix_[std::size_t(level - c.run)]);
  };

  for (Index i = 0; i < m; ++i) {
    const auto g = [&](std::size_t j) {
      return hull_prefix_(i + 1, Index(j)) - hull_prefix_(i, Index(j)) +
             lambda * level_coefficient(i) * double(cols_[j]) + prev_minima(i, j);
    };
    std::size_t ans = cols - 1;
    std::size_t lo = 0, hi = cols >= 2 ? cols - 2 : 0;
    while (cols >= 2 && lo <= hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (g(mid + 1) > g(mid)) {
        ans = mid;
        if (mid == 0) break;
        hi = mid - 1;
      } else {
        lo = mid + 1;
      }
    }
    std::vector<Component> next;
    if (ans > 0) next.push_back({0, 0, g(ans)});
    for (const Component& c : comps) {
      const std::size_t end = (&c == &comps.back()) ? cols : (&c + 1)->left;
      if (end <= ans) continue;
      next.push_back({std::max(c.left, ans), c.run + 1, c.offset});
    }
    comps = std::move(next);
    for (std::size_t j = 0; j < cols; ++j) table(i, Index(j)) = prev_minima(i + 1, j);
  }
  return table;
}

std::vector<double> TradeoffSolver::candidate_lambdas() const {
  std::vector<double> out;
  for (Index i = 0; i + 1 < level_count(); ++i) {
    const double coef = level_coefficient(i);
    if (coef <= 0.0) continue;
    for (const double slope : curves_[std::size_t(i)].slopes) {
      out.push_back(std::abs(slope) / coef);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> TradeoffSolver::probe_lambdas() const {
  const std::vector<double> cands = candidate_lambdas();
  std::vector<double> probes{0.0};
  for (std::size_t i = 0; i + 1 < cands.size(); ++i) {
    probes.push_back(0.5 * (cands[i] + cands[i + 1]));
  }
  if (!cands.empty()) probes.push_back(cands.back() * 2.0 + 1.0);
  return probes;
}

Tuning tune_for_cost(double j_max, const TradeoffSolver& solver) {
  if (j_max < solver.min_cost() * (1.0 - 1e-12)) {
    throw InvalidArgument("tune_for_cost: budget below the minimal feasible cost");
  }
  const auto probes = solver.probe_lambdas();
  const auto feasible = [&](const SolveResult& r) { return r.cost_value <= j_max; };

  SolveResult at_zero = solver.solve_fast(probes.front());
  if (feasible(at_zero)) return at_zero.tuning;

  // First feasible probe index; cost is non-increasing along probes.
  std::size_t lo = 1, hi = probes.size() - 1, first = probes.size() - 1;
  SolveResult best = solver.solve_fast(probes.back());
  while (lo <= hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    SolveResult r = solver.solve_fast(probes[mid]);
    if (feasible(r)) {
      best = std::move(r);
      first = mid;
      if (mid == 0) break;
      hi = mid - 1;
    } else {
      lo = mid + 1;
    }
  }
  // Bisect inside the bracketing interval: joint-level thresholds can fall
  // between candidate multipliers, so the boundary is located numerically.
  double left = probes[first - 1];
  double right = probes[first];
  for (int it = 0; it < 64 && right - left > 1e-15 * (1.0 + right); ++it) {
    const double mid = 0.5 * (left + right);
    SolveResult r = solver.solve_fast(mid);
    if (feasible(r)) {
      best = std::move(r);
      right = mid;
    } else {
      left = mid;
    }
  }
  return best.tuning;
}

Tuning tune_for_recall(double loss_max, const TradeoffSolver& solver) {
  const auto probes = solver.probe_lambdas();
  const auto feasible = [&](const SolveResult& r) { return r.loss_sum <= loss_max; };

  SolveResult at_zero = solver.solve_fast(probes.front());
  if (!feasible(at_zero)) {
    throw InvalidArgument("tune_for_recall: loss target below the attainable minimum");
  }
  // Last feasible probe index; loss is non-decreasing along probes.
  std::size_t lo = 0, hi = probes.size() - 1, last = 0;
  SolveResult best = std::move(at_zero);
  while (lo <= hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    SolveResult r = solver.solve_fast(probes[mid]);
    if (feasible(r)) {
      best = std::move(r);
      last = mid;
      lo = mid + 1;
    } else {
      if (mid == 0) break;
      hi = mid - 1;
    }
  }
  if (last + 1 < probes.size()) {
    double left = probes[last];
    double right = probes[last + 1];
    for (int it = 0; it < 64 && right - left > 1e-15 * (1.0 + right); ++it) {
      const double mid = 0.5 * (left + right);
      SolveResult r = solver.solve_fast(mid);
      if (feasible(r)) {
        best = std::move(r);
        left = mid;
      } else {
        right = mid;
      }
    }
  }
  return best.tuning;
}

std::vector<FrontierEntry> pareto_frontier(const TradeoffSolver& solver) {
  struct Probe {
    double lambda;
    SolveResult result;
  };
  const auto probes = solver.probe_lambdas();
  std::vector<Probe> solved;
  solved.reserve(probes.size());
  for (const double lambda : probes) {
    solved.push_back({lambda, solver.solve_fast(lambda)});
  }

  // Refine gaps where adjacent probes disagree; intermediate vertices may
  // sit between candidate multipliers.
  std::size_t budget = 4 * probes.size() + 64;
  for (std::size_t i = 0; i + 1 < solved.size() && budget > 0;) {
    const auto& a = solved[i];
    const auto& b = solved[i + 1];
    if (a.result.tuning.t == b.result.tuning.t ||
        b.lambda - a.lambda <= 1e-12 * (1.0 + b.lambda)) {
      ++i;
      continue;
    }
    const double mid = 0.5 * (a.lambda + b.lambda);
    SolveResult r = solver.solve_fast(mid);
    --budget;
    if (r.tuning.t == a.result.tuning.t || r.tuning.t == b.result.tuning.t) {
      ++i;
      continue;
    }
    solved.insert(solved.begin() + std::ptrdiff_t(i) + 1, {mid, std::move(r)});
  }

  std::vector<FrontierEntry> frontier;
  for (const auto& probe : solved) {
    FrontierEntry entry;
    entry.lambda = probe.lambda;
    entry.tuning = probe.result.tuning;
    entry.loss_sum = probe.result.loss_sum;
    entry.cost_value = probe.result.cost_value;
    entry.proxy_recall = std::exp(-probe.result.loss_sum);
    const bool duplicate =
        !frontier.empty() && frontier.back().tuning.t == entry.tuning.t;
    if (!duplicate) frontier.push_back(std::move(entry));
  }
  std::sort(frontier.begin(), frontier.end(),
            [](const FrontierEntry& x, const FrontierEntry& y) {
              return x.cost_value != y.cost_value ? x.cost_value < y.cost_value
                                                  : x.loss_sum < y.loss_sum;
            });
  // With cost ascending, an entry survives only if it strictly improves loss.
  std::vector<FrontierEntry> clean;
  for (auto& entry : frontier) {
    if (clean.empty() || entry.loss_sum < clean.back().loss_sum) {
      clean.push_back(std::move(entry));
    }
  }
  return clean;
}

Tuning tune_for_cost(double j_max, const std::vector<ConvexLossCurve>& curves,
                     const CostModel& cm, std::int64_t t_min) {
  return tune_for_cost(j_max, TradeoffSolver(curves, cm, t_min));
}

Tuning tune_for_recall(double loss_max, const std::vector<ConvexLossCurve>& curves,
                       const CostModel& cm, std::int64_t t_min) {
  return tune_for_recall(loss_max, TradeoffSolver(curves, cm, t_min));
}

}  // namespace qtune
