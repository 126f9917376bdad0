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

#include "qtune/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qtune {

namespace {

using ScoredPoint = std::pair<double, std::int32_t>;

// Selection for vq_broadcast levels: rank representatives by
// (distance, rep index) and take whole buckets, cutting the last one by
// ascending member index. `members` yields each rep's candidate list.
template <typename MemberFn>
std::vector<std::int32_t> consume_buckets(const std::vector<ScoredPoint>& ranked_reps,
                                          std::int64_t want, MemberFn&& members) {
  std::vector<std::int32_t> out;
  out.reserve(std::size_t(want));
  for (const auto& [dist, rep] : ranked_reps) {
    (void)dist;
    if (std::int64_t(out.size()) >= want) break;
    const auto& bucket = members(rep);
    const std::int64_t room = want - std::int64_t(out.size());
    if (std::int64_t(bucket.size()) <= room) {
      out.insert(out.end(), bucket.begin(), bucket.end());
    } else {
      std::vector<std::int32_t> cut(bucket.begin(), bucket.end());
      std::sort(cut.begin(), cut.end());
      out.insert(out.end(), cut.begin(), cut.begin() + room);
    }
  }
  return out;
}

// Selection under the global (score, index) order for rep-shared scores:
// strictly closer reps contribute whole buckets; a tied group at the
// truncation boundary is resolved by datapoint index across the group.
template <typename MemberFn>
std::vector<std::int32_t> consume_rep_groups(const std::vector<ScoredPoint>& ranked_reps,
                                             std::int64_t want, MemberFn&& members) {
  std::vector<std::int32_t> out;
  out.reserve(std::size_t(want));
  std::size_t g = 0;
  while (g < ranked_reps.size() && std::int64_t(out.size()) < want) {
    std::size_t g_end = g + 1;
    while (g_end < ranked_reps.size() && ranked_reps[g_end].first == ranked_reps[g].first) {
      ++g_end;
    }
    std::int64_t group_total = 0;
    for (std::size_t i = g; i < g_end; ++i) {
      group_total += std::int64_t(members(ranked_reps[i].second).size());
    }
    const std::int64_t room = want - std::int64_t(out.size());
    if (group_total <= room) {
      for (std::size_t i = g; i < g_end; ++i) {
        const auto& bucket = members(ranked_reps[i].second);
        out.insert(out.end(), bucket.begin(), bucket.end());
      }
    } else {
      std::vector<std::int32_t> merged;
      merged.reserve(std::size_t(group_total));
      for (std::size_t i = g; i < g_end; ++i) {
        const auto& bucket = members(ranked_reps[i].second);
        merged.insert(merged.end(), bucket.begin(), bucket.end());
      }
      std::sort(merged.begin(), merged.end());
      out.insert(out.end(), merged.begin(), merged.begin() + room);
    }
    g = g_end;
  }
  return out;
}

std::vector<ScoredPoint> rank_reps(const LevelScorer& scorer) {
  std::vector<ScoredPoint> reps(static_cast<std::size_t>(scorer.rep_count()));
  for (Index r = 0; r < scorer.rep_count(); ++r) {
    reps[std::size_t(r)] = {scorer.rep_distance(r), std::int32_t(r)};
  }
  std::sort(reps.begin(), reps.end());
  return reps;
}

std::vector<std::int32_t> select_by_score(std::vector<ScoredPoint>& scored, std::int64_t want) {
  if (want < std::int64_t(scored.size())) {
    std::nth_element(scored.begin(), scored.begin() + want, scored.end());
    scored.resize(std::size_t(want));
  }
  std::vector<std::int32_t> out;
  out.reserve(scored.size());
  for (const auto& [score, idx] : scored) {
    (void)score;
    out.push_back(idx);
  }
  return out;
}

}  // namespace

void validate_tuning(const QuantizationHierarchy& h, const Tuning& tuning,
                     std::int64_t min_last) {
  if (tuning.size() != h.level_count()) {
    throw InvalidArgument("tuning length does not match hierarchy depth");
  }
  const std::int64_t n = h.point_count();
  for (Index i = 0; i < tuning.size(); ++i) {
    const std::int64_t v = tuning.t[std::size_t(i)];
    if (v < 0 || v > n) throw InvalidArgument("tuning entry out of [0, n]");
    if (i > 0 && v > tuning.t[std::size_t(i - 1)]) {
      throw InvalidArgument("tuning must be non-increasing");
    }
  }
  if (!tuning.t.empty() && tuning.t.back() < min_last) {
    throw InvalidArgument("tuning final entry below required minimum");
  }
}

double SearchTrace::total_bytes() const {
  double sum = 0.0;
  for (const double b : bytes_accessed) sum += b;
  return sum;
}

double modeled_bytes_per_query(const std::vector<std::int64_t>& footprints, Index n,
                               const Tuning& tuning) {
  if (footprints.size() != tuning.t.size()) {
    throw InvalidArgument("modeled bytes: footprint/tuning length mismatch");
  }
  double total = double(footprints[0]);
  for (std::size_t i = 1; i < footprints.size(); ++i) {
    total += double(tuning.t[i - 1]) * double(footprints[i]) / double(n);
  }
  return total;
}

std::vector<std::int32_t> quantized_search(const QuantizationHierarchy& h, const Tuning& tuning,
                                           Eigen::Ref<const Vec> query, SearchTrace* trace) {
  validate_tuning(h, tuning);
  const Index n = h.point_count();
  const Index m = h.level_count();
  if (trace != nullptr) {
    trace->candidates.assign(std::size_t(m), {});
    trace->points_scored.assign(std::size_t(m), 0);
    trace->bytes_accessed.assign(std::size_t(m), 0.0);
  }

  std::vector<std::int32_t> cand;
  for (Index i = 0; i < m; ++i) {
    const std::int64_t want = tuning.t[std::size_t(i)];
    const LevelScorer scorer(h, i, query);
    const std::int64_t scored = (i == 0) ? std::int64_t(n) : std::int64_t(cand.size());

    std::vector<std::int32_t> next;
    if (i == 0) {
      if (!scorer.identity_reps()) {
        const auto ranked = rank_reps(scorer);
        const auto& level = h.levels[std::size_t(i)];
        const auto members = [&](std::int32_t rep) -> const std::vector<std::int32_t>& {
          return level.buckets[std::size_t(rep)];
        };
        next = (level.kind == LevelKind::kVqBroadcast)
                   ? consume_buckets(ranked, want, members)
                   : consume_rep_groups(ranked, want, members);
      } else {
        std::vector<ScoredPoint> scored_points(static_cast<std::size_t>(n));
        for (Index j = 0; j < n; ++j) {
          scored_points[std::size_t(j)] = {scorer.rep_distance(j), std::int32_t(j)};
        }
        next = select_by_score(scored_points, want);
      }
    } else {
      const auto& level = h.levels[std::size_t(i)];
      if (level.kind == LevelKind::kVqBroadcast) {
        // Group surviving candidates by centroid, then consume buckets.
        std::vector<std::vector<std::int32_t>> groups(static_cast<std::size_t>(level.rep_count));
        for (const std::int32_t j : cand) groups[std::size_t(level.rep_of(j))].push_back(j);
        std::vector<ScoredPoint> ranked;
        for (Index r = 0; r < level.rep_count; ++r) {
          if (!groups[std::size_t(r)].empty()) {
            ranked.emplace_back(scorer.rep_distance(r), std::int32_t(r));
          }
        }
        std::sort(ranked.begin(), ranked.end());
        next = consume_buckets(ranked, want, [&](std::int32_t rep) -> const std::vector<std::int32_t>& {
          return groups[std::size_t(rep)];
        });
      } else {
        std::vector<ScoredPoint> scored_points;
        scored_points.reserve(cand.size());
        for (const std::int32_t j : cand) scored_points.emplace_back(scorer.point_score(j), j);
        next = select_by_score(scored_points, want);
      }
    }
    cand = std::move(next);

    if (trace != nullptr) {
      trace->points_scored[std::size_t(i)] = scored;
      trace->bytes_accessed[std::size_t(i)] =
          (i == 0) ? double(h.levels[0].footprint_bytes)
                   : double(scored) * double(h.levels[std::size_t(i)].footprint_bytes) / double(n);
      auto sorted = cand;
      std::sort(sorted.begin(), sorted.end());
      trace->candidates[std::size_t(i)] = std::move(sorted);
    }
    if (i == m - 1) {
      std::vector<ScoredPoint> final_scores;
      final_scores.reserve(cand.size());
      for (const std::int32_t j : cand) final_scores.emplace_back(scorer.point_score(j), j);
      std::sort(final_scores.begin(), final_scores.end());
      for (std::size_t c = 0; c < cand.size(); ++c) cand[c] = final_scores[c].second;
    }
  }
  return cand;
}

std::vector<std::int32_t> single_layer_topk(const QuantizationHierarchy& h, Index level,
                                            Eigen::Ref<const Vec> query, std::int64_t depth) {
  if (level < 0 || level >= h.level_count()) throw InvalidArgument("level out of range");
  if (depth < 0 || depth > h.point_count()) throw InvalidArgument("depth out of range");
  LevelScorer scorer(h, level, query);
  if (scorer.identity_reps()) {
    std::vector<ScoredPoint> scored(static_cast<std::size_t>(h.point_count()));
    for (Index j = 0; j < h.point_count(); ++j) {
      scored[std::size_t(j)] = {scorer.rep_distance(j), std::int32_t(j)};
    }
    std::nth_element(scored.begin(),
                     scored.begin() + std::min<std::int64_t>(depth, std::int64_t(scored.size())),
                     scored.end());
    scored.resize(std::size_t(depth));
    std::sort(scored.begin(), scored.end());
    std::vector<std::int32_t> out;
    out.reserve(scored.size());
    for (const auto& [s, idx] : scored) {
      (void)s;
      out.push_back(idx);
    }
    return out;
  }
  const auto ranked = rank_reps(scorer);
  const auto& level_ref = h.levels[std::size_t(level)];
  return consume_rep_groups(ranked, depth, [&](std::int32_t rep) -> const std::vector<std::int32_t>& {
    return level_ref.buckets[std::size_t(rep)];
  });
}

RecallSummary evaluate_recall(const std::vector<std::vector<std::int32_t>>& results,
                              const GroundTruth& gt, Index k, double floor) {
  if (k < 1 || k > gt.k()) throw InvalidArgument("evaluate_recall: k mismatch with ground truth");
  if (Index(results.size()) != gt.query_count()) {
    throw InvalidArgument("evaluate_recall: result count mismatch");
  }
  if (floor <= 0.0) throw InvalidArgument("evaluate_recall: floor must be positive");

  RecallSummary summary;
  summary.per_query.resize(results.size());
  double arith = 0.0;
  double log_sum = 0.0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    const auto& res = results[q];
    const std::size_t take = std::min<std::size_t>(res.size(), std::size_t(k));
    Index hits = 0;
    for (std::size_t r = 0; r < take; ++r) {
      for (Index c = 0; c < k; ++c) {
        if (gt.indices(Index(q), c) == res[r]) {
          ++hits;
          break;
        }
      }
    }
    const double recall = double(hits) / double(k);
    summary.per_query[q] = recall;
    arith += recall;
    log_sum += std::log(std::max(double(hits), floor) / double(k));
  }
  const double n_q = double(results.size());
  summary.arithmetic_mean = arith / n_q;
  summary.geometric_mean = std::exp(log_sum / n_q);
  return summary;
}

std::vector<BenchRow> bench(const QuantizationHierarchy& h, const std::vector<Tuning>& tunings,
                            const QuerySet& qs, const GroundTruth& gt, Index k, int threads,
                            int timing_repeats) {
  if (qs.dim() != h.dim()) throw InvalidArgument("bench: query dimension mismatch");
#ifdef _OPENMP
  const int use_threads = threads > 0 ? threads : omp_get_max_threads();
#else
  const int use_threads = 1;
  (void)threads;
#endif
  const Index n_q = qs.count();
  const auto footprints = h.footprints();
  std::vector<BenchRow> rows;
  rows.reserve(tunings.size());

  for (const Tuning& tuning : tunings) {
    validate_tuning(h, tuning, /*min_last=*/k);
    BenchRow row;
    row.tuning = tuning;

    std::vector<std::vector<std::int32_t>> results(static_cast<std::size_t>(n_q));
    std::vector<double> bytes(std::size_t(n_q), 0.0);
#pragma omp parallel for schedule(dynamic, 8) num_threads(use_threads)
    for (Index q = 0; q < n_q; ++q) {
      SearchTrace trace;
      results[std::size_t(q)] = quantized_search(h, tuning, qs.queries.row(q), &trace);
      bytes[std::size_t(q)] = trace.total_bytes();
    }
    row.bytes_per_query = bytes.empty() ? 0.0 : bytes[0];
    row.modeled_cost = modeled_bytes_per_query(footprints, h.point_count(), tuning) /
                       double(h.dataset_bytes());
    const RecallSummary recall = evaluate_recall(results, gt, k);
    row.recall_arithmetic = recall.arithmetic_mean;
    row.recall_geometric = recall.geometric_mean;

    if (timing_repeats > 0) {
      std::vector<double> times;
      for (int rep = -1; rep < timing_repeats; ++rep) {  // rep -1 = warmup
        const auto start = std::chrono::steady_clock::now();
#pragma omp parallel for schedule(dynamic, 8) num_threads(use_threads)
        for (Index q = 0; q < n_q; ++q) {
          volatile std::size_t sink =
              quantized_search(h, tuning, qs.queries.row(q), nullptr).size();
          (void)sink;
        }
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        if (rep >= 0) times.push_back(elapsed.count());
      }
      std::sort(times.begin(), times.end());
      const double median = times[times.size() / 2];
      row.seconds_per_query = median / double(n_q);
      row.qps = double(n_q) / median;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace qtune
