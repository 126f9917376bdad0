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

#include "qtune/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace qtune {

namespace {

using nlohmann::json;

constexpr Index kDenseDepthLimit = Index(1) << 20;

void check_inputs(const QuerySet& qs, const GroundTruth& gt, const QuantizationHierarchy& h) {
  if (qs.dim() != h.dim()) throw InvalidArgument("stats: query dimension mismatch");
  if (gt.query_count() != qs.count()) throw InvalidArgument("stats: ground truth count mismatch");
  if (gt.k() < 1) throw InvalidArgument("stats: empty ground truth");
}

}  // namespace

StatsTensors compute_U(const QuerySet& qs, const GroundTruth& gt,
                       const QuantizationHierarchy& h) {
  check_inputs(qs, gt, h);
  StatsTensors tensors;
  tensors.n_q = qs.count();
  tensors.m = h.level_count();
  tensors.k = gt.k();
  tensors.u.resize(std::size_t(tensors.n_q * tensors.m));

#pragma omp parallel for schedule(dynamic, 1)
  for (Index a = 0; a < tensors.n_q; ++a) {
    for (Index b = 0; b < tensors.m; ++b) {
      const LevelScorer scorer(h, b, qs.queries.row(a));
      auto& row = tensors.u[tensors.slot(a, b)];
      row.resize(std::size_t(tensors.k));
      for (Index c = 0; c < tensors.k; ++c) {
        const std::int32_t g = gt.indices(a, c);
        row[std::size_t(c)] = {scorer.point_score(g), g};
      }
      std::sort(row.begin(), row.end());
    }
  }
  return tensors;
}

void compute_V(StatsTensors& tensors, const QuantizationHierarchy& h, const QuerySet& qs) {
  if (qs.dim() != h.dim()) throw InvalidArgument("stats: query dimension mismatch");
  if (qs.count() != tensors.n_q || h.level_count() != tensors.m) {
    throw InvalidArgument("compute_V: tensor shape mismatch");
  }
  if (tensors.u.empty()) throw InvalidArgument("compute_V: U tensor missing");
  tensors.v.assign(tensors.u.size(), {});

#pragma omp parallel for schedule(dynamic, 1)
  for (Index a = 0; a < tensors.n_q; ++a) {
    for (Index b = 0; b < tensors.m; ++b) {
      const auto& thresholds = tensors.u[tensors.slot(a, b)];
      const Index k = Index(thresholds.size());
      const LevelScorer scorer(h, b, qs.queries.row(a));
      const auto& level = h.levels[std::size_t(b)];

      std::vector<std::int64_t> from_here(std::size_t(k) + 1, 0);  // suffix start counts
      std::vector<std::int64_t> exact_ties(std::size_t(k), 0);

      if (scorer.identity_reps()) {
        for (Index j = 0; j < h.point_count(); ++j) {
          const std::pair<double, std::int32_t> key(scorer.rep_distance(j), std::int32_t(j));
          const auto it = std::upper_bound(thresholds.begin(), thresholds.end(), key);
          ++from_here[std::size_t(it - thresholds.begin())];
        }
      } else {
        for (Index r = 0; r < scorer.rep_count(); ++r) {
          const double dist = scorer.rep_distance(r);
          const auto& bucket = level.buckets[std::size_t(r)];
          if (bucket.empty()) continue;
          // Thresholds strictly above this distance take the whole bucket.
          const auto strict = std::upper_bound(
              thresholds.begin(), thresholds.end(),
              std::pair<double, std::int32_t>(dist, std::numeric_limits<std::int32_t>::max()));
          from_here[std::size_t(strict - thresholds.begin())] += std::int64_t(bucket.size());
          // Equal-distance thresholds count only members with a smaller index.
          auto tie = std::lower_bound(
              thresholds.begin(), thresholds.end(),
              std::pair<double, std::int32_t>(dist, std::numeric_limits<std::int32_t>::min()));
          for (; tie != strict; ++tie) {
            const auto cut = std::lower_bound(bucket.begin(), bucket.end(), tie->second);
            exact_ties[std::size_t(tie - thresholds.begin())] += cut - bucket.begin();
          }
        }
      }

      auto& ranks = tensors.v[tensors.slot(a, b)];
      ranks.resize(std::size_t(k));
      std::int64_t below = 0;
      for (Index c = 0; c < k; ++c) {
        below += from_here[std::size_t(c)];
        ranks[std::size_t(c)] = below + exact_ties[std::size_t(c)];
      }
    }
  }
}

LossMatrix loss_matrix(const StatsTensors& tensors, Index n, double floor) {
  if (floor <= 0.0) throw InvalidArgument("loss_matrix: floor must be positive");
  if (tensors.v.empty()) throw InvalidArgument("loss_matrix: V tensor missing");
  if (n + 1 > kDenseDepthLimit + 1) throw InvalidArgument("loss_matrix: dense rows capped at 2^20 depths");

  const Index k = tensors.k;
  std::vector<double> phi(std::size_t(k) + 1);
  for (Index c = 0; c <= k; ++c) {
    phi[std::size_t(c)] = -std::log(std::max(double(c), floor) / double(k));
  }

  LossMatrix out;
  out.floor = floor;
  out.k = k;
  out.n_q = tensors.n_q;
  out.rows.assign(std::size_t(tensors.m), std::vector<double>(std::size_t(n) + 1, 0.0));

#pragma omp parallel for schedule(dynamic, 1)
  for (Index b = 0; b < tensors.m; ++b) {
    auto& row = out.rows[std::size_t(b)];
    // Queries accumulate in index order so the row is bit-identical to a
    // direct per-depth average.
    for (Index a = 0; a < tensors.n_q; ++a) {
      const auto& ranks = tensors.v[tensors.slot(a, b)];
      std::int64_t start = 0;
      for (Index c = 0; c < k; ++c) {
        const std::int64_t end = ranks[std::size_t(c)];  // count == c on [start, end]
        for (std::int64_t t = start; t <= end; ++t) row[std::size_t(t)] += phi[std::size_t(c)];
        start = std::max(start, end + 1);
      }
      // count == k from start onward contributes -log(1) = 0.
    }
    for (double& cell : row) cell /= double(tensors.n_q);
  }
  return out;
}

ConvexLossCurve convexify(const std::vector<double>& row) {
  if (row.empty()) throw InvalidArgument("convexify: empty row");
  for (std::size_t t = 1; t < row.size(); ++t) {
    if (row[t] > row[t - 1] + 1e-12 * std::abs(row[t - 1])) {
      throw InvalidArgument("convexify: row must be non-increasing");
    }
  }

  ConvexLossCurve curve;
  std::vector<std::pair<std::int64_t, double>> hull;
  for (std::size_t t = 0; t < row.size(); ++t) {
    const std::pair<std::int64_t, double> p(std::int64_t(t), row[t]);
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull[hull.size() - 1];
      // Pop b unless slope(a,b) < slope(b,p).
      if ((b.second - a.second) * double(p.first - b.first) >=
          (p.second - b.second) * double(b.first - a.first)) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(p);
  }
  for (const auto& [t, v] : hull) {
    curve.knots.push_back(t);
    curve.values.push_back(v);
  }
  for (std::size_t s = 1; s < hull.size(); ++s) {
    curve.slopes.push_back((curve.values[s] - curve.values[s - 1]) /
                           double(curve.knots[s] - curve.knots[s - 1]));
  }
  return curve;
}

double ConvexLossCurve::value_at(std::int64_t t) const {
  if (t < knots.front() || t > knots.back()) {
    throw InvalidArgument("loss curve evaluated outside its depth range");
  }
  const auto it = std::upper_bound(knots.begin(), knots.end(), t);
  const std::size_t seg = std::size_t(it - knots.begin()) - 1;
  if (knots[seg] == t || seg + 1 == knots.size()) return values[seg];
  return values[seg] + slopes[seg] * double(t - knots[seg]);
}

double proxy_recall(const Tuning& tuning, const std::vector<ConvexLossCurve>& curves) {
  if (tuning.t.size() != curves.size()) {
    throw InvalidArgument("proxy_recall: tuning length mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    loss += curves[i].value_at(tuning.t[i]);
  }
  return std::exp(-loss);
}

RecallStats compute_stats(const QuantizationHierarchy& h, const QuerySet& qs,
                          const GroundTruth& gt, double floor, std::uint64_t hierarchy_digest) {
  if (h.point_count() > kDenseDepthLimit) {
    throw InvalidArgument("compute_stats: dataset too large for dense loss rows");
  }
  RecallStats stats;
  stats.m = h.level_count();
  stats.n = h.point_count();
  stats.k = gt.k();
  stats.n_q = qs.count();
  stats.floor = floor;
  stats.metric = h.metric;
  stats.footprints = h.footprints();
  stats.dataset_bytes = h.dataset_bytes();
  stats.hierarchy_digest = hierarchy_digest;

  StatsTensors tensors = compute_U(qs, gt, h);
  compute_V(tensors, h, qs);
  stats.loss = loss_matrix(tensors, stats.n, floor);
  for (const auto& row : stats.loss.rows) stats.curves.push_back(convexify(row));
  return stats;
}

void save_stats(const std::filesystem::path& dir, const RecallStats& stats) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["m"] = stats.m;
  manifest["n"] = stats.n;
  manifest["k"] = stats.k;
  manifest["n_q"] = stats.n_q;
  manifest["floor"] = stats.floor;
  manifest["metric"] = to_string(stats.metric);
  manifest["footprints"] = stats.footprints;
  manifest["dataset_bytes"] = stats.dataset_bytes;
  manifest["hierarchy_digest"] = stats.hierarchy_digest;
  const std::string text = manifest.dump(2);
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write stats manifest");
    out.write(text.data(), std::streamsize(text.size()));
  }

  // Loss rows are piecewise constant; persist (depth, value) float64 pairs at
  // depth 0, every change, and depth n.
  for (std::size_t b = 0; b < stats.loss.rows.size(); ++b) {
    const auto& row = stats.loss.rows[b];
    std::vector<double> pairs;
    pairs.push_back(0.0);
    pairs.push_back(row[0]);
    for (std::size_t t = 1; t < row.size(); ++t) {
      if (row[t] != row[t - 1] || t + 1 == row.size()) {
        pairs.push_back(double(t));
        pairs.push_back(row[t]);
      }
    }
    const auto path = dir / ("level_" + std::to_string(b) + "_loss.f64");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(pairs.data()),
              std::streamsize(pairs.size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + path.string());
  }
}

RecallStats load_stats(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw IoError("cannot open stats manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(std::string("stats manifest: ") + e.what());
  }

  RecallStats stats;
  stats.m = manifest.at("m").get<Index>();
  stats.n = manifest.at("n").get<Index>();
  stats.k = manifest.at("k").get<Index>();
  stats.n_q = manifest.at("n_q").get<Index>();
  stats.floor = manifest.at("floor").get<double>();
  stats.metric = metric_from_string(manifest.at("metric").get<std::string>());
  stats.footprints = manifest.at("footprints").get<std::vector<std::int64_t>>();
  stats.dataset_bytes = manifest.at("dataset_bytes").get<std::int64_t>();
  stats.hierarchy_digest = manifest.at("hierarchy_digest").get<std::uint64_t>();
  stats.loss.floor = stats.floor;
  stats.loss.k = stats.k;
  stats.loss.n_q = stats.n_q;

  for (Index b = 0; b < stats.m; ++b) {
    const auto path = dir / ("level_" + std::to_string(b) + "_loss.f64");
    std::ifstream lin(path, std::ios::binary);
    if (!lin) throw IoError("cannot open " + path.string());
    lin.seekg(0, std::ios::end);
    const std::size_t bytes = std::size_t(lin.tellg());
    lin.seekg(0, std::ios::beg);
    std::vector<double> pairs(bytes / sizeof(double));
    lin.read(reinterpret_cast<char*>(pairs.data()), std::streamsize(bytes));
    if (!lin || pairs.size() < 4 || pairs.size() % 2 != 0) {
      throw IoError("malformed loss file: " + path.string());
    }
    std::vector<double> row(std::size_t(stats.n) + 1, 0.0);
    for (std::size_t p = 0; p + 2 < pairs.size(); p += 2) {
      const auto from = std::int64_t(pairs[p]);
      const auto to = std::int64_t(pairs[p + 2]);
      for (std::int64_t t = from; t < to; ++t) row[std::size_t(t)] = pairs[p + 1];
    }
    row[std::size_t(stats.n)] = pairs[pairs.size() - 1];
    stats.loss.rows.push_back(std::move(row));
    stats.curves.push_back(convexify(stats.loss.rows.back()));
  }
  return stats;
}

}  // namespace qtune
