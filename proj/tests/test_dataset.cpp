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

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "qtune/io.hpp"
#include "qtune/synthetic.hpp"

using namespace qtune;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "qtune_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("fvecs single record") {
  const auto path = temp_file("single.fvecs");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const std::int32_t d = 2;
    const float payload[2] = {1.0f, 2.0f};
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(payload), 8);
  }
  const Dataset ds = load_vectors(path, VecFormat::kFvecs);
  CHECK(ds.rows() == 1);
  CHECK(ds.dim() == 2);
  CHECK(ds.vectors(0, 0) == 1.0f);
  CHECK(ds.vectors(0, 1) == 2.0f);
}

TEST_CASE("empty file rejected") {
  const auto path = temp_file("empty.fvecs");
  std::ofstream(path, std::ios::binary | std::ios::trunc);
  CHECK_THROWS_WITH_AS(load_vectors(path, VecFormat::kFvecs),
                       doctest::Contains("empty dataset"), IoError);
}

TEST_CASE("truncated and malformed files rejected") {
  const auto trunc = temp_file("trunc.fvecs");
  {
    std::ofstream out(trunc, std::ios::binary | std::ios::trunc);
    const std::int32_t d = 3;
    const float payload[2] = {1.0f, 2.0f};  // one float short
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(payload), 8);
  }
  CHECK_THROWS_AS(load_vectors(trunc, VecFormat::kFvecs), IoError);

  const auto bad_d = temp_file("bad_d.fvecs");
  {
    std::ofstream out(bad_d, std::ios::binary | std::ios::trunc);
    const std::int32_t d = -4;
    out.write(reinterpret_cast<const char*>(&d), 4);
    const float payload[4] = {0, 0, 0, 0};
    out.write(reinterpret_cast<const char*>(payload), 16);
  }
  CHECK_THROWS_AS(load_vectors(bad_d, VecFormat::kFvecs), IoError);

  const auto mixed = temp_file("mixed.fvecs");
  {
    std::ofstream out(mixed, std::ios::binary | std::ios::trunc);
    const std::int32_t d1 = 1, d2 = 2;
    const float v = 0.5f;
    const float w[2] = {0.5f, 0.25f};
    // Two records whose sizes happen to sum to a multiple of the first
    // record size, with inconsistent dimensionality.
    out.write(reinterpret_cast<const char*>(&d1, 1), 4);
    out.write(reinterpret_cast<const char*>(&v), 4);
    out.write(reinterpret_cast<const char*>(&d2), 4);
    out.write(reinterpret_cast<const char*>(w), 8);
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_AS(load_vectors(mixed, VecFormat::kFvecs), IoError);
}

TEST_CASE("fvecs round trip is byte identical") {
  std::mt19937_64 rng(7);
  Dataset ds;
  ds.vectors.resize(4, 5);
  for (Index i = 0; i < ds.rows(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) {
      ds.vectors(i, j) = float(double(rng() >> 40)) / 1024.0f;
    }
  }
  const auto first = temp_file("roundtrip1.fvecs");
  const auto second = temp_file("roundtrip2.fvecs");
  save_vectors(first, ds, VecFormat::kFvecs);
  const Dataset loaded = load_vectors(first, VecFormat::kFvecs);
  save_vectors(second, loaded, VecFormat::kFvecs);
  CHECK(slurp(first) == slurp(second));
}

TEST_CASE("bvecs widen to float and round trip") {
  const auto path = temp_file("bytes.bvecs");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const std::int32_t d = 3;
    const unsigned char payload[3] = {0, 128, 255};
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(payload), 3);
  }
  const Dataset ds = load_vectors(path, VecFormat::kBvecs);
  CHECK(ds.kind == ElementKind::kUint8);
  CHECK(ds.bytes_per_dim() == 1);
  CHECK(ds.vectors(0, 0) == 0.0f);
  CHECK(ds.vectors(0, 1) == 128.0f);
  CHECK(ds.vectors(0, 2) == 255.0f);

  const auto again = temp_file("bytes2.bvecs");
  save_vectors(again, ds, VecFormat::kBvecs);
  CHECK(slurp(path) == slurp(again));
}

TEST_CASE("ivecs round trip") {
  IdxMat rows(2, 3);
  rows << 5, 1, 9, 2, 2, 0;
  const auto path = temp_file("gt.ivecs");
  save_ivecs(path, rows);
  const IdxMat loaded = load_ivecs(path);
  CHECK(loaded == rows);
}

TEST_CASE("distance basics") {
  Vec a(2), b(2);
  a << 1.0f, 2.0f;
  b << 3.0f, 4.0f;
  CHECK(distance(Metric::kSquaredEuclidean, a, a) == 0.0);
  CHECK(distance(Metric::kSquaredEuclidean, a, b) == 8.0);

  Vec e1(2), e2(2);
  e1 << 1.0f, 0.0f;
  e2 << 0.0f, 1.0f;
  CHECK(distance(Metric::kNegatedInnerProduct, e1, e2) == 0.0);

  Vec c(3);
  CHECK_THROWS_AS(distance(Metric::kSquaredEuclidean, a, c), InvalidArgument);
}

TEST_CASE("distance symmetry on sampled pairs") {
  const Mat pts = sample_gaussian_mixture(32, 6, MixtureSpec{4, 2.0, 1.0}, 11);
  for (Index i = 0; i < pts.rows(); ++i) {
    for (Index j = i; j < pts.rows(); ++j) {
      const double ij = distance(Metric::kSquaredEuclidean, pts.row(i), pts.row(j));
      const double ji = distance(Metric::kSquaredEuclidean, pts.row(j), pts.row(i));
      CHECK(ij == ji);
      if (i == j) CHECK(ij == 0.0);
    }
  }
}

TEST_CASE("ground truth self match and hand case") {
  Dataset ds;
  ds.vectors.resize(3, 1);
  ds.vectors << 0.0f, 1.0f, 5.0f;
  QuerySet qs;
  qs.queries.resize(2, 1);
  qs.queries << 0.9f, 5.0f;

  const GroundTruth gt = compute_ground_truth(ds, qs, 2, Metric::kSquaredEuclidean);
  CHECK(gt.indices(0, 0) == 1);
  CHECK(gt.indices(0, 1) == 0);
  CHECK(gt.indices(1, 0) == 2);  // exact self match, distance 0
  CHECK(gt.distances(1, 0) == 0.0);
}

TEST_CASE("ground truth ties break toward the smaller index") {
  Dataset ds;
  ds.vectors.resize(4, 1);
  ds.vectors << 1.0f, -1.0f, 1.0f, 3.0f;
  QuerySet qs;
  qs.queries.resize(1, 1);
  qs.queries << 0.0f;
  const GroundTruth gt = compute_ground_truth(ds, qs, 3, Metric::kSquaredEuclidean);
  CHECK(gt.indices(0, 0) == 0);
  CHECK(gt.indices(0, 1) == 1);
  CHECK(gt.indices(0, 2) == 2);
}

TEST_CASE("ground truth matches independent scan") {
  const MixtureSpec spec{8, 3.0, 1.0};
  Dataset ds;
  ds.vectors = sample_gaussian_mixture(100, 8, spec, 3);
  QuerySet qs;
  qs.queries = sample_gaussian_mixture(20, 8, spec, 3, 1);
  const Index k = 10;

  for (const Metric metric : {Metric::kSquaredEuclidean, Metric::kNegatedInnerProduct}) {
    const GroundTruth gt = compute_ground_truth(ds, qs, k, metric);
    for (Index q = 0; q < qs.count(); ++q) {
      // Straight O(n k) selection-sort scan, written independently of the
      // library path.
      std::vector<double> dist(std::size_t(ds.rows()));
      for (Index j = 0; j < ds.rows(); ++j) {
        double acc = 0.0;
        for (Index c = 0; c < ds.dim(); ++c) {
          const double x = double(qs.queries(q, c));
          const double y = double(ds.vectors(j, c));
          acc += metric == Metric::kSquaredEuclidean ? (x - y) * (x - y) : -x * y;
        }
        dist[std::size_t(j)] = acc;
      }
      std::vector<bool> used(std::size_t(ds.rows()), false);
      for (Index c = 0; c < k; ++c) {
        Index best = -1;
        for (Index j = 0; j < ds.rows(); ++j) {
          if (used[std::size_t(j)]) continue;
          if (best < 0 || dist[std::size_t(j)] < dist[std::size_t(best)]) best = j;
        }
        used[std::size_t(best)] = true;
        CHECK(gt.indices(q, c) == best);
        CHECK(gt.distances(q, c) == dist[std::size_t(best)]);
      }
    }
  }
}

TEST_CASE("ground truth rows are sorted and deterministic") {
  const MixtureSpec spec{4, 2.0, 1.0};
  Dataset ds;
  ds.vectors = sample_gaussian_mixture(60, 4, spec, 5);
  QuerySet qs;
  qs.queries = sample_gaussian_mixture(10, 4, spec, 5, 1);
  const GroundTruth a = compute_ground_truth(ds, qs, 5, Metric::kSquaredEuclidean);
  const GroundTruth b = compute_ground_truth(ds, qs, 5, Metric::kSquaredEuclidean);
  CHECK(a.indices == b.indices);
  for (Index q = 0; q < qs.count(); ++q) {
    for (Index c = 1; c < a.k(); ++c) {
      const bool ordered = a.distances(q, c - 1) < a.distances(q, c) ||
                           (a.distances(q, c - 1) == a.distances(q, c) &&
                            a.indices(q, c - 1) < a.indices(q, c));
      CHECK(ordered);
    }
  }
}

TEST_CASE("ground truth preconditions") {
  Dataset ds;
  ds.vectors.resize(3, 2);
  ds.vectors.setZero();
  QuerySet qs;
  qs.queries.resize(1, 2);
  qs.queries.setZero();
  CHECK_THROWS_AS(compute_ground_truth(ds, qs, 4, Metric::kSquaredEuclidean), InvalidArgument);
  QuerySet bad;
  bad.queries.resize(1, 3);
  bad.queries.setZero();
  CHECK_THROWS_AS(compute_ground_truth(ds, bad, 1, Metric::kSquaredEuclidean), InvalidArgument);
}

TEST_CASE("ground truth save and load round trip") {
  const MixtureSpec spec{4, 2.0, 1.0};
  Dataset ds;
  ds.vectors = sample_gaussian_mixture(40, 4, spec, 9);
  QuerySet qs;
  qs.queries = sample_gaussian_mixture(6, 4, spec, 9, 1);
  const GroundTruth gt = compute_ground_truth(ds, qs, 3, Metric::kSquaredEuclidean);
  const auto prefix = temp_file("gt_roundtrip");
  save_ground_truth(prefix, gt);
  const GroundTruth loaded = load_ground_truth(prefix);
  CHECK(loaded.indices == gt.indices);
  // Distances pass through a float32 sidecar.
  for (Index q = 0; q < gt.query_count(); ++q) {
    for (Index c = 0; c < gt.k(); ++c) {
      CHECK(loaded.distances(q, c) == doctest::Approx(gt.distances(q, c)).epsilon(1e-6));
    }
  }
}
