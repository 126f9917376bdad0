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

#include "qtune/io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <utility>

namespace qtune {

Metric metric_from_string(const std::string& name) {
  if (name == "squared_euclidean") return Metric::kSquaredEuclidean;
  if (name == "negated_inner_product") return Metric::kNegatedInnerProduct;
  throw ConfigError("unknown metric: " + name);
}

std::string to_string(Metric metric) {
  return metric == Metric::kSquaredEuclidean ? "squared_euclidean" : "negated_inner_product";
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::int32_t read_i32(std::istream& in) {
  std::int32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

Dataset load_vectors(const std::filesystem::path& path, VecFormat format) {
  auto in = open_input(path);
  in.seekg(0, std::ios::end);
  const std::int64_t file_size = in.tellg();
  in.seekg(0, std::ios::beg);
  if (file_size == 0) throw IoError("empty dataset: " + path.string());

  const int elem_size = format == VecFormat::kFvecs ? 4 : 1;
  const std::int32_t d = read_i32(in);
  if (!in || d <= 0) throw IoError("invalid record dimensionality in " + path.string());
  const std::int64_t record_size = 4 + std::int64_t(d) * elem_size;
  if (file_size % record_size != 0) throw IoError("truncated file: " + path.string());
  const std::int64_t n = file_size / record_size;

  Dataset ds;
  ds.kind = format == VecFormat::kFvecs ? ElementKind::kFloat32 : ElementKind::kUint8;
  ds.vectors.resize(n, d);
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> raw(d);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int32_t di = read_i32(in);
    if (!in || di != d) throw IoError("inconsistent record dimensionality in " + path.string());
    if (format == VecFormat::kFvecs) {
      in.read(reinterpret_cast<char*>(ds.vectors.row(i).data()), std::int64_t(d) * 4);
    } else {
      in.read(reinterpret_cast<char*>(raw.data()), d);
      for (std::int32_t j = 0; j < d; ++j) ds.vectors(i, j) = float(raw[j]);
    }
    if (!in) throw IoError("truncated file: " + path.string());
  }
  return ds;
}

void save_vectors(const std::filesystem::path& path, const Dataset& ds, VecFormat format) {
  auto out = open_output(path);
  const std::int32_t d = std::int32_t(ds.dim());
  std::vector<unsigned char> raw(static_cast<std::size_t>(std::max<Index>(d, 0)));
  for (Index i = 0; i < ds.rows(); ++i) {
    out.write(reinterpret_cast<const char*>(&d), 4);
    if (format == VecFormat::kFvecs) {
      out.write(reinterpret_cast<const char*>(ds.vectors.row(i).data()), std::int64_t(d) * 4);
    } else {
      for (Index j = 0; j < d; ++j) {
        const float v = ds.vectors(i, j);
        raw[std::size_t(j)] = static_cast<unsigned char>(std::min(255.0f, std::max(0.0f, v)));
      }
      out.write(reinterpret_cast<const char*>(raw.data()), d);
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

IdxMat load_ivecs(const std::filesystem::path& path) {
  auto in = open_input(path);
  in.seekg(0, std::ios::end);
  const std::int64_t file_size = in.tellg();
  in.seekg(0, std::ios::beg);
  if (file_size == 0) throw IoError("empty dataset: " + path.string());
  const std::int32_t k = read_i32(in);
  if (!in || k <= 0) throw IoError("invalid record dimensionality in " + path.string());
  const std::int64_t record_size = 4 + std::int64_t(k) * 4;
  if (file_size % record_size != 0) throw IoError("truncated file: " + path.string());
  const std::int64_t n = file_size / record_size;
  IdxMat rows(n, k);
  in.seekg(0, std::ios::beg);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int32_t ki = read_i32(in);
    if (!in || ki != k) throw IoError("inconsistent record dimensionality in " + path.string());
    in.read(reinterpret_cast<char*>(rows.row(i).data()), std::int64_t(k) * 4);
    if (!in) throw IoError("truncated file: " + path.string());
  }
  return rows;
}

void save_ivecs(const std::filesystem::path& path, const IdxMat& rows) {
  auto out = open_output(path);
  const std::int32_t k = std::int32_t(rows.cols());
  for (Index i = 0; i < rows.rows(); ++i) {
    out.write(reinterpret_cast<const char*>(&k), 4);
    out.write(reinterpret_cast<const char*>(rows.row(i).data()), std::int64_t(k) * 4);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

double distance(Metric metric, Eigen::Ref<const Vec> a, Eigen::Ref<const Vec> b) {
  if (a.size() != b.size()) throw InvalidArgument("distance: dimension mismatch");
  return point_distance(metric, a, b);
}

GroundTruth compute_ground_truth(const Dataset& ds, const QuerySet& qs, Index k, Metric metric) {
  if (qs.dim() != ds.dim()) throw InvalidArgument("ground truth: dimension mismatch");
  if (k < 1 || k > ds.rows()) throw InvalidArgument("ground truth: k out of range");

  const Index n = ds.rows();
  const Index n_q = qs.count();
  GroundTruth gt;
  gt.indices.resize(n_q, k);
  gt.distances.resize(n_q, k);

#pragma omp parallel for schedule(dynamic, 1)
  for (Index q = 0; q < n_q; ++q) {
    std::vector<std::pair<double, std::int32_t>> best(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
      best[std::size_t(j)] = {point_distance(metric, qs.queries.row(q), ds.vectors.row(j)),
                              std::int32_t(j)};
    }
    std::partial_sort(best.begin(), best.begin() + k, best.end());
    for (Index c = 0; c < k; ++c) {
      gt.indices(q, c) = best[std::size_t(c)].second;
      gt.distances(q, c) = best[std::size_t(c)].first;
    }
  }
  return gt;
}

void save_ground_truth(const std::filesystem::path& prefix, const GroundTruth& gt) {
  save_ivecs(prefix.string() + ".ivecs", gt.indices);
  Dataset dist;
  dist.vectors = gt.distances.cast<float>();
  save_vectors(prefix.string() + "_distances.fvecs", dist, VecFormat::kFvecs);
}

GroundTruth load_ground_truth(const std::filesystem::path& prefix) {
  GroundTruth gt;
  gt.indices = load_ivecs(prefix.string() + ".ivecs");
  Dataset dist = load_vectors(prefix.string() + "_distances.fvecs", VecFormat::kFvecs);
  gt.distances = dist.vectors.cast<double>();
  if (gt.distances.rows() != gt.indices.rows() || gt.distances.cols() != gt.indices.cols()) {
    throw IoError("ground truth sidecar shape mismatch: " + prefix.string());
  }
  return gt;
}

}  // namespace qtune
