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

#include "qtune/pq.hpp"

#include <limits>

#include "qtune/kmeans.hpp"

namespace qtune {

Index PQCodebook::dim() const {
  Index d = 0;
  for (const Index w : subspace_dims) d += w;
  return d;
}

Vec PQCodebook::reconstruct(Index row) const {
  Vec out(dim());
  Index offset = 0;
  for (Index k = 0; k < subspace_count(); ++k) {
    const Index w = subspace_dims[std::size_t(k)];
    out.segment(offset, w) = codebooks[std::size_t(k)].row(codes(row, k)).transpose();
    offset += w;
  }
  return out;
}

PQCodebook train_pq(Eigen::Ref<const Mat> data, Index dims_per_block, int bits,
                    std::uint64_t seed, int iterations, Index train_sample) {
  const Index n = data.rows();
  const Index d = data.cols();
  if (dims_per_block < 1 || dims_per_block > d) {
    throw InvalidArgument("train_pq: dims_per_block out of range");
  }
  if (bits != 4 && bits != 8) throw InvalidArgument("train_pq: bits must be 4 or 8");
  const Index centers = Index(1) << bits;
  if (n < centers) throw InvalidArgument("train_pq: insufficient training points");

  PQCodebook pq;
  pq.bits = bits;
  const Index subspaces = (d + dims_per_block - 1) / dims_per_block;
  for (Index k = 0; k < subspaces; ++k) {
    pq.subspace_dims.push_back(std::min(dims_per_block, d - k * dims_per_block));
  }

  Index sample = (train_sample > 0) ? std::min(train_sample, n) : n;
  if (sample < centers) sample = std::min(n, centers);

  pq.codes.resize(n, subspaces);
  Index offset = 0;
  for (Index k = 0; k < subspaces; ++k) {
    const Index w = pq.subspace_dims[std::size_t(k)];
    Mat slice(sample, w);
    for (Index i = 0; i < sample; ++i) {
      slice.row(i) = data.row(i * n / sample).segment(offset, w);
    }
    VQCodebook sub = train_vq(slice, centers, seed + 0x51d7u * std::uint64_t(k + 1), iterations);
    pq.codebooks.push_back(std::move(sub.centroids));

    const Mat& cb = pq.codebooks.back();
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < n; ++j) {
      float best = std::numeric_limits<float>::infinity();
      std::int32_t arg = 0;
      for (Index c = 0; c < centers; ++c) {
        const float d2 = (data.row(j).segment(offset, w) - cb.row(c)).squaredNorm();
        if (d2 < best) {
          best = d2;
          arg = std::int32_t(c);
        }
      }
      pq.codes(j, k) = std::uint8_t(arg);
    }
    offset += w;
  }
  return pq;
}

PQLookupTable build_lookup_table(const PQCodebook& pq, Metric metric,
                                 Eigen::Ref<const Vec> query) {
  if (query.size() != pq.dim()) throw InvalidArgument("lookup table: dimension mismatch");
  PQLookupTable lut;
  lut.tables.reserve(std::size_t(pq.subspace_count()));
  Index offset = 0;
  for (Index k = 0; k < pq.subspace_count(); ++k) {
    const Index w = pq.subspace_dims[std::size_t(k)];
    const Mat& cb = pq.codebooks[std::size_t(k)];
    Mat table(1, cb.rows());
    for (Index c = 0; c < cb.rows(); ++c) {
      table(0, c) =
          float(point_distance(metric, query.segment(offset, w).transpose(), cb.row(c)));
    }
    lut.tables.push_back(std::move(table));
    offset += w;
  }
  return lut;
}

double PQLookupTable::score(const PQCodebook& pq, Index row) const {
  double sum = 0.0;
  for (Index k = 0; k < pq.subspace_count(); ++k) {
    sum += double(tables[std::size_t(k)](0, pq.codes(row, k)));
  }
  return sum;
}

}  // namespace qtune
