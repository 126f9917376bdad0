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

#include "qtune/types.hpp"

namespace qtune {

struct PQCodebook {
  std::vector<Index> subspace_dims;  // widths; sum equals d, last may be narrower
  std::vector<Mat> codebooks;        // per subspace: 2^bits x width
  CodeMat codes;                     // rows x K
  int bits = 8;

  Index subspace_count() const { return Index(subspace_dims.size()); }
  Index dim() const;
  Index rows() const { return codes.rows(); }
  // Stored bits per encoded row; footprints count codes at their nominal
  // bit width even though codes are held one byte per entry in memory.
  std::int64_t code_bits_per_row() const { return std::int64_t(subspace_count()) * bits; }
  Vec reconstruct(Index row) const;
};

// Independent k-means per subspace with 2^bits centers. `train_sample`
// limits codebook training to an evenly strided row subset (0 = all rows);
// code assignment always covers every row.
PQCodebook train_pq(Eigen::Ref<const Mat> data, Index dims_per_block, int bits,
                    std::uint64_t seed, int iterations = 10, Index train_sample = 0);

// Per-query lookup tables: table(k, c) = partial distance of subspace k
// against center c. Asymmetric distances are sums of K table entries.
struct PQLookupTable {
  std::vector<Mat> tables;  // per subspace: 1 x centers (row vector)

  double score(const PQCodebook& pq, Index row) const;
};
PQLookupTable build_lookup_table(const PQCodebook& pq, Metric metric, Eigen::Ref<const Vec> query);

}  // namespace qtune
