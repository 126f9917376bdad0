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

#include "qtune/hierarchy.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "qtune/kmeans.hpp"

namespace qtune {

namespace {

using nlohmann::json;

constexpr int kDefaultVqIterations = 20;
constexpr int kDefaultPqIterations = 10;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::int64_t vq_footprint(Index c, Index d, CentroidStore store) {
  return std::int64_t(c) * d * (store == CentroidStore::kInt8 ? 1 : 4);
}

std::int64_t pq_footprint(Index rows, Index d, Index dims_per_block, int bits) {
  const Index subspaces = (d + dims_per_block - 1) / dims_per_block;
  return (std::int64_t(rows) * subspaces * bits + 7) / 8;
}

struct ConfigLayout {
  // Indices into config.levels of vq entries, ascending bitrate order
  // (increasing centroid counts); pq entries record the vq stage they encode
  // (-1 = dataset).
  std::vector<std::size_t> vq_entries;
  std::vector<std::pair<std::size_t, int>> pq_entries;  // (config index, stage or -1)
};

ConfigLayout analyze_config(const HierarchyConfig& config) {
  ConfigLayout layout;
  const auto& levels = config.levels;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i].kind == LevelKind::kVqBroadcast) {
      if (levels[i].centroids < 1) throw ConfigError("vq level needs a positive centroid count");
      layout.vq_entries.push_back(i);
    } else if (levels[i].kind == LevelKind::kPq) {
      if (levels[i].dims_per_block < 1) throw ConfigError("pq level needs dims_per_block");
      // Attach to the next vq entry, if any.
      int stage = -1;
      std::size_t seen = 0;
      for (std::size_t j = 0; j < levels.size(); ++j) {
        if (levels[j].kind != LevelKind::kVqBroadcast) continue;
        if (j > i) {
          stage = int(seen);
          break;
        }
        ++seen;
      }
      // A dataset pq has no following vq stage and must be the last entry.
      if (stage == -1 && i + 1 != levels.size()) {
        throw ConfigError("dataset pq level must be last");
      }
      layout.pq_entries.emplace_back(i, stage);
    } else {
      throw ConfigError("explicit exact levels are expressed via keep_exact");
    }
  }
  for (std::size_t s = 1; s < layout.vq_entries.size(); ++s) {
    if (config.levels[layout.vq_entries[s]].centroids <=
        config.levels[layout.vq_entries[s - 1]].centroids) {
      throw ConfigError("vq centroid counts must increase with bitrate");
    }
  }
  std::size_t pq_seen_per_gap = 0;
  int last_stage = -2;
  for (const auto& [idx, stage] : layout.pq_entries) {
    (void)idx;
    if (stage == last_stage) ++pq_seen_per_gap;
    else pq_seen_per_gap = 1;
    if (pq_seen_per_gap > 1) throw ConfigError("at most one pq level per quantization stage");
    last_stage = stage;
  }
  return layout;
}

void int8_quantize(const Mat& table, Int8Mat& out, Vec& scales) {
  out.resize(table.rows(), table.cols());
  scales.resize(table.cols());
  for (Index j = 0; j < table.cols(); ++j) {
    const float peak = table.col(j).cwiseAbs().maxCoeff();
    const float scale = peak > 0.0f ? peak / 127.0f : 1.0f;
    scales[j] = scale;
    for (Index i = 0; i < table.rows(); ++i) {
      const float q = std::round(table(i, j) / scale);
      out(i, j) = std::int8_t(std::min(127.0f, std::max(-127.0f, q)));
    }
  }
}

Mat int8_dequantize(const Int8Mat& q, const Vec& scales) {
  Mat out(q.rows(), q.cols());
  for (Index j = 0; j < q.cols(); ++j) {
    for (Index i = 0; i < q.rows(); ++i) out(i, j) = float(q(i, j)) * scales[j];
  }
  return out;
}

std::vector<std::vector<std::int32_t>> build_buckets(const std::vector<std::int32_t>& rep_of,
                                                     Index rep_count) {
  std::vector<std::vector<std::int32_t>> buckets(static_cast<std::size_t>(rep_count));
  for (std::size_t j = 0; j < rep_of.size(); ++j) {
    buckets[std::size_t(rep_of[j])].push_back(std::int32_t(j));
  }
  return buckets;
}

void write_blob(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(static_cast<const char*>(data), std::streamsize(size));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<char> read_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  std::vector<char> bytes(static_cast<std::size_t>(std::streamoff(in.tellg())));
  in.seekg(0, std::ios::beg);
  in.read(bytes.data(), std::streamsize(bytes.size()));
  if (!in) throw IoError("read failed: " + path.string());
  return bytes;
}

template <typename M>
void load_matrix(const std::filesystem::path& path, M& mat, Index rows, Index cols) {
  const auto bytes = read_blob(path);
  mat.resize(rows, cols);
  const std::size_t want = std::size_t(rows) * std::size_t(cols) * sizeof(typename M::Scalar);
  if (bytes.size() != want) throw IoError("unexpected array size in " + path.string());
  std::memcpy(mat.data(), bytes.data(), want);
}

}  // namespace

HierarchyConfig HierarchyConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("hierarchy config: ") + e.what());
  }
  HierarchyConfig cfg;
  cfg.metric = metric_from_string(j.value("metric", "squared_euclidean"));
  cfg.keep_exact = j.value("keep_exact", true);
  cfg.seed = j.value("seed", std::uint64_t(0));
  if (!j.contains("levels") || !j["levels"].is_array() || j["levels"].empty()) {
    throw ConfigError("hierarchy config: levels array required");
  }
  for (const auto& e : j["levels"]) {
    LevelConfig lc;
    const std::string kind = e.value("kind", "");
    if (kind == "vq") {
      lc.kind = LevelKind::kVqBroadcast;
      lc.centroids = e.value("centroids", Index(0));
      const std::string store = e.value("store", "float32");
      if (store == "int8") lc.store = CentroidStore::kInt8;
      else if (store == "float32") lc.store = CentroidStore::kFloat32;
      else throw ConfigError("hierarchy config: unknown store " + store);
    } else if (kind == "pq") {
      lc.kind = LevelKind::kPq;
      lc.dims_per_block = e.value("dims_per_block", Index(0));
      lc.bits = e.value("bits", 8);
      lc.train_sample = e.value("train_sample", Index(0));
    } else {
      throw ConfigError("hierarchy config: unknown level kind " + kind);
    }
    lc.iterations = e.value("iterations", 0);
    cfg.levels.push_back(lc);
  }
  return cfg;
}

std::string HierarchyConfig::to_json_text() const {
  json j;
  j["metric"] = to_string(metric);
  j["keep_exact"] = keep_exact;
  j["seed"] = seed;
  j["levels"] = json::array();
  for (const auto& lc : levels) {
    json e;
    if (lc.kind == LevelKind::kVqBroadcast) {
      e["kind"] = "vq";
      e["centroids"] = lc.centroids;
      e["store"] = lc.store == CentroidStore::kInt8 ? "int8" : "float32";
    } else {
      e["kind"] = "pq";
      e["dims_per_block"] = lc.dims_per_block;
      e["bits"] = lc.bits;
      if (lc.train_sample > 0) e["train_sample"] = lc.train_sample;
    }
    if (lc.iterations > 0) e["iterations"] = lc.iterations;
    j["levels"].push_back(e);
  }
  return j.dump(2);
}

std::vector<std::int64_t> planned_footprints(const HierarchyConfig& config, Index n, Index d,
                                             int bytes_per_dim) {
  const ConfigLayout layout = analyze_config(config);
  std::vector<Index> stage_sizes;  // rows of each vq stage's table
  for (const std::size_t idx : layout.vq_entries) {
    stage_sizes.push_back(config.levels[idx].centroids);
  }
  std::vector<std::int64_t> footprints;
  for (const auto& lc : config.levels) {
    if (lc.kind == LevelKind::kVqBroadcast) {
      footprints.push_back(vq_footprint(lc.centroids, d, lc.store));
    } else {
      // Find this pq entry's target row count.
      Index rows = n;
      for (const auto& [idx, stage] : layout.pq_entries) {
        if (&config.levels[idx] == &lc && stage >= 0) rows = stage_sizes[std::size_t(stage)];
      }
      footprints.push_back(pq_footprint(rows, d, lc.dims_per_block, lc.bits));
    }
  }
  if (config.keep_exact) footprints.push_back(std::int64_t(n) * d * bytes_per_dim);
  return footprints;
}

std::vector<std::int64_t> QuantizationHierarchy::footprints() const {
  std::vector<std::int64_t> out;
  for (const auto& level : levels) out.push_back(level.footprint_bytes);
  return out;
}

QuantizationHierarchy build_hierarchy(const Dataset& ds, const HierarchyConfig& config,
                                      std::uint64_t seed) {
  const Index n = ds.rows();
  const Index d = ds.dim();
  if (n < 1) throw InvalidArgument("build_hierarchy: empty dataset");
  const ConfigLayout layout = analyze_config(config);

  QuantizationHierarchy h;
  h.data = ds.vectors;
  h.element_kind = ds.kind;
  h.metric = config.metric;
  h.seed = seed;

  // Train the vq chain from the finest stage down, each stage quantizing the
  // previous stage's centroid table.
  const std::size_t stages = layout.vq_entries.size();
  std::vector<VQCodebook> books(stages);
  std::vector<std::vector<std::int32_t>> composed(stages);  // point -> stage rep
  for (std::size_t s = stages; s-- > 0;) {
    const LevelConfig& lc = config.levels[layout.vq_entries[s]];
    const Mat& table = (s + 1 < stages) ? books[s + 1].centroids : h.data;
    if (lc.centroids > table.rows()) {
      throw ConfigError("vq stage requests more centroids than available points");
    }
    const int iters = lc.iterations > 0 ? lc.iterations : kDefaultVqIterations;
    books[s] = train_vq(table, lc.centroids, mix_seed(seed, 0x100 + s), iters);
    if (s + 1 < stages) {
      composed[s].resize(std::size_t(n));
      for (Index j = 0; j < n; ++j) {
        composed[s][std::size_t(j)] =
            books[s].codes[std::size_t(composed[s + 1][std::size_t(j)])];
      }
    } else {
      composed[s] = books[s].codes;
    }
  }

  for (std::size_t i = 0; i < config.levels.size(); ++i) {
    const LevelConfig& lc = config.levels[i];
    QuantizationLevel level;
    if (lc.kind == LevelKind::kVqBroadcast) {
      std::size_t s = 0;
      while (layout.vq_entries[s] != i) ++s;
      level.kind = LevelKind::kVqBroadcast;
      level.rep_count = lc.centroids;
      level.rep_of_point = composed[s];
      level.buckets = build_buckets(level.rep_of_point, level.rep_count);
      level.store = lc.store;
      if (lc.store == CentroidStore::kInt8) {
        int8_quantize(books[s].centroids, level.centroids_i8, level.i8_scales);
        level.centroids = int8_dequantize(level.centroids_i8, level.i8_scales);
      } else {
        level.centroids = books[s].centroids;
      }
      level.footprint_bytes = vq_footprint(lc.centroids, d, lc.store);
    } else {
      int stage = -1;
      for (const auto& [idx, st] : layout.pq_entries) {
        if (idx == i) stage = st;
      }
      const Mat& table = stage >= 0 ? books[std::size_t(stage)].centroids : h.data;
      level.kind = LevelKind::kPq;
      level.rep_count = table.rows();
      if (stage >= 0) {
        level.rep_of_point = composed[std::size_t(stage)];
        level.buckets = build_buckets(level.rep_of_point, level.rep_count);
      }
      const int iters = lc.iterations > 0 ? lc.iterations : kDefaultPqIterations;
      level.pq = train_pq(table, lc.dims_per_block, lc.bits, mix_seed(seed, 0x200 + i), iters,
                          lc.train_sample);
      level.footprint_bytes = pq_footprint(level.rep_count, d, lc.dims_per_block, lc.bits);
    }
    level.compression_ratio = double(level.footprint_bytes) / double(h.dataset_bytes());
    h.levels.push_back(std::move(level));
  }

  if (config.keep_exact) {
    QuantizationLevel level;
    level.kind = LevelKind::kExact;
    level.rep_count = n;
    level.footprint_bytes = h.dataset_bytes();
    level.compression_ratio = 1.0;
    h.levels.push_back(std::move(level));
  }

  for (std::size_t i = 1; i < h.levels.size(); ++i) {
    if (h.levels[i].footprint_bytes <= h.levels[i - 1].footprint_bytes) {
      throw ConfigError("hierarchy level footprints must be strictly ascending");
    }
  }
  return h;
}

void save_hierarchy(const QuantizationHierarchy& h, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["n"] = h.point_count();
  manifest["d"] = h.dim();
  manifest["metric"] = to_string(h.metric);
  manifest["element_kind"] = h.element_kind == ElementKind::kUint8 ? "uint8" : "float32";
  manifest["seed"] = h.seed;
  manifest["levels"] = json::array();

  write_blob(dir / "data_f32.bin", h.data.data(), std::size_t(h.data.size()) * 4);

  for (std::size_t i = 0; i < h.levels.size(); ++i) {
    const auto& level = h.levels[i];
    const std::string tag = "level_" + std::to_string(i);
    json e;
    e["footprint_bytes"] = level.footprint_bytes;
    e["rep_count"] = level.rep_count;
    e["compression_ratio"] = level.compression_ratio;
    if (!level.identity_reps()) {
      write_blob(dir / (tag + "_reps.bin"), level.rep_of_point.data(),
                 level.rep_of_point.size() * 4);
    }
    if (level.kind == LevelKind::kVqBroadcast) {
      e["kind"] = "vq_broadcast";
      e["store"] = level.store == CentroidStore::kInt8 ? "int8" : "float32";
      if (level.store == CentroidStore::kInt8) {
        write_blob(dir / (tag + "_centroids_i8.bin"), level.centroids_i8.data(),
                   std::size_t(level.centroids_i8.size()));
        write_blob(dir / (tag + "_scales_f32.bin"), level.i8_scales.data(),
                   std::size_t(level.i8_scales.size()) * 4);
      } else {
        write_blob(dir / (tag + "_centroids_f32.bin"), level.centroids.data(),
                   std::size_t(level.centroids.size()) * 4);
      }
    } else if (level.kind == LevelKind::kPq) {
      e["kind"] = "pq";
      e["bits"] = level.pq.bits;
      e["subspace_dims"] = level.pq.subspace_dims;
      write_blob(dir / (tag + "_codes.bin"), level.pq.codes.data(),
                 std::size_t(level.pq.codes.size()));
      std::vector<float> cb;
      for (const auto& sub : level.pq.codebooks) {
        cb.insert(cb.end(), sub.data(), sub.data() + sub.size());
      }
      write_blob(dir / (tag + "_codebooks_f32.bin"), cb.data(), cb.size() * 4);
    } else {
      e["kind"] = "exact";
    }
    manifest["levels"].push_back(e);
  }
  const std::string text = manifest.dump(2);
  write_blob(dir / "manifest.json", text.data(), text.size());
}

QuantizationHierarchy load_hierarchy(const std::filesystem::path& dir) {
  const auto bytes = read_blob(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(std::string(bytes.begin(), bytes.end()));
  } catch (const json::exception& e) {
    throw IoError(std::string("hierarchy manifest: ") + e.what());
  }
  QuantizationHierarchy h;
  const Index n = manifest.at("n").get<Index>();
  const Index d = manifest.at("d").get<Index>();
  h.metric = metric_from_string(manifest.at("metric").get<std::string>());
  h.element_kind = manifest.at("element_kind").get<std::string>() == "uint8"
                       ? ElementKind::kUint8
                       : ElementKind::kFloat32;
  h.seed = manifest.at("seed").get<std::uint64_t>();
  load_matrix(dir / "data_f32.bin", h.data, n, d);

  std::size_t i = 0;
  for (const auto& e : manifest.at("levels")) {
    const std::string tag = "level_" + std::to_string(i);
    QuantizationLevel level;
    level.footprint_bytes = e.at("footprint_bytes").get<std::int64_t>();
    level.rep_count = e.at("rep_count").get<Index>();
    level.compression_ratio = e.at("compression_ratio").get<double>();
    const std::string kind = e.at("kind").get<std::string>();
    if (std::filesystem::exists(dir / (tag + "_reps.bin"))) {
      const auto reps = read_blob(dir / (tag + "_reps.bin"));
      level.rep_of_point.resize(reps.size() / 4);
      std::memcpy(level.rep_of_point.data(), reps.data(), reps.size());
      level.buckets = build_buckets(level.rep_of_point, level.rep_count);
    }
    if (kind == "vq_broadcast") {
      level.kind = LevelKind::kVqBroadcast;
      level.store = e.at("store").get<std::string>() == "int8" ? CentroidStore::kInt8
                                                               : CentroidStore::kFloat32;
      if (level.store == CentroidStore::kInt8) {
        load_matrix(dir / (tag + "_centroids_i8.bin"), level.centroids_i8, level.rep_count, d);
        const auto scales = read_blob(dir / (tag + "_scales_f32.bin"));
        level.i8_scales.resize(d);
        std::memcpy(level.i8_scales.data(), scales.data(), std::size_t(d) * 4);
        level.centroids = int8_dequantize(level.centroids_i8, level.i8_scales);
      } else {
        load_matrix(dir / (tag + "_centroids_f32.bin"), level.centroids, level.rep_count, d);
      }
    } else if (kind == "pq") {
      level.kind = LevelKind::kPq;
      level.pq.bits = e.at("bits").get<int>();
      level.pq.subspace_dims = e.at("subspace_dims").get<std::vector<Index>>();
      load_matrix(dir / (tag + "_codes.bin"), level.pq.codes, level.rep_count,
                  level.pq.subspace_count());
      const auto cb = read_blob(dir / (tag + "_codebooks_f32.bin"));
      const Index centers = Index(1) << level.pq.bits;
      std::size_t offset = 0;
      for (const Index w : level.pq.subspace_dims) {
        Mat sub(centers, w);
        std::memcpy(sub.data(), cb.data() + offset, std::size_t(centers) * w * 4);
        offset += std::size_t(centers) * w * 4;
        level.pq.codebooks.push_back(std::move(sub));
      }
    } else {
      level.kind = LevelKind::kExact;
    }
    h.levels.push_back(std::move(level));
    ++i;
  }
  return h;
}

std::uint64_t hierarchy_hash(const std::filesystem::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto bytes = read_blob(f);
    const std::string name = f.filename().string();
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

LevelScorer::LevelScorer(const QuantizationHierarchy& h, Index level,
                         Eigen::Ref<const Vec> query)
    : h_(&h), level_(&h.levels.at(std::size_t(level))), query_(query) {
  if (query_.size() != h.dim()) throw InvalidArgument("scorer: query dimension mismatch");
  if (level_->kind == LevelKind::kVqBroadcast) {
    vq_distances_.resize(level_->rep_count);
    for (Index c = 0; c < level_->rep_count; ++c) {
      vq_distances_[c] = point_distance(h.metric, query_.transpose(), level_->centroids.row(c));
    }
  } else if (level_->kind == LevelKind::kPq) {
    lut_ = build_lookup_table(level_->pq, h.metric, query_);
  }
}

double LevelScorer::rep_distance(Index rep) const {
  switch (level_->kind) {
    case LevelKind::kVqBroadcast:
      return vq_distances_[rep];
    case LevelKind::kPq:
      return lut_.score(level_->pq, rep);
    case LevelKind::kExact:
    default:
      return point_distance(h_->metric, query_.transpose(), h_->data.row(rep));
  }
}

VecD LevelScorer::materialize_rep_distances() const {
  if (level_->kind == LevelKind::kVqBroadcast) return vq_distances_;
  VecD out(level_->rep_count);
  for (Index r = 0; r < level_->rep_count; ++r) out[r] = rep_distance(r);
  return out;
}

double quantized_distance(const QuantizationHierarchy& h, Index level,
                          Eigen::Ref<const Vec> query, Index point) {
  if (level < 0 || level >= h.level_count()) throw InvalidArgument("level out of range");
  if (point < 0 || point >= h.point_count()) throw InvalidArgument("point index out of range");
  LevelScorer scorer(h, level, query);
  return scorer.point_score(point);
}

}  // namespace qtune
