#ifndef KJDL_DATA_IO_HPP
#define KJDL_DATA_IO_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "kjdl/common.hpp"
#include "kjdl/task.hpp"

namespace kjdl {

// ---------------------------------------------------------------------------
// Hyperspectral cube + label-map containers and their self-describing binary
// files, neighborhood extraction, stratified splitting, and the synthetic
// benchmark generator the end-to-end tests run on.
//
// File formats (fixed little-endian):
//   cube:   magic "KJHC", version u32, height u32, width u32, bands u32,
//           then height*width*bands f64 in (row, col, band) nesting order.
//   labels: magic "KJHL", version u32, height u32, width u32,
//           then height*width u16 class ids row-major (0 = unlabeled).
// ---------------------------------------------------------------------------

struct HsiCube {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  Eigen::Index bands = 0;
  Matrix values;        // bands x (height*width); pixel p = row*width + col
  IndexList band_mask;  // original indices of the retained bands

  Eigen::Index pixel_count() const { return height * width; }
  Eigen::Index pixel_id(Eigen::Index r, Eigen::Index c) const { return r * width + c; }
};

struct LabelMap {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  std::vector<int> grid;  // row-major; 0 = unlabeled, 1..C = class

  int at(Eigen::Index r, Eigen::Index c) const {
    return grid[static_cast<std::size_t>(r * width + c)];
  }
};

namespace detail {

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline std::uint32_t read_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void write_u16_le(std::ostream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

inline std::uint16_t read_u16_le(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (static_cast<std::uint16_t>(b[1]) << 8));
}

inline void write_f64_le(std::ostream& os, double v) {
  const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline double read_f64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

// Scale a pixel to unit norm unless it already is (within 1e-9) or is zero;
// skipping near-unit pixels keeps save->load round trips bit-identical.
inline void normalize_pixel(Eigen::Ref<Vector> x) {
  const double nrm = x.norm();
  if (nrm == 0.0) return;
  if (std::abs(nrm - 1.0) > 1e-9) x /= nrm;
}

}  // namespace detail

inline void save_cube(const std::string& path, const HsiCube& cube) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_cube: cannot open " + path);
  os.write("KJHC", 4);
  detail::write_u32_le(os, 1u);
  detail::write_u32_le(os, static_cast<std::uint32_t>(cube.height));
  detail::write_u32_le(os, static_cast<std::uint32_t>(cube.width));
  detail::write_u32_le(os, static_cast<std::uint32_t>(cube.bands));
  // (row, col, band) nesting = columns of `values` in pixel order.
  for (Eigen::Index p = 0; p < cube.pixel_count(); ++p)
    for (Eigen::Index b = 0; b < cube.bands; ++b)
      detail::write_f64_le(os, cube.values(b, p));
  if (!os) throw IoError("save_cube: write failed for " + path);
}

inline HsiCube load_cube(const std::string& path, const IndexList& band_drop = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_cube: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "KJHC")
    throw IoError("load_cube: bad magic in " + path);
  const std::uint32_t version = detail::read_u32_le(is);
  if (version != 1u) throw IoError("load_cube: unsupported version in " + path);
  HsiCube cube;
  cube.height = detail::read_u32_le(is);
  cube.width = detail::read_u32_le(is);
  const Eigen::Index raw_bands = detail::read_u32_le(is);
  if (cube.height <= 0 || cube.width <= 0 || raw_bands <= 0)
    throw IoError("load_cube: degenerate dimensions in " + path);

  std::vector<char> drop(static_cast<std::size_t>(raw_bands), 0);
  for (Eigen::Index b : band_drop) {
    if (b < 0 || b >= raw_bands)
      throw InvalidInput("load_cube: drop index out of range");
    drop[static_cast<std::size_t>(b)] = 1;
  }
  for (Eigen::Index b = 0; b < raw_bands; ++b)
    if (!drop[static_cast<std::size_t>(b)]) cube.band_mask.push_back(b);
  if (cube.band_mask.empty())
    throw InvalidInput("load_cube: drop list removes every band");

  cube.bands = static_cast<Eigen::Index>(cube.band_mask.size());
  cube.values.resize(cube.bands, cube.pixel_count());
  Vector raw(raw_bands);
  for (Eigen::Index p = 0; p < cube.pixel_count(); ++p) {
    for (Eigen::Index b = 0; b < raw_bands; ++b) raw(b) = detail::read_f64_le(is);
    if (!is) throw IoError("load_cube: truncated payload in " + path);
    for (Eigen::Index b = 0; b < cube.bands; ++b)
      cube.values(b, p) = raw(cube.band_mask[static_cast<std::size_t>(b)]);
  }
  if (!cube.values.allFinite())
    throw IoError("load_cube: non-finite payload in " + path);
  for (Eigen::Index p = 0; p < cube.pixel_count(); ++p)
    detail::normalize_pixel(cube.values.col(p));
  return cube;
}

inline void save_labels(const std::string& path, const LabelMap& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_labels: cannot open " + path);
  os.write("KJHL", 4);
  detail::write_u32_le(os, 1u);
  detail::write_u32_le(os, static_cast<std::uint32_t>(labels.height));
  detail::write_u32_le(os, static_cast<std::uint32_t>(labels.width));
  for (int v : labels.grid) detail::write_u16_le(os, static_cast<std::uint16_t>(v));
  if (!os) throw IoError("save_labels: write failed for " + path);
}

// Number of classes; verifies ids are contiguous 1..C (0 allowed anywhere).
inline int class_count(const LabelMap& labels) {
  int C = 0;
  for (int v : labels.grid) C = std::max(C, v);
  if (C == 0) throw InvalidInput("label map contains no labeled pixels");
  std::vector<char> seen(static_cast<std::size_t>(C) + 1, 0);
  for (int v : labels.grid) {
    if (v < 0) throw InvalidInput("label map contains a negative id");
    seen[static_cast<std::size_t>(v)] = 1;
  }
  for (int c = 1; c <= C; ++c)
    if (!seen[static_cast<std::size_t>(c)])
      throw InvalidInput("label ids not contiguous: class " + std::to_string(c) +
                         " missing");
  return C;
}

inline LabelMap load_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_labels: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "KJHL")
    throw IoError("load_labels: bad magic in " + path);
  if (detail::read_u32_le(is) != 1u)
    throw IoError("load_labels: unsupported version in " + path);
  LabelMap labels;
  labels.height = detail::read_u32_le(is);
  labels.width = detail::read_u32_le(is);
  if (labels.height <= 0 || labels.width <= 0)
    throw IoError("load_labels: degenerate dimensions in " + path);
  labels.grid.resize(static_cast<std::size_t>(labels.height * labels.width));
  for (int& v : labels.grid) {
    v = detail::read_u16_le(is);
    if (!is) throw IoError("load_labels: truncated payload in " + path);
  }
  class_count(labels);
  return labels;
}

// Stratified split of the labeled pixels. Per class the training share is
// round(fraction * class_size) clamped to [1, class_size - 1], so both sides
// keep at least one pixel of every class. Returned id lists are ascending.
inline std::pair<IndexList, IndexList> split(const LabelMap& labels,
                                             double train_fraction,
                                             std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidInput("split: train_fraction must lie in (0, 1)");
  const int C = class_count(labels);
  std::vector<IndexList> by_class(static_cast<std::size_t>(C));
  for (std::size_t p = 0; p < labels.grid.size(); ++p)
    if (labels.grid[p] > 0)
      by_class[static_cast<std::size_t>(labels.grid[p] - 1)].push_back(
          static_cast<int>(p));

  auto rng = make_rng(seed, stream::kSplit);
  IndexList train, test;
  for (int c = 0; c < C; ++c) {
    const IndexList& ids = by_class[static_cast<std::size_t>(c)];
    if (ids.size() < 2)
      throw InvalidInput("split: class " + std::to_string(c + 1) +
                         " has fewer than 2 labeled pixels");
    const auto size = ids.size();
    std::size_t count = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(size)));
    count = std::max<std::size_t>(1, std::min(count, size - 1));
    const std::vector<std::size_t> picks = sample_without_replacement(size, count, rng);
    std::vector<char> is_train(size, 0);
    for (std::size_t i : picks) is_train[i] = 1;
    for (std::size_t i = 0; i < size; ++i)
      (is_train[i] ? train : test).push_back(ids[i]);
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

// Center pixel first, then the S-1 nearest grid positions by Euclidean
// distance (ties in row-major order of the neighbor position); positions
// beyond the image edge read the nearest in-image pixel (edge replication).
inline Matrix neighborhood(const HsiCube& cube, Eigen::Index row, Eigen::Index col,
                           Eigen::Index S) {
  if (row < 0 || row >= cube.height || col < 0 || col >= cube.width)
    throw InvalidInput("neighborhood: center out of bounds");
  if (S < 1) throw InvalidInput("neighborhood: S must be >= 1");

  Matrix out(cube.bands, S);
  out.col(0) = cube.values.col(cube.pixel_id(row, col));
  if (S == 1) return out;

  // Grow a radius until at least S-1 offsets sit within Euclidean distance R
  // of the center; everything outside the collected box is farther than R,
  // so the nearest S-1 are certainly among the collected candidates.
  struct Cand {
    Eigen::Index d2, r, c;
  };
  std::vector<Cand> cands;
  for (Eigen::Index R = 1;; ++R) {
    cands.clear();
    Eigen::Index within = 0;
    for (Eigen::Index dr = -R; dr <= R; ++dr)
      for (Eigen::Index dc = -R; dc <= R; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const Eigen::Index d2 = dr * dr + dc * dc;
        cands.push_back({d2, row + dr, col + dc});
        if (d2 <= R * R) ++within;
      }
    if (within >= S - 1) break;
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    if (a.r != b.r) return a.r < b.r;
    return a.c < b.c;
  });
  for (Eigen::Index i = 0; i + 1 < S; ++i) {
    const Eigen::Index rr = std::clamp<Eigen::Index>(cands[i].r, 0, cube.height - 1);
    const Eigen::Index cc = std::clamp<Eigen::Index>(cands[i].c, 0, cube.width - 1);
    out.col(i + 1) = cube.values.col(cube.pixel_id(rr, cc));
  }
  return out;
}

inline Vector one_hot(int class_count, int label) {
  if (label < 1 || label > class_count) throw InvalidInput("one_hot: label out of range");
  Vector y = Vector::Zero(class_count);
  y(label - 1) = 1.0;
  return y;
}

// Assemble neighborhood samples for a set of labeled pixel ids.
inline TrainingSet make_training_set(const HsiCube& cube, const LabelMap& labels,
                                     const IndexList& pixel_ids, Eigen::Index S) {
  if (cube.height != labels.height || cube.width != labels.width)
    throw InvalidInput("make_training_set: cube/label dimensions differ");
  TrainingSet set;
  set.class_count = class_count(labels);
  set.samples.reserve(pixel_ids.size());
  for (Eigen::Index p : pixel_ids) {
    const int lab = labels.grid[static_cast<std::size_t>(p)];
    if (lab < 1) throw InvalidInput("make_training_set: unlabeled pixel selected");
    NeighborhoodSample s;
    s.pixels = neighborhood(cube, p / cube.width, p % cube.width, S);
    s.label = one_hot(static_cast<int>(set.class_count), lab);
    set.samples.push_back(std::move(s));
  }
  return set;
}

enum class SpatialLayout { Stripes, Blocks };

// Synthetic benchmark: C well-separated unit prototypes (pairwise |cosine|
// below 0.5), the image tiled into C contiguous regions, every pixel a
// normalized noisy copy of its region's prototype. The first
// pixels_per_class pixels of each region (row-major) carry the class label;
// any remaining region pixels stay unlabeled.
inline std::pair<HsiCube, LabelMap> synth_benchmark(int C, Eigen::Index n,
                                                    Eigen::Index pixels_per_class,
                                                    double noise_sigma,
                                                    SpatialLayout layout,
                                                    std::uint64_t seed) {
  if (C < 2) throw InvalidInput("synth_benchmark: need at least 2 classes");
  if (n < C) throw InvalidInput("synth_benchmark: band count below class count");
  if (pixels_per_class < 1) throw InvalidInput("synth_benchmark: empty classes");
  if (noise_sigma < 0.0) throw InvalidInput("synth_benchmark: negative noise");

  auto proto_rng = make_rng(seed, stream::kSynthPrototypes);
  Matrix protos(n, C);
  for (int c = 0; c < C; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      Vector v(n);
      for (Eigen::Index i = 0; i < n; ++i) v(i) = normal_draw(proto_rng);
      const double nrm = v.norm();
      if (nrm == 0.0) continue;
      v /= nrm;
      placed = true;
      for (int prev = 0; prev < c; ++prev)
        if (std::abs(v.dot(protos.col(prev))) >= 0.5) {
          placed = false;
          break;
        }
      if (placed) protos.col(c) = v;
    }
    if (!placed)
      throw NumericError("synth_benchmark: could not sample separated prototypes");
  }

  // Region geometry: per-class tiles large enough for pixels_per_class.
  const auto side = static_cast<Eigen::Index>(
      std::ceil(std::sqrt(static_cast<double>(pixels_per_class))));
  HsiCube cube;
  LabelMap labels;
  std::vector<int> region;  // per pixel: class id 1..C owning the region
  if (layout == SpatialLayout::Stripes) {
    const Eigen::Index rows_per_class = (pixels_per_class + side - 1) / side;
    cube.width = side;
    cube.height = rows_per_class * C;
    region.resize(static_cast<std::size_t>(cube.height * cube.width));
    for (Eigen::Index r = 0; r < cube.height; ++r)
      for (Eigen::Index c = 0; c < cube.width; ++c)
        region[static_cast<std::size_t>(r * cube.width + c)] =
            static_cast<int>(r / rows_per_class) + 1;
  } else {
    const auto gcols =
        static_cast<Eigen::Index>(std::ceil(std::sqrt(static_cast<double>(C))));
    const Eigen::Index grows = (C + gcols - 1) / gcols;
    cube.width = gcols * side;
    cube.height = grows * side;
    region.resize(static_cast<std::size_t>(cube.height * cube.width));
    for (Eigen::Index r = 0; r < cube.height; ++r)
      for (Eigen::Index c = 0; c < cube.width; ++c) {
        const Eigen::Index cell = (r / side) * gcols + (c / side);
        region[static_cast<std::size_t>(r * cube.width + c)] =
            cell < C ? static_cast<int>(cell) + 1 : 1;  // spillover cells unlabeled
      }
  }

  cube.bands = n;
  cube.values.resize(n, cube.pixel_count());
  for (Eigen::Index b = 0; b < n; ++b) cube.band_mask.push_back(b);
  auto noise_rng = make_rng(seed, stream::kSynthNoise);
  for (Eigen::Index p = 0; p < cube.pixel_count(); ++p) {
    Vector x = protos.col(region[static_cast<std::size_t>(p)] - 1);
    if (noise_sigma > 0.0)
      for (Eigen::Index b = 0; b < n; ++b) x(b) += noise_sigma * normal_draw(noise_rng);
    cube.values.col(p) = x;
    detail::normalize_pixel(cube.values.col(p));
  }

  labels.height = cube.height;
  labels.width = cube.width;
  labels.grid.assign(static_cast<std::size_t>(cube.pixel_count()), 0);
  std::vector<Eigen::Index> labeled(static_cast<std::size_t>(C), 0);
  for (std::size_t p = 0; p < labels.grid.size(); ++p) {
    const int c = region[p];
    if (labeled[static_cast<std::size_t>(c - 1)] < pixels_per_class) {
      labels.grid[p] = c;
      ++labeled[static_cast<std::size_t>(c - 1)];
    }
  }
  return {std::move(cube), std::move(labels)};
}

}  // namespace kjdl

#endif  // KJDL_DATA_IO_HPP
