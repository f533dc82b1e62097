#ifndef KJDL_COMMON_HPP
#define KJDL_COMMON_HPP

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kjdl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexList = std::vector<int>;

// Thrown for malformed arguments and violated preconditions (bad shapes,
// out-of-range parameters). The CLI maps this to the data-error exit code.
struct InvalidInput : std::runtime_error {
  explicit InvalidInput(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for unreadable/corrupt files.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a numerical routine cannot meet its contract.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for bad run configurations (unknown method tags, empty grids, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// ---------------------------------------------------------------------------
// Content hashing (FNV-1a over raw little-endian bytes). Used to fingerprint
// dictionaries so Gram caches built from a stale dictionary can be detected.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t hash_matrix(const Matrix& m) {
  std::uint64_t h = fnv1a(nullptr, 0);
  std::uint32_t dims[2] = {static_cast<std::uint32_t>(m.rows()),
                           static_cast<std::uint32_t>(m.cols())};
  h = fnv1a(dims, sizeof(dims), h);
  // Eigen stores column-major doubles contiguously.
  h = fnv1a(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()), h);
  return h;
}

// ---------------------------------------------------------------------------
// Seeded randomness. Every stage of a run derives its generator from the one
// config seed plus a fixed stream id, so stages stay decoupled and reruns are
// bit-reproducible.
// ---------------------------------------------------------------------------

namespace stream {
inline constexpr std::uint64_t kInitDictionary = 1;
inline constexpr std::uint64_t kUnsupervisedDraw = 2;
inline constexpr std::uint64_t kTaskDraw = 3;
inline constexpr std::uint64_t kSplit = 4;
inline constexpr std::uint64_t kSynthPrototypes = 5;
inline constexpr std::uint64_t kSynthNoise = 6;
inline constexpr std::uint64_t kCvFolds = 7;
inline constexpr std::uint64_t kGradCheck = 8;
}  // namespace stream

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream_id) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ stream_id));
}

// Unbiased index draw in [0, n). Hand-rolled (rejection sampling) because the
// standard distributions are implementation-defined and would break
// reproducibility across toolchains.
inline std::size_t uniform_index(std::size_t n, std::mt19937_64& rng) {
  if (n == 0) throw InvalidInput("uniform_index: empty range");
  const std::uint64_t bound = n;
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return static_cast<std::size_t>(r % bound);
  }
}

// Uniform double in (0, 1].
inline double uniform_unit(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

// Standard normal via Box-Muller, again for cross-toolchain determinism.
inline double normal_draw(std::mt19937_64& rng) {
  const double u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Sample k distinct indices from [0, n) (partial Fisher-Yates), order of draw.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           std::mt19937_64& rng) {
  if (k > n) throw InvalidInput("sample_without_replacement: k > n");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(n - i, rng);
    std::swap(pool[i], pool[j]);
    out[i] = pool[i];
  }
  return out;
}

}  // namespace kjdl

#endif  // KJDL_COMMON_HPP
