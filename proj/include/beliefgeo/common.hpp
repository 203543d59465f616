#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace beliefgeo {

template <class Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

using Matd = Mat<double>;
using Matf = Mat<float>;
using Vecd = Vec<double>;

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes; library code throws.
// ---------------------------------------------------------------------------

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Non-finite value produced by a numeric kernel; carries the op/stage name.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bayes filter saw a symbol with zero probability under the current belief.
struct FilterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define BG_CHECK(cond, msg)                                   \
  do {                                                        \
    if (!(cond)) throw ::beliefgeo::ContractError(msg);       \
  } while (0)

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, 64-bit). Used for config hashes and RNG stream names.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// RNG. One root seed; named substreams so every stage draws independently.
// Explicit float construction keeps streams identical across platforms.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    // rejection sampling keeps the draw unbiased
    const std::uint64_t lim = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = eng_();
    while (v >= lim) v = eng_();
    return v % n;
  }

  int index(std::size_t n) { return static_cast<int>(below(n)); }

  // sample from unnormalized non-negative weights
  int categorical(const Vecd& w) {
    const double total = w.sum();
    double r = uniform() * total;
    for (int i = 0; i < w.size(); ++i) {
      r -= w[i];
      if (r < 0.0) return i;
    }
    return static_cast<int>(w.size()) - 1;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Derives a substream from (root seed, stream name, index).
inline Rng rng_stream(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
  std::uint64_t h = fnv1a64(name);
  h ^= root + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h ^= index * 0xff51afd7ed558ccdull;
  // splitmix64 finalizer to decorrelate nearby seeds
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  h = h ^ (h >> 31);
  return Rng(h);
}

}  // namespace beliefgeo
