#ifndef PFX_COMMON_HPP
#define PFX_COMMON_HPP

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace pfx {

inline constexpr const char* kLibraryVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Deterministic randomness.
//
// All stochastic components (generators, bootstrap, mtry draws, perturbations)
// go through Rng so that a seed pins the output bit-for-bit on every platform.
// std::mt19937_64 has a fully specified output sequence; the distributions in
// <random> do not, so the uniform/normal/bounded-int transforms live here.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Inverse of the standard normal CDF (Acklam's rational approximation,
// relative error below 1.2e-9 everywhere).
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("inverse_normal_cdf: p must be in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed == 0 ? 0x106689d45497fdb5ULL : seed)) {
    // Warm the engine through splitmix so nearby seeds decorrelate.
    std::uint64_t s = state_;
    for (auto& w : mt_state_init_) {
      s = splitmix64(s);
      w = s;
    }
    idx_ = 312;
  }

  std::uint64_t next_u64() {
    // mt19937_64, inlined (the standard engine object is large to copy around;
    // this keeps Rng cheap to pass by value in tests).
    if (idx_ >= 312) twist();
    std::uint64_t x = mt_state_init_[idx_++];
    x ^= (x >> 29) & 0x5555555555555555ULL;
    x ^= (x << 17) & 0x71d67fffeda60000ULL;
    x ^= (x << 37) & 0xfff7eee000000000ULL;
    x ^= x >> 43;
    return x;
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1), safe for inverse-CDF transforms.
  double uniform_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return inverse_normal_cdf(uniform_open01()); }

  // Uniform integer in [0, bound), bound >= 1. Masked rejection sampling.
  std::uint64_t bounded(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::bounded: bound must be positive");
    if (bound == 1) return 0;
    std::uint64_t mask = ~0ULL >> __builtin_clzll(bound - 1 | 1);
    for (;;) {
      std::uint64_t v = next_u64() & mask;
      if (v < bound) return v;
    }
  }

  // Derive an independent stream, e.g. one per tree or per instance.
  Rng derive(std::uint64_t stream) const {
    return Rng(splitmix64(state_ ^ splitmix64(stream + 0x9e3779b97f4a7c15ULL)));
  }

 private:
  void twist() {
    constexpr std::uint64_t kLoMask = 0x7fffffffULL;
    constexpr std::uint64_t kHiMask = ~kLoMask;
    for (int i = 0; i < 312; ++i) {
      std::uint64_t x = (mt_state_init_[i] & kHiMask) | (mt_state_init_[(i + 1) % 312] & kLoMask);
      std::uint64_t v = x >> 1;
      if (x & 1ULL) v ^= 0xb5026f5aa96619e9ULL;
      mt_state_init_[i] = mt_state_init_[(i + 156) % 312] ^ v;
    }
    idx_ = 0;
  }

  std::uint64_t state_;
  std::uint64_t mt_state_init_[312];
  int idx_;
};

// ---------------------------------------------------------------------------
// Content hashing (FNV-1a over the little-endian bytes of doubles/ints).
// Used to tie serialized models to the dataset they were fit on.
// ---------------------------------------------------------------------------

class Fnv1a {
 public:
  void update_bytes(const void* data, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    __builtin_memcpy(&bits, &v, sizeof(bits));
    update_bytes(&bits, sizeof(bits));
  }
  void update(std::uint64_t v) { update_bytes(&v, sizeof(v)); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

// ---------------------------------------------------------------------------
// Parallelism. Queries against a fitted forest are pure, so batches are
// sharded over threads; every job writes to its own output slot, which keeps
// results independent of scheduling and of the thread count.
// ---------------------------------------------------------------------------

inline int& thread_count_ref() {
  static int n = 0;  // 0 = use hardware concurrency
  return n;
}

inline void set_thread_count(int n) { thread_count_ref() = n; }

inline int effective_thread_count() {
  int n = thread_count_ref();
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  int nthreads = effective_thread_count();
  if (count == 0) return;
  if (nthreads <= 1 || count == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      fn(i);
    }
  };
  std::vector<std::thread> threads;
  int spawn = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(nthreads), count));
  threads.reserve(static_cast<std::size_t>(spawn));
  for (int t = 0; t < spawn; ++t) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
}

}  // namespace pfx

#endif  // PFX_COMMON_HPP
