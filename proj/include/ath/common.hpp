#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ath {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Contract violation in inputs or configuration. The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while reading or writing a file. The CLI maps this to exit code 3.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure that indicates a bug rather than bad input
/// (e.g. an indefinite matrix reaching an SPD solve).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic random source. Sampling helpers are written out explicitly
/// (instead of std:: distributions) so that a fixed seed yields the same
/// stream on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    const double u2 = uniform();
    constexpr double two_pi = 6.28318530717958647692;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  /// Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % n;
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  /// k distinct indices drawn from [0, n), in draw order.
  std::vector<Index> sample_without_replacement(Index n, Index k) {
    if (k > n) throw ValidationError("cannot sample " + std::to_string(k) +
                                     " items from " + std::to_string(n));
    std::vector<Index> pool(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) {
      const std::uint64_t j = i + below(static_cast<std::uint64_t>(n - i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
      out.push_back(pool[static_cast<std::size_t>(i)]);
    }
    return out;
  }

  Matrix normal_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

 private:
  std::mt19937_64 gen_;
};

namespace detail {

/// Intra-run thread cap from ATH_THREADS (0 or unset = hardware concurrency).
inline unsigned thread_cap() {
  static const unsigned cap = [] {
    if (const char* env = std::getenv("ATH_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v > 0) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
  }();
  return cap;
}

/// Runs fn(begin, end) over a partition of [0, n). Callers write disjoint
/// output ranges only, so the result is identical for any thread count.
template <typename Fn>
void parallel_for(Index n, Fn&& fn) {
  if (n <= 0) return;
  const unsigned workers =
      std::min<unsigned>(thread_cap(), static_cast<unsigned>(n));
  if (workers <= 1) {
    fn(Index{0}, n);
    return;
  }
  const Index chunk = (n + static_cast<Index>(workers) - 1) / static_cast<Index>(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const Index begin = static_cast<Index>(w) * chunk;
    const Index end = std::min<Index>(begin + chunk, n);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace detail

}  // namespace ath
