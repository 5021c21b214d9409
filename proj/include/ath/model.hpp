#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ath/common.hpp"
#include "ath/data.hpp"
#include "ath/io_util.hpp"

namespace ath {

enum class Variant { U, M, S, K };

inline char variant_tag(Variant v) {
  switch (v) {
    case Variant::U: return 'U';
    case Variant::M: return 'M';
    case Variant::S: return 'S';
    case Variant::K: return 'K';
  }
  return '?';
}

inline Variant variant_from_tag(char c) {
  switch (c) {
    case 'U': return Variant::U;
    case 'M': return Variant::M;
    case 'S': return Variant::S;
    case 'K': return Variant::K;
  }
  throw ValidationError(std::string("unknown variant tag: ") + c);
}

/// Gaussian anchor map: component j of phi(x) is exp(-||x - anchor_j||^2 / sigma).
struct KernelMap {
  Matrix anchors;  // d x m
  double sigma = 1.0;

  Index anchor_count() const { return anchors.cols(); }
};

inline Vector kernel_features(const KernelMap& kernel, const Vector& x) {
  if (x.size() != kernel.anchors.rows())
    throw ValidationError("kernel input dimension " + std::to_string(x.size()) +
                          " does not match anchor dimension " +
                          std::to_string(kernel.anchors.rows()));
  Vector out(kernel.anchor_count());
  for (Index j = 0; j < kernel.anchor_count(); ++j)
    out(j) = std::exp(-(x - kernel.anchors.col(j)).squaredNorm() / kernel.sigma);
  return out;
}

/// Columnwise kernel map of a whole feature matrix; result is m x n.
inline Matrix kernel_features(const KernelMap& kernel, const Matrix& x) {
  if (x.rows() != kernel.anchors.rows())
    throw ValidationError("kernel input dimension " + std::to_string(x.rows()) +
                          " does not match anchor dimension " +
                          std::to_string(kernel.anchors.rows()));
  Matrix out(kernel.anchor_count(), x.cols());
  detail::parallel_for(x.cols(), [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i)
      for (Index j = 0; j < kernel.anchor_count(); ++j)
        out(j, i) = std::exp(-(x.col(i) - kernel.anchors.col(j)).squaredNorm() / kernel.sigma);
  });
  return out;
}

/// One side of the asymmetric pair: x -> projection^T x, optionally through
/// the kernel map first. input_dim is always the raw feature dimension.
struct HashFunction {
  Matrix projection;  // (d or m) x r
  std::optional<KernelMap> kernel;
  Index input_dim = 0;

  Index code_length() const { return projection.cols(); }

  void validate() const {
    if (projection.cols() < 1) throw ValidationError("empty projection");
    if (kernel) {
      if (kernel->sigma <= 0.0) throw ValidationError("kernel sigma must be positive");
      if (kernel->anchor_count() < 1) throw ValidationError("kernel needs anchors");
      if (kernel->anchors.rows() != input_dim)
        throw ValidationError("kernel anchors do not match the input dimension");
      if (projection.rows() != kernel->anchor_count())
        throw ValidationError("projection rows must equal the anchor count");
    } else if (projection.rows() != input_dim) {
      throw ValidationError("projection rows must equal the input dimension");
    }
  }
};

/// The asymmetric pair. Source and target input dimensions are independent.
struct HashModel {
  HashFunction source_fn;
  HashFunction target_fn;
  Index code_length = 0;
  Variant variant = Variant::U;

  const HashFunction& fn(DomainId k) const {
    return k == DomainId::source ? source_fn : target_fn;
  }
};

/// r x n matrix over {-1, +1}. Training-time codes additionally keep every
/// bit row balanced (|row sum| <= 1); encode() output is not rebalanced.
struct BinaryCodes {
  Matrix codes;

  Index code_length() const { return codes.rows(); }
  Index size() const { return codes.cols(); }

  bool is_balanced() const {
    for (Index i = 0; i < codes.rows(); ++i)
      if (std::abs(codes.row(i).sum()) > 1.0 + 1e-9) return false;
    return true;
  }
};

inline Matrix map_real(const HashFunction& fn, const Matrix& x) {
  if (fn.kernel) return fn.projection.transpose() * kernel_features(*fn.kernel, x);
  if (x.rows() != fn.projection.rows())
    throw ValidationError("input dimension " + std::to_string(x.rows()) +
                          " does not match projection rows " +
                          std::to_string(fn.projection.rows()));
  return fn.projection.transpose() * x;
}

inline Matrix map_real(const HashFunction& fn, const DomainDataset& data) {
  return map_real(fn, data.features);
}

inline double sign_bit(double v) { return v >= 0.0 ? 1.0 : -1.0; }

inline BinaryCodes encode(const HashFunction& fn, const Matrix& x) {
  BinaryCodes b;
  b.codes = map_real(fn, x).unaryExpr([](double v) { return sign_bit(v); });
  return b;
}

inline BinaryCodes encode(const HashFunction& fn, const DomainDataset& data) {
  return encode(fn, data.features);
}

/// Top-r principal directions of the centered covariance, eigenvalues
/// descending. Sign convention: the largest-magnitude entry of each
/// direction is made positive (first such entry on ties). When r exceeds the
/// input dimension the trailing columns start at zero; the solver's first
/// projection update fills them in.
inline Matrix pca_projection(const Matrix& x, Index r) {
  const Index d = x.rows();
  const Index n = x.cols();
  if (n < 2) throw ValidationError("PCA needs at least 2 samples");
  if (r < 1) throw ValidationError("code length r must be at least 1");
  const Vector mean = x.rowwise().mean();
  const Matrix centered = x.colwise() - mean;
  Matrix cov = (centered * centered.transpose()) / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) throw SolverError("eigendecomposition failed in PCA");
  Matrix proj = Matrix::Zero(d, r);
  for (Index k = 0; k < std::min(r, d); ++k) {
    Vector v = es.eigenvectors().col(d - 1 - k);  // ascending order in Eigen
    Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    proj.col(k) = v;
  }
  return proj;
}

/// Repairs each bit row to the solver's row-sum convention (0 for even n,
/// -1 for odd n) by flipping majority-sign entries whose underlying real
/// mapping has the smallest magnitude (index breaks ties). The odd-n target
/// matches the sorted-selection update, which always leaves one extra -1.
inline void balance_codes(BinaryCodes& codes, const Matrix& mapped) {
  const Index n = codes.size();
  const long target = n % 2 == 0 ? 0 : -1;
  for (Index i = 0; i < codes.code_length(); ++i) {
    const long sum = static_cast<long>(codes.codes.row(i).sum());
    if (sum == target) continue;
    const double majority = sum > target ? 1.0 : -1.0;
    std::vector<std::pair<double, Index>> order;
    for (Index j = 0; j < n; ++j)
      if (codes.codes(i, j) == majority) order.emplace_back(std::abs(mapped(i, j)), j);
    std::sort(order.begin(), order.end());
    const long flips = std::labs(sum - target) / 2;
    for (long f = 0; f < flips; ++f)
      codes.codes(i, order[static_cast<std::size_t>(f)].second) = -majority;
  }
}

/// Anchor count and width for the kernelized variant. sigma <= 0 selects the
/// median heuristic: the median squared sample-to-anchor distance over a
/// random subsample of at most 1000 pairs.
struct KernelSpec {
  Index m_s = 0;  // 0 = min(n_s, 300)
  Index m_t = 0;
  double sigma = 0.0;
};

namespace detail {

inline KernelMap build_kernel_map(const Matrix& x, Index m, double sigma, Rng& rng) {
  const Index n = x.cols();
  if (m < 1 || m > n)
    throw ValidationError("anchor count must lie in [1, n], got " + std::to_string(m));
  KernelMap kernel;
  kernel.anchors.resize(x.rows(), m);
  const auto picks = rng.sample_without_replacement(n, m);
  for (Index j = 0; j < m; ++j) kernel.anchors.col(j) = x.col(picks[static_cast<std::size_t>(j)]);
  if (sigma > 0.0) {
    kernel.sigma = sigma;
    return kernel;
  }
  std::vector<double> sq;
  const Index pairs = std::min<Index>(1000, n * m);
  sq.reserve(static_cast<std::size_t>(pairs));
  for (Index p = 0; p < pairs; ++p) {
    const Index i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    const Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(m)));
    sq.push_back((x.col(i) - kernel.anchors.col(j)).squaredNorm());
  }
  std::sort(sq.begin(), sq.end());
  const double median = sq[sq.size() / 2];
  kernel.sigma = median > 0.0 ? median : 1.0;
  return kernel;
}

}  // namespace detail

struct InitResult {
  HashModel model;
  BinaryCodes codes_s;
  BinaryCodes codes_t;
};

/// PCA initialization of both hash functions plus sign codes with balance
/// repair. For variant K the anchors are drawn first (source then target),
/// and the PCA runs on the kernelized features.
inline InitResult init_model(const GitrTask& task, Index r, Variant variant,
                             const std::optional<KernelSpec>& kernel_spec,
                             std::uint64_t seed) {
  Rng rng(seed);
  InitResult out;
  out.model.variant = variant;
  out.model.code_length = r;

  const auto build_side = [&](const DomainDataset& data, HashFunction& fn, BinaryCodes& codes) {
    fn.input_dim = data.dim();
    Matrix x_eff = data.features;
    if (variant == Variant::K) {
      KernelSpec spec = kernel_spec.value_or(KernelSpec{});
      Index m = data.domain_id == DomainId::source ? spec.m_s : spec.m_t;
      if (m <= 0) m = std::min<Index>(data.size(), 300);
      fn.kernel = detail::build_kernel_map(data.features, m, spec.sigma, rng);
      x_eff = kernel_features(*fn.kernel, data.features);
    }
    fn.projection = pca_projection(x_eff, r);
    fn.validate();
    const Matrix mapped = fn.projection.transpose() * x_eff;
    codes.codes = mapped.unaryExpr([](double v) { return sign_bit(v); });
    balance_codes(codes, mapped);
  };

  build_side(task.source, out.model.source_fn, out.codes_s);
  build_side(task.target, out.model.target_fn, out.codes_t);
  return out;
}

// --- model file (ATHF) -----------------------------------------------------
//
// magic "ATHF", version u32=1, variant tag u8, r u64, then per function
// (source first): input_dim u64, kernel flag u8, if kernel {anchor rows u64,
// anchor cols u64, anchors f64 row-major, sigma f64}, projection rows u64,
// projection cols u64, projection f64 row-major. All little-endian.

namespace detail {

constexpr char kModelMagic[4] = {'A', 'T', 'H', 'F'};
constexpr std::uint32_t kModelVersion = 1;

inline void write_matrix(std::ostream& out, const Matrix& m) {
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) write_f64(out, m(i, j));
}

inline Matrix read_matrix(std::istream& in, const std::string& path) {
  const auto rows = static_cast<Index>(read_u64(in, path));
  const auto cols = static_cast<Index>(read_u64(in, path));
  if (rows < 0 || cols < 0 || rows * cols > (Index{1} << 32))
    throw IoError("implausible matrix dimensions in " + path);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = read_f64(in, path);
  return m;
}

inline void write_hash_function(std::ostream& out, const HashFunction& fn) {
  write_u64(out, static_cast<std::uint64_t>(fn.input_dim));
  write_u8(out, fn.kernel ? 1 : 0);
  if (fn.kernel) {
    write_matrix(out, fn.kernel->anchors);
    write_f64(out, fn.kernel->sigma);
  }
  write_matrix(out, fn.projection);
}

inline HashFunction read_hash_function(std::istream& in, const std::string& path) {
  HashFunction fn;
  fn.input_dim = static_cast<Index>(read_u64(in, path));
  const std::uint8_t has_kernel = read_u8(in, path);
  if (has_kernel) {
    KernelMap kernel;
    kernel.anchors = read_matrix(in, path);
    kernel.sigma = read_f64(in, path);
    fn.kernel = std::move(kernel);
  }
  fn.projection = read_matrix(in, path);
  fn.validate();
  return fn;
}

}  // namespace detail

inline void save_model(const std::string& path, const HashModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(detail::kModelMagic, 4);
  detail::write_u32(out, detail::kModelVersion);
  detail::write_u8(out, static_cast<std::uint8_t>(variant_tag(model.variant)));
  detail::write_u64(out, static_cast<std::uint64_t>(model.code_length));
  detail::write_hash_function(out, model.source_fn);
  detail::write_hash_function(out, model.target_fn);
  if (!out) throw IoError("write failure: " + path);
}

inline HashModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("model file does not exist or is unreadable: " + path);
  char magic[4];
  if (!in.read(magic, 4)) detail::fail_truncated(path);
  if (!std::equal(magic, magic + 4, detail::kModelMagic))
    throw IoError("bad magic bytes in model file: " + path);
  const std::uint32_t version = detail::read_u32(in, path);
  if (version != detail::kModelVersion)
    throw IoError("unsupported model version " + std::to_string(version) + " in " + path);
  HashModel model;
  model.variant = variant_from_tag(static_cast<char>(detail::read_u8(in, path)));
  model.code_length = static_cast<Index>(detail::read_u64(in, path));
  model.source_fn = detail::read_hash_function(in, path);
  model.target_fn = detail::read_hash_function(in, path);
  if (model.source_fn.code_length() != model.code_length ||
      model.target_fn.code_length() != model.code_length)
    throw IoError("inconsistent code lengths in model file: " + path);
  return model;
}

}  // namespace ath
