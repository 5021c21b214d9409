#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ath/common.hpp"
#include "ath/io_util.hpp"

namespace ath {

enum class DomainId { source, target };
enum class Subtask { HoSDR, HoCDR, HeSDR, HeCDR };
enum class MatrixFormat { text, binary };

inline bool is_homogeneous(Subtask s) {
  return s == Subtask::HoSDR || s == Subtask::HoCDR;
}

/// Feature matrix of one domain. Samples are columns: features is d x n,
/// labels (when present) are one-hot, c x n.
struct DomainDataset {
  Matrix features;
  std::optional<Matrix> labels;
  DomainId domain_id = DomainId::source;

  Index dim() const { return features.rows(); }
  Index size() const { return features.cols(); }
  std::optional<Index> class_count() const {
    if (!labels) return std::nullopt;
    return labels->rows();
  }

  /// Integer class id per sample (argmax of the one-hot column).
  std::vector<int> label_ids() const {
    if (!labels) throw ValidationError("dataset has no labels");
    std::vector<int> ids(static_cast<std::size_t>(size()));
    for (Index j = 0; j < size(); ++j) {
      Index row = 0;
      labels->col(j).maxCoeff(&row);
      ids[static_cast<std::size_t>(j)] = static_cast<int>(row);
    }
    return ids;
  }

  void validate() const {
    if (size() < 2) throw ValidationError("dataset needs at least 2 samples");
    for (Index j = 0; j < features.cols(); ++j)
      for (Index i = 0; i < features.rows(); ++i)
        if (!std::isfinite(features(i, j)))
          throw ValidationError("non-finite feature at row " + std::to_string(i) +
                                ", column " + std::to_string(j));
    if (labels) {
      if (labels->cols() != features.cols())
        throw ValidationError("label column count " + std::to_string(labels->cols()) +
                              " does not match sample count " + std::to_string(features.cols()));
      for (Index j = 0; j < labels->cols(); ++j) {
        int ones = 0;
        for (Index i = 0; i < labels->rows(); ++i) {
          const double v = (*labels)(i, j);
          if (v == 1.0) {
            ++ones;
          } else if (v != 0.0) {
            throw ValidationError("label column " + std::to_string(j) + " is not one-hot");
          }
        }
        if (ones != 1)
          throw ValidationError("label column " + std::to_string(j) + " is not one-hot");
      }
    }
  }
};

inline Matrix one_hot_from_ids(const std::vector<int>& ids, Index class_count) {
  Matrix labels = Matrix::Zero(class_count, static_cast<Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= class_count)
      throw ValidationError("class id " + std::to_string(ids[j]) + " at column " +
                            std::to_string(j) + " is outside [0, " +
                            std::to_string(class_count) + ")");
    labels(ids[j], static_cast<Index>(j)) = 1.0;
  }
  return labels;
}

/// A generalized transfer-retrieval task: one source domain, one target
/// domain, and the number of target samples held out as queries.
struct GitrTask {
  Subtask subtask = Subtask::HeCDR;
  DomainDataset source;
  DomainDataset target;
  Index query_count = 0;

  void validate(bool check_query_count = true) const {
    source.validate();
    target.validate();
    if (is_homogeneous(subtask) && source.dim() != target.dim())
      throw ValidationError("homogeneous subtask requires d_s = d_t, got " +
                            std::to_string(source.dim()) + " vs " +
                            std::to_string(target.dim()));
    if (check_query_count &&
        (query_count <= 0 || query_count >= target.size()))
      throw ValidationError("query_count must lie in (0, n_t), got " +
                            std::to_string(query_count) + " with n_t = " +
                            std::to_string(target.size()));
  }
};

// --- on-disk formats ------------------------------------------------------
//
// matrix-text:   "d n has_labels [c]" header, then d lines of n reals, then
//                (if labeled) one line of n integer class ids in [0, c).
// matrix-binary: magic "ATHM", version u32=1, u64 d, u64 n, u8 has_labels,
//                optional u64 c, d*n little-endian f64 row-major, then
//                (if labeled) n little-endian u32 class ids.

namespace detail {

constexpr char kDatasetMagic[4] = {'A', 'T', 'H', 'M'};
constexpr std::uint32_t kDatasetVersion = 1;

inline DomainDataset load_dataset_text(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file: " + path);
  std::istringstream header(line);
  Index d = 0, n = 0;
  int has_labels = 0;
  if (!(header >> d >> n >> has_labels))
    throw ValidationError("bad header line in " + path);
  if (d <= 0 || n <= 0 || (has_labels != 0 && has_labels != 1))
    throw ValidationError("bad header values in " + path);
  Index c = 0;
  if (has_labels == 1 && !(header >> c))
    throw ValidationError("labeled header in " + path + " is missing the class count");

  DomainDataset ds;
  ds.features.resize(d, n);
  for (Index i = 0; i < d; ++i) {
    if (!std::getline(in, line))
      throw ValidationError("missing feature row " + std::to_string(i) + " in " + path);
    std::istringstream row(line);
    for (Index j = 0; j < n; ++j) {
      double v = 0.0;
      if (!(row >> v))
        throw ValidationError("parse failure at row " + std::to_string(i) +
                              ", column " + std::to_string(j) + " of " + path);
      if (!std::isfinite(v))
        throw ValidationError("non-finite value at row " + std::to_string(i) +
                              ", column " + std::to_string(j) + " of " + path);
      ds.features(i, j) = v;
    }
  }
  if (has_labels == 1) {
    if (!std::getline(in, line))
      throw ValidationError("missing label line in " + path);
    std::istringstream row(line);
    std::vector<int> ids(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
      if (!(row >> ids[static_cast<std::size_t>(j)]))
        throw ValidationError("parse failure in label line, column " +
                              std::to_string(j) + " of " + path);
    }
    ds.labels = one_hot_from_ids(ids, c);
  }
  return ds;
}

inline DomainDataset load_dataset_binary(std::istream& in, const std::string& path) {
  char magic[4];
  if (!in.read(magic, 4)) fail_truncated(path);
  if (!std::equal(magic, magic + 4, kDatasetMagic))
    throw IoError("bad magic bytes in dataset file: " + path);
  const std::uint32_t version = read_u32(in, path);
  if (version != kDatasetVersion)
    throw IoError("unsupported dataset version " + std::to_string(version) + " in " + path);
  const auto d = static_cast<Index>(read_u64(in, path));
  const auto n = static_cast<Index>(read_u64(in, path));
  const std::uint8_t has_labels = read_u8(in, path);
  if (d <= 0 || n <= 0 || has_labels > 1)
    throw ValidationError("bad header values in " + path);
  Index c = 0;
  if (has_labels) c = static_cast<Index>(read_u64(in, path));

  DomainDataset ds;
  ds.features.resize(d, n);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double v = read_f64(in, path);
      if (!std::isfinite(v))
        throw ValidationError("non-finite value at row " + std::to_string(i) +
                              ", column " + std::to_string(j) + " of " + path);
      ds.features(i, j) = v;
    }
  }
  if (has_labels) {
    std::vector<int> ids(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j)
      ids[static_cast<std::size_t>(j)] = static_cast<int>(read_u32(in, path));
    ds.labels = one_hot_from_ids(ids, c);
  }
  return ds;
}

}  // namespace detail

inline DomainDataset load_dataset(const std::string& path, MatrixFormat format,
                                  DomainId domain_id = DomainId::source) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("dataset file does not exist or is unreadable: " + path);
  DomainDataset ds = format == MatrixFormat::text
                         ? detail::load_dataset_text(in, path)
                         : detail::load_dataset_binary(in, path);
  ds.domain_id = domain_id;
  ds.validate();
  return ds;
}

inline void save_dataset(const std::string& path, const DomainDataset& ds,
                         MatrixFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  const Index d = ds.dim();
  const Index n = ds.size();
  if (format == MatrixFormat::text) {
    out << d << ' ' << n << ' ' << (ds.labels ? 1 : 0);
    if (ds.labels) out << ' ' << ds.labels->rows();
    out << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (j) out << ' ';
        out << ds.features(i, j);
      }
      out << '\n';
    }
    if (ds.labels) {
      const auto ids = ds.label_ids();
      for (Index j = 0; j < n; ++j) {
        if (j) out << ' ';
        out << ids[static_cast<std::size_t>(j)];
      }
      out << '\n';
    }
  } else {
    out.write(detail::kDatasetMagic, 4);
    detail::write_u32(out, detail::kDatasetVersion);
    detail::write_u64(out, static_cast<std::uint64_t>(d));
    detail::write_u64(out, static_cast<std::uint64_t>(n));
    detail::write_u8(out, ds.labels ? 1 : 0);
    if (ds.labels) detail::write_u64(out, static_cast<std::uint64_t>(ds.labels->rows()));
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < n; ++j) detail::write_f64(out, ds.features(i, j));
    if (ds.labels) {
      const auto ids = ds.label_ids();
      for (Index j = 0; j < n; ++j)
        detail::write_u32(out, static_cast<std::uint32_t>(ids[static_cast<std::size_t>(j)]));
    }
  }
  if (!out) throw IoError("write failure: " + path);
}

/// Optional preprocessing (off by default everywhere): zero mean and unit
/// variance per feature row. Constant rows are left centered at zero.
inline void standardize_features(DomainDataset& ds) {
  const double n = static_cast<double>(ds.size());
  for (Index i = 0; i < ds.features.rows(); ++i) {
    ds.features.row(i).array() -= ds.features.row(i).mean();
    const double var = ds.features.row(i).squaredNorm() / n;
    if (var > 0.0) ds.features.row(i) /= std::sqrt(var);
  }
}

/// Sniffs the on-disk format by magic bytes. Used by the CLI's format=auto.
inline MatrixFormat detect_format(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("dataset file does not exist or is unreadable: " + path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  return std::equal(magic, magic + 4, detail::kDatasetMagic) ? MatrixFormat::binary
                                                             : MatrixFormat::text;
}

namespace detail {

inline DomainDataset take_columns(const DomainDataset& ds, const std::vector<Index>& cols) {
  DomainDataset out;
  out.domain_id = ds.domain_id;
  out.features.resize(ds.dim(), static_cast<Index>(cols.size()));
  if (ds.labels) out.labels = Matrix(ds.labels->rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.features.col(static_cast<Index>(j)) = ds.features.col(cols[j]);
    if (ds.labels) out.labels->col(static_cast<Index>(j)) = ds.labels->col(cols[j]);
  }
  return out;
}

}  // namespace detail

/// Splits `query_count` random columns out of the target set. The partition
/// is a function of the seed alone; both parts keep the original column order.
inline std::pair<DomainDataset, DomainDataset> split_query(const DomainDataset& target,
                                                           Index query_count,
                                                           std::uint64_t seed) {
  if (query_count <= 0 || query_count >= target.size())
    throw ValidationError("query_count must lie in (0, n_t), got " +
                          std::to_string(query_count) + " with n_t = " +
                          std::to_string(target.size()));
  Rng rng(seed);
  std::vector<Index> perm(static_cast<std::size_t>(target.size()));
  for (Index i = 0; i < target.size(); ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm);
  std::vector<Index> query_idx(perm.begin(), perm.begin() + query_count);
  std::vector<Index> rest_idx(perm.begin() + query_count, perm.end());
  std::sort(query_idx.begin(), query_idx.end());
  std::sort(rest_idx.begin(), rest_idx.end());
  return {detail::take_columns(target, query_idx), detail::take_columns(target, rest_idx)};
}

/// Desk-scale synthetic GITR task: c latent centroids, isotropic noise, one
/// independent full-rank linear map per domain.
struct SynthSpec {
  Index c = 2;
  Index n_s = 4;
  Index n_t = 4;
  Index d_latent = 2;
  Index d_s = 3;
  Index d_t = 5;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  Index query_count = 0;  // 0 = auto (max(1, n_t / 5))
};

inline GitrTask generate_synthetic_gitr(const SynthSpec& spec) {
  if (spec.c < 2) throw ValidationError("synthetic spec needs c >= 2");
  if (spec.d_latent < 1 || spec.d_latent > std::min(spec.d_s, spec.d_t))
    throw ValidationError("synthetic spec needs 1 <= d_latent <= min(d_s, d_t)");
  if (spec.n_s < 2 * spec.c || spec.n_t < 2 * spec.c)
    throw ValidationError("synthetic spec needs n_s, n_t >= 2c");
  if (spec.noise_sigma < 0.0) throw ValidationError("noise_sigma must be >= 0");

  Rng rng(spec.seed);

  // Centroids separated by at least 6*noise_sigma, drawn in a box that grows
  // until the separation constraint is met.
  const double min_sep = std::max(6.0 * spec.noise_sigma, 1e-3);
  Matrix centroids(spec.d_latent, spec.c);
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 1000)
      throw ValidationError("could not place separated class centroids; spec infeasible");
    const double scale = min_sep * static_cast<double>(spec.c) * (1.0 + attempt);
    for (Index k = 0; k < spec.c; ++k)
      for (Index i = 0; i < spec.d_latent; ++i)
        centroids(i, k) = rng.uniform(-scale, scale);
    double min_dist = std::numeric_limits<double>::infinity();
    for (Index a = 0; a < spec.c; ++a)
      for (Index b = a + 1; b < spec.c; ++b)
        min_dist = std::min(min_dist, (centroids.col(a) - centroids.col(b)).norm());
    if (min_dist >= min_sep) break;
  }

  const auto make_domain = [&](Index n, Index d_out, DomainId id) {
    // Round-robin class assignment keeps counts balanced within one.
    std::vector<int> ids(static_cast<std::size_t>(n));
    Matrix latent(spec.d_latent, n);
    for (Index j = 0; j < n; ++j) {
      const int cls = static_cast<int>(j % spec.c);
      ids[static_cast<std::size_t>(j)] = cls;
      latent.col(j) = centroids.col(cls);
      for (Index i = 0; i < spec.d_latent; ++i)
        latent(i, j) += spec.noise_sigma * rng.normal();
    }
    // Random full-rank map into the observed feature space.
    Matrix map;
    for (;;) {
      map = rng.normal_matrix(d_out, spec.d_latent);
      Eigen::JacobiSVD<Matrix> svd(map);
      if (svd.singularValues()(spec.d_latent - 1) >
          1e-8 * svd.singularValues()(0))
        break;
    }
    DomainDataset ds;
    ds.domain_id = id;
    ds.features = map * latent;
    ds.labels = one_hot_from_ids(ids, spec.c);
    return ds;
  };

  GitrTask task;
  task.source = make_domain(spec.n_s, spec.d_s, DomainId::source);
  task.target = make_domain(spec.n_t, spec.d_t, DomainId::target);
  task.subtask = spec.d_s == spec.d_t ? Subtask::HoCDR : Subtask::HeCDR;
  task.query_count =
      spec.query_count > 0 ? spec.query_count : std::max<Index>(1, spec.n_t / 5);
  task.validate();
  return task;
}

}  // namespace ath
