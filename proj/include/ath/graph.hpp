#pragma once

#include <algorithm>
#include <numeric>
#include <ostream>
#include <vector>

#include "ath/common.hpp"
#include "ath/data.hpp"

namespace ath {

enum class GraphKind { knn, semantic };

/// Within-domain affinity graph with 0/1 weights. Symmetric, zero diagonal.
/// Dense storage; desk-scale sample counts keep this well under control.
struct AffinityGraph {
  Matrix weights;
  Vector degree;
  GraphKind kind = GraphKind::knn;
  Index eta = 0;  // neighbor count for kind == knn

  Index size() const { return weights.rows(); }
};

struct Laplacian {
  Matrix matrix;  // L = D - W
};

/// Cross-domain 0/1 mask: mask(i, j) = 1 iff the labels of source sample i
/// and target sample j match.
struct SemanticBipartiteEdges {
  Matrix mask;  // n_s x n_t
};

/// kNN graph under squared Euclidean distance, union ("or") symmetrization.
/// Distance ties break toward the lower sample index; self is never a
/// neighbor. Each point contributes exactly eta directed edges, so row
/// degrees land in [eta, n-1].
inline AffinityGraph build_knn_graph(const DomainDataset& data, Index eta) {
  const Index n = data.size();
  if (eta < 1 || eta >= n)
    throw ValidationError("knn eta must lie in [1, n-1], got " + std::to_string(eta) +
                          " with n = " + std::to_string(n));
  if (!detail::all_finite(data.features))
    throw ValidationError("features contain non-finite values");

  const Matrix& x = data.features;
  Matrix directed = Matrix::Zero(n, n);
  detail::parallel_for(n, [&](Index begin, Index end) {
    std::vector<std::pair<double, Index>> cand;
    for (Index i = begin; i < end; ++i) {
      cand.clear();
      cand.reserve(static_cast<std::size_t>(n - 1));
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        // Direct column difference keeps exact zeros for duplicate points,
        // so index tie-breaking on equal distances is well defined.
        cand.emplace_back((x.col(i) - x.col(j)).squaredNorm(), j);
      }
      std::partial_sort(cand.begin(), cand.begin() + eta, cand.end());
      for (Index k = 0; k < eta; ++k)
        directed(i, cand[static_cast<std::size_t>(k)].second) = 1.0;
    }
  });

  AffinityGraph g;
  g.kind = GraphKind::knn;
  g.eta = eta;
  g.weights = directed.cwiseMax(directed.transpose());
  g.degree = g.weights.rowwise().sum();
  return g;
}

/// Semantic graph: unit edge between every same-label pair, no self loops.
inline AffinityGraph build_semantic_graph(const DomainDataset& data) {
  if (!data.labels) throw ValidationError("semantic graph requires labels");
  const Index n = data.size();
  const auto ids = data.label_ids();
  AffinityGraph g;
  g.kind = GraphKind::semantic;
  g.weights = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (ids[static_cast<std::size_t>(i)] == ids[static_cast<std::size_t>(j)]) {
        g.weights(i, j) = 1.0;
        g.weights(j, i) = 1.0;
      }
  g.degree = g.weights.rowwise().sum();
  return g;
}

inline SemanticBipartiteEdges build_semantic_bipartite(const DomainDataset& source,
                                                       const DomainDataset& target) {
  if (!source.labels || !target.labels)
    throw ValidationError("semantic bipartite graph requires labels in both domains");
  if (source.labels->rows() != target.labels->rows())
    throw ValidationError("class counts differ: " + std::to_string(source.labels->rows()) +
                          " vs " + std::to_string(target.labels->rows()));
  const auto src_ids = source.label_ids();
  const auto tgt_ids = target.label_ids();
  SemanticBipartiteEdges edges;
  edges.mask = Matrix::Zero(source.size(), target.size());
  for (Index i = 0; i < source.size(); ++i)
    for (Index j = 0; j < target.size(); ++j)
      if (src_ids[static_cast<std::size_t>(i)] == tgt_ids[static_cast<std::size_t>(j)])
        edges.mask(i, j) = 1.0;
  return edges;
}

inline Laplacian laplacian(const AffinityGraph& graph) {
  Laplacian l;
  l.matrix = Matrix(graph.degree.asDiagonal());
  l.matrix -= graph.weights;
  return l;
}

/// Debug dump as "i j w" lines, nonzeros only.
inline void dump_graph_triplets(std::ostream& out, const Matrix& weights) {
  for (Index i = 0; i < weights.rows(); ++i)
    for (Index j = 0; j < weights.cols(); ++j)
      if (weights(i, j) != 0.0)
        out << i << ' ' << j << ' ' << weights(i, j) << '\n';
}

}  // namespace ath
