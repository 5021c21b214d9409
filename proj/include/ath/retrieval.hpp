#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "ath/common.hpp"
#include "ath/data.hpp"
#include "ath/model.hpp"

namespace ath {

namespace detail {

/// Column-packed binary codes: bit b of a code word is set iff the code
/// entry is -1 (fixed convention so distances are reproducible bit-exactly).
struct PackedCodes {
  Index n = 0;
  Index r = 0;
  Index words_per_code = 0;
  std::vector<std::uint64_t> words;

  static PackedCodes pack(const BinaryCodes& codes) {
    PackedCodes p;
    p.n = codes.size();
    p.r = codes.code_length();
    p.words_per_code = (p.r + 63) / 64;
    p.words.assign(static_cast<std::size_t>(p.n * p.words_per_code), 0);
    for (Index j = 0; j < p.n; ++j)
      for (Index b = 0; b < p.r; ++b)
        if (codes.codes(b, j) < 0.0)
          p.words[static_cast<std::size_t>(j * p.words_per_code + b / 64)] |=
              std::uint64_t{1} << (b % 64);
    return p;
  }

  int distance(Index i, const PackedCodes& other, Index j) const {
    int d = 0;
    for (Index w = 0; w < words_per_code; ++w)
      d += std::popcount(words[static_cast<std::size_t>(i * words_per_code + w)] ^
                         other.words[static_cast<std::size_t>(j * words_per_code + w)]);
    return d;
  }
};

}  // namespace detail

/// Per-query Hamming rankings. Rankings hold database indices sorted by
/// ascending distance (ties to the lower index); distances follow the same
/// order. relevance, when filled, is also in rank order.
struct RetrievalResult {
  std::vector<std::vector<Index>> rankings;
  std::vector<std::vector<int>> distances;
  std::vector<std::vector<std::uint8_t>> relevance;
  Index code_length = 0;

  Index query_count() const { return static_cast<Index>(rankings.size()); }
  bool has_relevance() const { return !relevance.empty(); }
};

inline RetrievalResult hamming_rank(const BinaryCodes& query_codes,
                                    const BinaryCodes& db_codes) {
  if (query_codes.size() > 0 && db_codes.size() > 0 &&
      query_codes.code_length() != db_codes.code_length())
    throw ValidationError("code length mismatch: " +
                          std::to_string(query_codes.code_length()) + " vs " +
                          std::to_string(db_codes.code_length()));
  RetrievalResult result;
  result.code_length = query_codes.code_length();
  const Index nq = query_codes.size();
  const Index nd = db_codes.size();
  result.rankings.resize(static_cast<std::size_t>(nq));
  result.distances.resize(static_cast<std::size_t>(nq));
  if (nq == 0) return result;

  const auto q = detail::PackedCodes::pack(query_codes);
  const auto db = detail::PackedCodes::pack(db_codes);
  detail::parallel_for(nq, [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      std::vector<int> dist(static_cast<std::size_t>(nd));
      for (Index j = 0; j < nd; ++j) dist[static_cast<std::size_t>(j)] = q.distance(i, db, j);
      std::vector<Index> order(static_cast<std::size_t>(nd));
      std::iota(order.begin(), order.end(), Index{0});
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
      });
      auto& ranked_dist = result.distances[static_cast<std::size_t>(i)];
      ranked_dist.resize(static_cast<std::size_t>(nd));
      for (Index k = 0; k < nd; ++k)
        ranked_dist[static_cast<std::size_t>(k)] =
            dist[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
      result.rankings[static_cast<std::size_t>(i)] = std::move(order);
    }
  });
  return result;
}

/// Average precision of a full ranking, normalized by the total number of
/// relevant items. Zero relevant items score 0 by convention.
inline double average_precision(const std::vector<std::uint8_t>& relevance_in_rank_order) {
  Index total_relevant = 0;
  for (auto r : relevance_in_rank_order) total_relevant += r ? 1 : 0;
  if (total_relevant == 0) return 0.0;
  double sum = 0.0;
  Index hits = 0;
  for (std::size_t p = 0; p < relevance_in_rank_order.size(); ++p) {
    if (relevance_in_rank_order[p]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(p + 1);
    }
  }
  return sum / static_cast<double>(total_relevant);
}

inline double mean_average_precision(const RetrievalResult& result) {
  if (!result.has_relevance())
    throw ValidationError("retrieval result has no relevance labels");
  if (result.relevance.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& rel : result.relevance) sum += average_precision(rel);
  return sum / static_cast<double>(result.relevance.size());
}

/// Per-query average precision values, in query order.
inline std::vector<double> per_query_average_precision(const RetrievalResult& result) {
  if (!result.has_relevance())
    throw ValidationError("retrieval result has no relevance labels");
  std::vector<double> out;
  out.reserve(result.relevance.size());
  for (const auto& rel : result.relevance) out.push_back(average_precision(rel));
  return out;
}

/// Interpolated precision-recall curve on a uniform recall grid, averaged
/// over queries. Queries without relevant items contribute zero precision.
inline std::vector<std::pair<double, double>> precision_recall_curve(
    const RetrievalResult& result, int num_points) {
  if (num_points < 2) throw ValidationError("precision-recall curve needs >= 2 points");
  if (!result.has_relevance())
    throw ValidationError("retrieval result has no relevance labels");

  std::vector<double> avg(static_cast<std::size_t>(num_points), 0.0);
  for (const auto& rel : result.relevance) {
    Index total_relevant = 0;
    for (auto r : rel) total_relevant += r ? 1 : 0;
    if (total_relevant == 0) continue;  // contributes zeros at every level
    // Interpolated precision at recall level = max precision at recall >= level.
    std::vector<double> precision_at(rel.size());
    std::vector<double> recall_at(rel.size());
    Index hits = 0;
    for (std::size_t p = 0; p < rel.size(); ++p) {
      if (rel[p]) ++hits;
      precision_at[p] = static_cast<double>(hits) / static_cast<double>(p + 1);
      recall_at[p] = static_cast<double>(hits) / static_cast<double>(total_relevant);
    }
    for (int g = 0; g < num_points; ++g) {
      const double level = static_cast<double>(g) / static_cast<double>(num_points - 1);
      double best = 0.0;
      for (std::size_t p = 0; p < rel.size(); ++p)
        if (recall_at[p] >= level) best = std::max(best, precision_at[p]);
      avg[static_cast<std::size_t>(g)] += best;
    }
  }
  std::vector<std::pair<double, double>> curve;
  curve.reserve(static_cast<std::size_t>(num_points));
  const double denom = std::max<double>(1.0, static_cast<double>(result.relevance.size()));
  for (int g = 0; g < num_points; ++g)
    curve.emplace_back(static_cast<double>(g) / static_cast<double>(num_points - 1),
                       avg[static_cast<std::size_t>(g)] / denom);
  return curve;
}

enum class Direction { cross_domain, within_target };

/// End-to-end retrieval: queries split from the target domain and encoded by
/// the target function; the database is the source set (cross_domain) or the
/// remaining target set (within_target). The split seed must match the one
/// used when the model was trained.
inline RetrievalResult run_gitr_retrieval(const HashModel& model, const GitrTask& task,
                                          Direction direction, std::uint64_t split_seed) {
  if (model.target_fn.input_dim != task.target.dim())
    throw ValidationError("model target dimension " +
                          std::to_string(model.target_fn.input_dim) +
                          " does not match dataset dimension " +
                          std::to_string(task.target.dim()));
  if (direction == Direction::cross_domain && model.source_fn.input_dim != task.source.dim())
    throw ValidationError("model source dimension " +
                          std::to_string(model.source_fn.input_dim) +
                          " does not match dataset dimension " +
                          std::to_string(task.source.dim()));

  DomainDataset query;
  DomainDataset rest;
  if (task.query_count == 0) {
    query.features.resize(task.target.dim(), 0);
    rest = task.target;
  } else {
    std::tie(query, rest) = split_query(task.target, task.query_count, split_seed);
  }

  const DomainDataset& db = direction == Direction::cross_domain ? task.source : rest;
  const HashFunction& db_fn =
      direction == Direction::cross_domain ? model.source_fn : model.target_fn;

  BinaryCodes query_codes;
  query_codes.codes.resize(model.code_length, 0);
  if (query.size() > 0) query_codes = encode(model.target_fn, query);
  const BinaryCodes db_codes = encode(db_fn, db);

  RetrievalResult result = hamming_rank(query_codes, db_codes);
  if (query.labels && db.labels) {
    const auto q_ids = query.label_ids();
    const auto db_ids = db.label_ids();
    result.relevance.resize(static_cast<std::size_t>(query.size()));
    for (Index i = 0; i < query.size(); ++i) {
      auto& rel = result.relevance[static_cast<std::size_t>(i)];
      const auto& ranking = result.rankings[static_cast<std::size_t>(i)];
      rel.resize(ranking.size());
      for (std::size_t p = 0; p < ranking.size(); ++p)
        rel[p] = q_ids[static_cast<std::size_t>(i)] ==
                         db_ids[static_cast<std::size_t>(ranking[p])]
                     ? 1
                     : 0;
    }
  }
  return result;
}

}  // namespace ath
