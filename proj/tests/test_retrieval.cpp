#include <catch2/catch_amalgamated.hpp>

#include "ath/optimizer.hpp"
#include "ath/retrieval.hpp"
#include "oracles.hpp"

using namespace ath;

namespace {

BinaryCodes codes_from(std::initializer_list<std::initializer_list<double>> cols) {
  BinaryCodes b;
  const Index r = static_cast<Index>(cols.begin()->size());
  b.codes.resize(r, static_cast<Index>(cols.size()));
  Index j = 0;
  for (const auto& col : cols) {
    Index i = 0;
    for (double v : col) b.codes(i++, j) = v;
    ++j;
  }
  return b;
}

BinaryCodes random_codes(Rng& rng, Index r, Index n) {
  BinaryCodes b;
  b.codes = Matrix::Zero(r, n).unaryExpr([&](double) { return rng.below(2) ? 1.0 : -1.0; });
  return b;
}

}  // namespace

TEST_CASE("hamming ranking orders by distance with index ties", "[retrieval]") {
  const BinaryCodes query = codes_from({{1, 1, -1, -1}});
  const BinaryCodes db = codes_from({{1, -1, -1, 1},    // distance 2
                                     {1, 1, -1, -1},    // distance 0
                                     {-1, -1, 1, 1},    // distance 4
                                     {1, 1, -1, 1}});   // distance 1
  const RetrievalResult res = hamming_rank(query, db);
  REQUIRE(res.rankings.size() == 1);
  CHECK(res.rankings[0] == std::vector<Index>{1, 3, 0, 2});
  CHECK(res.distances[0] == std::vector<int>{0, 1, 2, 4});

  // equal codes rank first with distance zero; ties break to lower index
  const BinaryCodes tie_db = codes_from({{1, 1, -1, -1}, {1, 1, -1, -1}});
  const RetrievalResult tie = hamming_rank(query, tie_db);
  CHECK(tie.rankings[0] == std::vector<Index>{0, 1});

  const BinaryCodes short_codes = codes_from({{1, -1}});
  REQUIRE_THROWS_AS(hamming_rank(query, short_codes), ValidationError);
}

TEST_CASE("packed popcount equals the naive bit count", "[retrieval]") {
  Rng rng(7);
  for (Index r : {4, 32, 64, 96, 128}) {
    const BinaryCodes a = random_codes(rng, r, 25);
    const BinaryCodes b = random_codes(rng, r, 40);
    const RetrievalResult res = hamming_rank(a, b);
    for (Index q = 0; q < 25; ++q) {
      const auto& ranking = res.rankings[static_cast<std::size_t>(q)];
      for (std::size_t p = 0; p < ranking.size(); ++p) {
        const int naive =
            oracles::naive_hamming(a.codes.col(q), b.codes.col(ranking[p]));
        REQUIRE(res.distances[static_cast<std::size_t>(q)][p] == naive);
      }
    }
    // symmetry, range, zero iff equal
    for (Index q = 0; q < 5; ++q) {
      const int d = oracles::naive_hamming(a.codes.col(q), b.codes.col(q));
      CHECK(d >= 0);
      CHECK(d <= r);
    }
  }
}

TEST_CASE("average precision matches the hand-evaluated cases", "[retrieval]") {
  CHECK(average_precision({1, 0, 1}) == Catch::Approx(0.833333).margin(1e-6));
  CHECK(average_precision({1, 1, 1, 1}) == 1.0);
  CHECK(average_precision({0, 0, 1}) == Catch::Approx(0.333333).margin(1e-6));
  CHECK(average_precision({0, 0, 0}) == 0.0);  // zero-relevant convention
  CHECK(average_precision({}) == 0.0);
}

TEST_CASE("AP is bounded and order-sensitive", "[retrieval]") {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::uint8_t> rel(20);
    for (auto& v : rel) v = rng.below(2) ? 1 : 0;
    CHECK(average_precision(rel) <= 1.0);
  }
  const std::vector<std::uint8_t> perfect{1, 1, 1, 0, 0};
  std::vector<std::uint8_t> reversed(perfect.rbegin(), perfect.rend());
  CHECK(average_precision(reversed) < average_precision(perfect));
}

TEST_CASE("MAP averages per-query AP and ignores query order", "[retrieval]") {
  RetrievalResult res;
  res.rankings = {{0, 1}, {0, 1}};
  res.distances = {{0, 1}, {0, 1}};
  res.relevance = {{1, 1}, {0, 1}};  // AP 1.0 and 0.5
  CHECK(mean_average_precision(res) == Catch::Approx(0.75).epsilon(1e-12));

  RetrievalResult swapped = res;
  std::swap(swapped.relevance[0], swapped.relevance[1]);
  std::swap(swapped.rankings[0], swapped.rankings[1]);
  CHECK(mean_average_precision(swapped) == mean_average_precision(res));

  RetrievalResult empty;
  REQUIRE_THROWS_AS(mean_average_precision(empty), ValidationError);
}

TEST_CASE("random codes on a balanced two-class task score near chance", "[retrieval]") {
  Rng rng(13);
  const Index n_db = 400, n_q = 50, r = 32;
  const BinaryCodes q = random_codes(rng, r, n_q);
  const BinaryCodes db = random_codes(rng, r, n_db);
  RetrievalResult res = hamming_rank(q, db);
  res.relevance.resize(n_q);
  for (Index i = 0; i < n_q; ++i) {
    res.relevance[static_cast<std::size_t>(i)].resize(n_db);
    for (Index p = 0; p < n_db; ++p) {
      const Index db_idx = res.rankings[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
      res.relevance[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)] =
          (db_idx % 2) == (i % 2) ? 1 : 0;  // balanced two-class labels
    }
  }
  CHECK(mean_average_precision(res) == Catch::Approx(0.5).margin(0.05));
}

TEST_CASE("precision-recall curve handles the pinned cases", "[retrieval]") {
  RetrievalResult res;
  res.rankings = {{0, 1, 2}};
  res.distances = {{0, 1, 2}};
  res.relevance = {{1, 1, 1}};
  for (const auto& [recall, precision] : precision_recall_curve(res, 11)) {
    CHECK(precision == 1.0);
    CHECK(recall >= 0.0);
    CHECK(recall <= 1.0);
  }

  // single query [1, 0]: recall 1 at rank 1, precision 1 everywhere
  res.rankings = {{0, 1}};
  res.distances = {{0, 1}};
  res.relevance = {{1, 0}};
  for (const auto& [recall, precision] : precision_recall_curve(res, 5))
    CHECK(precision == 1.0);

  // all-irrelevant query contributes zeros
  res.relevance = {{0, 0}};
  for (const auto& [recall, precision] : precision_recall_curve(res, 5))
    CHECK(precision == 0.0);

  REQUIRE_THROWS_AS(precision_recall_curve(res, 1), ValidationError);
}

TEST_CASE("gitr retrieval wires the asymmetric pair end to end", "[retrieval]") {
  SynthSpec spec;
  spec.c = 3;
  spec.n_s = 36;
  spec.n_t = 30;
  spec.d_latent = 3;
  spec.d_s = 8;
  spec.d_t = 5;
  spec.noise_sigma = 0.1;
  spec.seed = 3;
  spec.query_count = 6;
  const GitrTask task = generate_synthetic_gitr(spec);
  HyperParams hp = HyperParams::defaults_for(Variant::S);
  hp.r = 4;
  hp.eta_knn_s = 5;
  hp.eta_knn_t = 5;
  hp.eta_bipartite = 5;
  const TrainState state = train(task, hp, Variant::S, 0);

  // heterogeneous dims flow through without any alignment step
  REQUIRE(task.source.dim() != task.target.dim());
  CHECK(state.model.source_fn.input_dim == 8);
  CHECK(state.model.target_fn.input_dim == 5);

  const RetrievalResult cross = run_gitr_retrieval(state.model, task, Direction::cross_domain, 1);
  REQUIRE(cross.query_count() == 6);
  REQUIRE(cross.rankings[0].size() == 36);  // whole source is the database
  REQUIRE(cross.has_relevance());
  for (const auto& dist : cross.distances)
    for (std::size_t p = 1; p < dist.size(); ++p) CHECK(dist[p] >= dist[p - 1]);

  const RetrievalResult within = run_gitr_retrieval(state.model, task, Direction::within_target, 1);
  REQUIRE(within.rankings[0].size() == 24);  // remaining target is the database

  // rankings are permutations of the database indices
  std::vector<int> seen(36, 0);
  for (Index idx : cross.rankings[0]) seen[static_cast<std::size_t>(idx)]++;
  for (int s : seen) CHECK(s == 1);

  // empty query set is a degenerate but valid call
  GitrTask no_query = task;
  no_query.query_count = 0;
  const RetrievalResult empty = run_gitr_retrieval(state.model, no_query, Direction::cross_domain, 1);
  CHECK(empty.query_count() == 0);

  // model/dataset dimension mismatches are reported
  GitrTask wrong = task;
  wrong.source.features = Matrix::Zero(9, 36);
  REQUIRE_THROWS_WITH(run_gitr_retrieval(state.model, wrong, Direction::cross_domain, 1),
                      Catch::Matchers::ContainsSubstring("dimension"));
}
