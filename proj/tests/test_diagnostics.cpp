#include <catch2/catch_amalgamated.hpp>

#include "ath/diagnostics.hpp"

using namespace ath;

TEST_CASE("pseudo labels follow the nearest source column", "[diagnostics]") {
  Matrix source(2, 3);
  source << 0, 1, 3, 0, 0, 0;
  const Matrix labels = one_hot_from_ids({0, 1, 2}, 3);

  Matrix target(2, 2);
  target << 1, 2.9, 0, 0;
  const Matrix pred = pseudo_label(target, source, labels);
  CHECK(pred.col(0) == labels.col(1));  // coincident point
  CHECK(pred.col(1) == labels.col(2));  // distance 0.1 vs 1.9

  // tie at equal distance goes to the lower source index
  Matrix mid(2, 1);
  mid << 0.5, 0;
  CHECK(pseudo_label(mid, source, labels).col(0) == labels.col(0));

  Matrix empty(2, 0);
  REQUIRE_THROWS_AS(pseudo_label(target, empty, Matrix(3, 0)), ValidationError);
  Matrix wrong(3, 2);
  REQUIRE_THROWS_AS(pseudo_label(wrong, source, labels), ValidationError);
}

TEST_CASE("accuracy counts exact one-hot matches", "[diagnostics]") {
  const Matrix truth = one_hot_from_ids({0, 1, 2, 1}, 3);
  CHECK(accuracy(truth, truth) == 1.0);
  CHECK(accuracy(one_hot_from_ids({1, 2, 0, 0}, 3), truth) == 0.0);
  CHECK(accuracy(one_hot_from_ids({0, 1, 2, 0}, 3), truth) == 0.75);
  REQUIRE_THROWS_AS(accuracy(truth, one_hot_from_ids({0, 1}, 3)), ValidationError);
}

TEST_CASE("initial pseudo labels branch on feature homogeneity", "[diagnostics]") {
  // identical homogeneous domains: raw 1-NN matches every sample to itself
  SynthSpec spec;
  spec.c = 2;
  spec.n_s = 10;
  spec.n_t = 10;
  spec.d_latent = 2;
  spec.d_s = 4;
  spec.d_t = 4;
  spec.noise_sigma = 0.2;
  spec.seed = 8;
  GitrTask task = generate_synthetic_gitr(spec);
  task.target = task.source;
  task.target.domain_id = DomainId::target;
  REQUIRE(task.source.dim() == task.target.dim());
  CHECK(accuracy(initial_pseudo_label(task, 2), *task.target.labels) == 1.0);

  // heterogeneous: both domains go through their own top-r PCA first
  SynthSpec hetero = spec;
  hetero.d_t = 6;
  const GitrTask he = generate_synthetic_gitr(hetero);
  const Matrix pred = initial_pseudo_label(he, 3);
  CHECK(pred.rows() == 2);
  CHECK(pred.cols() == he.target.size());

  GitrTask unlabeled = he;
  unlabeled.source.labels.reset();
  REQUIRE_THROWS_AS(initial_pseudo_label(unlabeled, 3), ValidationError);
}

TEST_CASE("transfer trace tracks the optimizer run", "[diagnostics]") {
  SynthSpec spec;
  spec.c = 3;
  spec.n_s = 36;
  spec.n_t = 30;
  spec.d_latent = 3;
  spec.d_s = 8;
  spec.d_t = 5;
  spec.noise_sigma = 0.1;
  spec.seed = 21;
  const GitrTask task = generate_synthetic_gitr(spec);

  HyperParams hp = HyperParams::defaults_for(Variant::M);
  hp.r = 4;
  hp.alpha_s = 0.3;
  hp.alpha_t = 0.3;
  hp.beta_s = 3.0;
  hp.beta_t = 1e-2;
  hp.lambda = 0.3;
  hp.eta_knn_s = 5;
  hp.eta_knn_t = 5;
  hp.eta_bipartite = 5;

  const TransferTrace trace = trace_transfer(task, hp, Variant::M, 0);
  REQUIRE(trace.accuracy_per_iter.size() == trace.objective_per_iter.size());
  REQUIRE(trace.accuracy_per_iter.size() >= 2);
  for (double a : trace.accuracy_per_iter) {
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
  }

  // the objective list is the optimizer's own, entry for entry
  const TrainState state = train(task, hp, Variant::M, 0);
  REQUIRE(trace.objective_per_iter == state.objective_trace);

  // determinism
  const TransferTrace again = trace_transfer(task, hp, Variant::M, 0);
  REQUIRE(again.accuracy_per_iter == trace.accuracy_per_iter);
  REQUIRE(again.objective_per_iter == trace.objective_per_iter);

  // zero iterations: only the initial point
  HyperParams none = hp;
  none.max_iters = 0;
  const TransferTrace initial_only = trace_transfer(task, none, Variant::M, 0);
  REQUIRE(initial_only.accuracy_per_iter.size() == 1);
  REQUIRE(initial_only.objective_per_iter.size() == 1);
  CHECK(initial_only.accuracy_per_iter[0] == trace.accuracy_per_iter[0]);

  // scoring requires both label sets
  GitrTask no_target_labels = task;
  no_target_labels.target.labels.reset();
  REQUIRE_THROWS_WITH(trace_transfer(no_target_labels, hp, Variant::M, 0),
                      Catch::Matchers::ContainsSubstring("target labels"));
  GitrTask no_source_labels = task;
  no_source_labels.source.labels.reset();
  REQUIRE_THROWS_AS(trace_transfer(no_source_labels, hp, Variant::U, 0), ValidationError);
}

TEST_CASE("separable semi-supervised task ends at or above its initial accuracy", "[diagnostics]") {
  SynthSpec spec;
  spec.c = 3;
  spec.n_s = 60;
  spec.n_t = 45;
  spec.d_latent = 4;
  spec.d_s = 10;
  spec.d_t = 7;
  spec.noise_sigma = 0.1;
  spec.seed = 29;
  const GitrTask task = generate_synthetic_gitr(spec);

  HyperParams hp = HyperParams::defaults_for(Variant::M);
  hp.r = 6;
  hp.alpha_s = 0.3;
  hp.alpha_t = 0.3;
  hp.beta_s = 3.0;
  hp.beta_t = 1e-2;
  hp.lambda = 0.3;
  hp.eta_bipartite = 20;
  hp.eta_knn_s = 5;
  hp.eta_knn_t = 5;

  const TransferTrace trace = trace_transfer(task, hp, Variant::M, 0);
  CHECK(trace.accuracy_per_iter.back() >= trace.accuracy_per_iter.front());
}
