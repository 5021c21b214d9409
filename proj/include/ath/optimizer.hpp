#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ath/common.hpp"
#include "ath/data.hpp"
#include "ath/graph.hpp"
#include "ath/model.hpp"

namespace ath {

/// All knobs of the joint objective and its solver. Weight defaults follow
/// the per-variant settings from defaults_for().
struct HyperParams {
  double alpha_s = 1e-2;  // fit weight, source
  double alpha_t = 1e-1;  // fit weight, target
  double beta_s = 1e-3;   // structure weight, source
  double beta_t = 1e-1;   // structure weight, target
  double lambda = 1.0;    // cross-domain weight
  Index eta_bipartite = 10;  // target nonzeros per learned bipartite row
  Index eta_knn_s = 10;
  Index eta_knn_t = 10;
  Index max_iters = 10;
  // SPD regularizer for the A-step solve. Kept small enough that the bias it
  // adds to a projection update stays below the 1e-8 descent slack.
  double ridge = 1e-8;
  double rel_tol = 1e-5;
  Index r = 32;  // code length

  double alpha(DomainId k) const { return k == DomainId::source ? alpha_s : alpha_t; }
  double beta(DomainId k) const { return k == DomainId::source ? beta_s : beta_t; }
  Index eta_knn(DomainId k) const { return k == DomainId::source ? eta_knn_s : eta_knn_t; }

  static HyperParams defaults_for(Variant v) {
    HyperParams hp;
    switch (v) {
      case Variant::U:
        hp.alpha_s = 1e-2; hp.alpha_t = 1e-1; hp.beta_s = 1e-3; hp.beta_t = 1e-1; hp.lambda = 1.0;
        break;
      case Variant::M:
        hp.alpha_s = 1e-1; hp.alpha_t = 1e-1; hp.beta_s = 1e3; hp.beta_t = 1e-2; hp.lambda = 1.0;
        break;
      case Variant::K:
        hp.alpha_s = 1e-2; hp.alpha_t = 1.0; hp.beta_s = 1e-3; hp.beta_t = 1e-3; hp.lambda = 1e-2;
        break;
      case Variant::S:
        hp.alpha_s = 1e-3; hp.alpha_t = 1e-1; hp.beta_s = 1e-2; hp.beta_t = 1e-2; hp.lambda = 1e-2;
        break;
    }
    return hp;
  }

  void validate(Index n_s, Index n_t) const {
    if (!(alpha_s > 0.0) || !(alpha_t > 0.0))
      throw ValidationError("alpha weights must be positive");
    if (beta_s < 0.0 || beta_t < 0.0 || !std::isfinite(beta_s) || !std::isfinite(beta_t))
      throw ValidationError("beta weights must be finite and nonnegative");
    if (lambda < 0.0 || !std::isfinite(lambda))
      throw ValidationError("lambda must be finite and nonnegative");
    if (eta_bipartite < 1 || eta_bipartite > n_t - 1)
      throw ValidationError("eta_bipartite must lie in [1, n_t-1], got " +
                            std::to_string(eta_bipartite));
    if (eta_knn_s < 1 || eta_knn_s >= n_s || eta_knn_t < 1 || eta_knn_t >= n_t)
      throw ValidationError("knn neighbor counts must lie in [1, n_k-1]");
    if (max_iters < 0) throw ValidationError("max_iters must be nonnegative");
    if (!(ridge > 0.0)) throw ValidationError("ridge must be positive");
    if (!(rel_tol > 0.0)) throw ValidationError("rel_tol must be positive");
    if (r < 1) throw ValidationError("code length r must be at least 1");
  }
};

enum class BipartiteMode { learned, semantic };

/// Cross-domain affinity W_st (n_s x n_t). Learned rows live on the
/// probability simplex; semantic rows are label-match masks normalized over
/// their nonzeros (rows with no matching class stay all-zero).
struct BipartiteGraph {
  Matrix weights;
  double gamma = 0.0;      // uniform-prior weight of the learned graph
  Vector gamma_per_row;    // optional per-row gamma_i (empty unless used)
  BipartiteMode mode = BipartiteMode::learned;
};

/// Everything the alternating solver owns during one run.
struct TrainState {
  HashModel model;
  BinaryCodes codes_s;
  BinaryCodes codes_t;
  BipartiteGraph bipartite;
  AffinityGraph graph_s;
  AffinityGraph graph_t;
  Laplacian lap_s;
  Laplacian lap_t;
  std::vector<double> objective_trace;

  // Effective feature matrices (kernelized for variant K), fixed per run.
  Matrix xs;
  Matrix xt;

  const Matrix& features(DomainId k) const { return k == DomainId::source ? xs : xt; }
  const BinaryCodes& codes(DomainId k) const { return k == DomainId::source ? codes_s : codes_t; }
  const AffinityGraph& graph(DomainId k) const { return k == DomainId::source ? graph_s : graph_t; }
  const Laplacian& lap(DomainId k) const { return k == DomainId::source ? lap_s : lap_t; }

  /// Current real-valued mapping of domain k, r x n_k.
  Matrix mapped(DomainId k) const {
    return model.fn(k).projection.transpose() * features(k);
  }
};

/// Dense pairwise squared distances between the columns of two mapped
/// matrices, via the Gram expansion; negative round-off is clamped to zero.
inline Matrix pairwise_sq_dists(const Matrix& u, const Matrix& v) {
  const Vector su = u.colwise().squaredNorm();
  const Vector sv = v.colwise().squaredNorm();
  Matrix d = (-2.0 * (u.transpose() * v));
  d.colwise() += su;
  d.rowwise() += sv.transpose();
  return d.cwiseMax(0.0);
}

struct ObjectiveTerms {
  double t1 = 0.0;  // quantization fit
  double t2 = 0.0;  // cross-domain product + uniform prior
  double t3 = 0.0;  // within-domain structure
  double total = 0.0;
};

inline ObjectiveTerms objective_terms(const TrainState& state, const HyperParams& hp) {
  ObjectiveTerms terms;
  const Matrix us = state.mapped(DomainId::source);
  const Matrix ut = state.mapped(DomainId::target);

  terms.t1 = hp.alpha_s * (state.codes_s.codes - us).squaredNorm() +
             hp.alpha_t * (state.codes_t.codes - ut).squaredNorm();

  const Matrix f_st = pairwise_sq_dists(us, ut);
  terms.t2 = hp.lambda * f_st.cwiseProduct(state.bipartite.weights).sum() +
             state.bipartite.gamma * state.bipartite.weights.squaredNorm();

  const auto structure = [](const Matrix& u, const AffinityGraph& g) {
    double acc = 0.0;
    for (Index i = 0; i < g.size(); ++i)
      for (Index j = i + 1; j < g.size(); ++j)
        if (g.weights(i, j) != 0.0)
          acc += g.weights(i, j) * (u.col(i) - u.col(j)).squaredNorm();
    return acc;  // equals half of the full double sum
  };
  terms.t3 = hp.beta_s * structure(us, state.graph_s) +
             hp.beta_t * structure(ut, state.graph_t);

  terms.total = terms.t1 + terms.t2 + terms.t3;
  return terms;
}

inline double objective(const TrainState& state, const HyperParams& hp) {
  return objective_terms(state, hp).total;
}

/// Closed-form update of one projection: solves the regularized normal
/// equations (Phi_k + ridge I) A_k = alpha_k X_k B_k^T + lambda X_k W~ X~^T A~
/// with Phi_k = X_k (alpha_k I + beta_k L_k + lambda D~) X_k^T.
inline Matrix step_A(const TrainState& state, const HyperParams& hp, DomainId k) {
  const DomainId other = k == DomainId::source ? DomainId::target : DomainId::source;
  const Matrix& x = state.features(k);
  const Matrix& xo = state.features(other);
  const Matrix& a_other = state.model.fn(other).projection;
  const Matrix& w = state.bipartite.weights;
  const Index n = x.cols();

  Vector dvec;
  Matrix cross;
  if (k == DomainId::source) {
    dvec = w.rowwise().sum();
    cross = x * (w * (xo.transpose() * a_other));
  } else {
    dvec = w.colwise().sum().transpose();
    cross = x * (w.transpose() * (xo.transpose() * a_other));
  }

  Matrix inner = hp.beta(k) * state.lap(k).matrix;
  inner.diagonal().array() += hp.alpha(k);
  inner.diagonal() += hp.lambda * dvec;
  Matrix phi = x * inner * x.transpose();
  phi = 0.5 * (phi + phi.transpose());
  phi.diagonal().array() += hp.ridge;

  const Matrix rhs = hp.alpha(k) * (x * state.codes(k).codes.transpose()) + hp.lambda * cross;

  Eigen::LLT<Matrix> llt(phi);
  if (llt.info() != Eigen::Success)
    throw SolverError("A-step system is not positive definite (n = " + std::to_string(n) + ")");
  return llt.solve(rhs);
}

/// Exact maximizer of tr(B^T M) over sign matrices with balanced rows:
/// per row, +1 on the floor(n/2) largest entries of M (value ties go to the
/// lower column index), -1 elsewhere.
inline BinaryCodes step_B(const TrainState& state, const HyperParams& hp, DomainId k) {
  const Matrix m = hp.alpha(k) * (state.model.fn(k).projection.transpose() * state.features(k));
  const Index n = m.cols();
  const Index half = n / 2;
  BinaryCodes out;
  out.codes = Matrix::Constant(m.rows(), n, -1.0);
  detail::parallel_for(m.rows(), [&](Index begin, Index end) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = begin; i < end; ++i) {
      std::iota(order.begin(), order.end(), Index{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](Index a, Index b) { return m(i, a) > m(i, b); });
      for (Index t = 0; t < half; ++t) out.codes(i, order[static_cast<std::size_t>(t)]) = 1.0;
    }
  });
  return out;
}

/// One row of the bipartite-graph update: the unique minimizer of
/// ||w + (lambda / 2 gamma_i) f||^2 over the probability simplex, by the
/// sorted active-set scan of the closed-form solution.
inline Vector step_W_row(const Eigen::Ref<const Vector>& f_row, double lambda,
                         double gamma_i) {
  if (!(gamma_i > 0.0)) throw ValidationError("gamma_i must be positive");
  const Index n = f_row.size();
  const double c = lambda / (2.0 * gamma_i);

  std::vector<double> sorted(f_row.data(), f_row.data() + n);
  std::sort(sorted.begin(), sorted.end());

  double phi = 0.0;
  double prefix = 0.0;
  for (Index eta = 1; eta <= n; ++eta) {
    prefix += sorted[static_cast<std::size_t>(eta - 1)];
    const double candidate = (1.0 + c * prefix) / static_cast<double>(eta);
    if (candidate - c * sorted[static_cast<std::size_t>(eta - 1)] > 0.0) phi = candidate;
  }

  // Entries within round-off of the active-set boundary are treated as zero
  // so the support size matches the exact solution.
  const double tol = 1e-12 * (1.0 + std::abs(phi));
  Vector w(n);
  for (Index j = 0; j < n; ++j) {
    const double v = phi - c * f_row(j);
    w(j) = v > tol ? v : 0.0;
  }
  return w;
}

/// Per-row gamma_i that makes the closed-form row solution keep exactly eta
/// nonzeros: gamma_i = (lambda eta / 2) F~_(eta+1) - (lambda / 2) sum_{j<=eta} F~_j,
/// F~ sorted ascending. Zero values (leading ties in F~) are replaced by the
/// smallest positive gamma_j of the batch, or 1e-8 if the batch has none.
inline Vector compute_gamma_per_row(const Matrix& f_st, double lambda, Index eta) {
  const Index n_t = f_st.cols();
  if (eta < 1 || eta > n_t - 1)
    throw ValidationError("eta must lie in [1, n_t-1], got " + std::to_string(eta));
  Vector gammas(f_st.rows());
  std::vector<double> sorted(static_cast<std::size_t>(n_t));
  for (Index i = 0; i < f_st.rows(); ++i) {
    for (Index j = 0; j < n_t; ++j) sorted[static_cast<std::size_t>(j)] = f_st(i, j);
    std::partial_sort(sorted.begin(), sorted.begin() + eta + 1, sorted.end());
    double prefix = 0.0;
    for (Index j = 0; j < eta; ++j) prefix += sorted[static_cast<std::size_t>(j)];
    gammas(i) = 0.5 * lambda *
                (static_cast<double>(eta) * sorted[static_cast<std::size_t>(eta)] - prefix);
  }
  double smallest_positive = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < gammas.size(); ++i)
    if (gammas(i) > 0.0) smallest_positive = std::min(smallest_positive, gammas(i));
  const double substitute = std::isfinite(smallest_positive) ? smallest_positive : 1e-8;
  for (Index i = 0; i < gammas.size(); ++i)
    if (gammas(i) <= 0.0) gammas(i) = substitute;
  return gammas;
}

/// Scalar gamma: the mean of the per-row values.
inline double compute_gamma(const Matrix& f_st, double lambda, Index eta) {
  return compute_gamma_per_row(f_st, lambda, eta).mean();
}

struct TrainOptions {
  /// Freeze gamma at its first-iteration value; used by the monotonicity
  /// test suites. Default recomputes gamma at the start of every W-step.
  bool freeze_gamma_after_first = false;
  /// Called after initialization (iteration 0) and after every full pass.
  std::function<void(int, const TrainState&)> on_iteration;
};

namespace detail {

inline void check_variant_labels(const GitrTask& task, Variant variant) {
  const bool needs_source = variant != Variant::U;
  const bool needs_target = variant == Variant::S || variant == Variant::K;
  if (needs_source && !task.source.labels)
    throw ValidationError("variant " + std::string(1, variant_tag(variant)) +
                          " requires source labels");
  if (needs_target && !task.target.labels)
    throw ValidationError("variant " + std::string(1, variant_tag(variant)) +
                          " requires target labels");
  if (needs_target && task.source.labels->rows() != task.target.labels->rows())
    throw ValidationError("source and target class counts differ");
}

inline Matrix normalize_semantic_rows(const Matrix& mask) {
  Matrix w = mask;
  for (Index i = 0; i < w.rows(); ++i) {
    const double s = w.row(i).sum();
    if (s > 0.0) w.row(i) /= s;  // rows with no matching class stay zero
  }
  return w;
}

}  // namespace detail

/// Builds the full solver state: domain graphs per variant, PCA-initialized
/// model and balanced codes, and the initial bipartite graph (uniform rows
/// for the learned mode, the normalized label mask for semantic mode).
inline TrainState init_train_state(const GitrTask& task, const HyperParams& hp,
                                   Variant variant, std::uint64_t seed,
                                   const std::optional<KernelSpec>& kernel_spec = {}) {
  task.validate(/*check_query_count=*/false);
  hp.validate(task.source.size(), task.target.size());
  detail::check_variant_labels(task, variant);

  TrainState state;
  InitResult init = init_model(task, hp.r, variant, kernel_spec, seed);
  state.model = std::move(init.model);
  state.codes_s = std::move(init.codes_s);
  state.codes_t = std::move(init.codes_t);

  state.xs = state.model.source_fn.kernel
                 ? kernel_features(*state.model.source_fn.kernel, task.source.features)
                 : task.source.features;
  state.xt = state.model.target_fn.kernel
                 ? kernel_features(*state.model.target_fn.kernel, task.target.features)
                 : task.target.features;

  const bool semantic_source = variant == Variant::M || variant == Variant::S || variant == Variant::K;
  const bool semantic_target = variant == Variant::S || variant == Variant::K;
  state.graph_s = semantic_source ? build_semantic_graph(task.source)
                                  : build_knn_graph(task.source, hp.eta_knn_s);
  state.graph_t = semantic_target ? build_semantic_graph(task.target)
                                  : build_knn_graph(task.target, hp.eta_knn_t);
  state.lap_s = laplacian(state.graph_s);
  state.lap_t = laplacian(state.graph_t);

  if (variant == Variant::S || variant == Variant::K) {
    state.bipartite.mode = BipartiteMode::semantic;
    state.bipartite.weights =
        detail::normalize_semantic_rows(build_semantic_bipartite(task.source, task.target).mask);
    state.bipartite.gamma = 0.0;  // the uniform prior belongs to the learned graph
  } else {
    state.bipartite.mode = BipartiteMode::learned;
    state.bipartite.weights = Matrix::Constant(task.source.size(), task.target.size(),
                                               1.0 / static_cast<double>(task.target.size()));
    const Matrix f_st =
        pairwise_sq_dists(state.mapped(DomainId::source), state.mapped(DomainId::target));
    state.bipartite.gamma = compute_gamma(f_st, hp.lambda, hp.eta_bipartite);
  }
  return state;
}

/// One full pass in the fixed update order A_s, A_t, B_s, B_t, W.
inline void run_pass(TrainState& state, const HyperParams& hp, bool recompute_gamma) {
  state.model.source_fn.projection = step_A(state, hp, DomainId::source);
  state.model.target_fn.projection = step_A(state, hp, DomainId::target);
  state.codes_s = step_B(state, hp, DomainId::source);
  state.codes_t = step_B(state, hp, DomainId::target);

  if (state.bipartite.mode == BipartiteMode::learned) {
    const Matrix f_st =
        pairwise_sq_dists(state.mapped(DomainId::source), state.mapped(DomainId::target));
    if (recompute_gamma)
      state.bipartite.gamma = compute_gamma(f_st, hp.lambda, hp.eta_bipartite);
    const double gamma = state.bipartite.gamma;
    detail::parallel_for(f_st.rows(), [&](Index begin, Index end) {
      for (Index i = begin; i < end; ++i)
        state.bipartite.weights.row(i) = step_W_row(f_st.row(i), hp.lambda, gamma).transpose();
    });
  }
}

/// Alternating minimization of the joint objective (all four variants).
/// Records the objective after initialization and after every full pass;
/// stops at max_iters or when the relative decrease falls below rel_tol.
inline TrainState train(const GitrTask& task, const HyperParams& hp, Variant variant,
                        std::uint64_t seed, const TrainOptions& options = {},
                        const std::optional<KernelSpec>& kernel_spec = {}) {
  TrainState state = init_train_state(task, hp, variant, seed, kernel_spec);
  double current = objective(state, hp);
  state.objective_trace.push_back(current);
  if (options.on_iteration) options.on_iteration(0, state);

  for (Index pass = 1; pass <= hp.max_iters; ++pass) {
    const bool recompute_gamma =
        !options.freeze_gamma_after_first || pass == 1;
    run_pass(state, hp, recompute_gamma);
    const double next = objective(state, hp);
    state.objective_trace.push_back(next);
    if (options.on_iteration) options.on_iteration(static_cast<int>(pass), state);
    const bool converged =
        std::abs(current - next) < hp.rel_tol * std::max(1.0, std::abs(current));
    current = next;
    if (converged) break;
  }
  return state;
}

}  // namespace ath
