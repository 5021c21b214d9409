#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "ath/common.hpp"
#include "ath/data.hpp"
#include "ath/model.hpp"
#include "ath/optimizer.hpp"

namespace ath {

/// Positive-transfer diagnostic: 1-NN pseudo-label accuracy of the target
/// domain, tracked across training iterations alongside the objective.
struct TransferTrace {
  std::vector<double> accuracy_per_iter;
  std::vector<double> objective_per_iter;
};

/// 1-NN pseudo-labeling in a shared mapping space: each target column takes
/// the label of its Euclidean-nearest source column (ties to the lower
/// source index). Returns one-hot predictions, c x n_t.
inline Matrix pseudo_label(const Matrix& target_mapped, const Matrix& source_mapped,
                           const Matrix& source_labels) {
  if (source_mapped.cols() == 0) throw ValidationError("pseudo_label needs a nonempty source");
  if (target_mapped.rows() != source_mapped.rows())
    throw ValidationError("mapped dimensions differ: " + std::to_string(target_mapped.rows()) +
                          " vs " + std::to_string(source_mapped.rows()));
  if (source_labels.cols() != source_mapped.cols())
    throw ValidationError("source label count does not match source sample count");

  Matrix predicted = Matrix::Zero(source_labels.rows(), target_mapped.cols());
  detail::parallel_for(target_mapped.cols(), [&](Index begin, Index end) {
    for (Index j = begin; j < end; ++j) {
      double best = std::numeric_limits<double>::infinity();
      Index best_i = 0;
      for (Index i = 0; i < source_mapped.cols(); ++i) {
        const double d = (target_mapped.col(j) - source_mapped.col(i)).squaredNorm();
        if (d < best) {
          best = d;
          best_i = i;
        }
      }
      predicted.col(j) = source_labels.col(best_i);
    }
  });
  return predicted;
}

/// Iteration-zero pseudo-labels: raw-feature 1-NN for homogeneous tasks,
/// per-domain top-r PCA mappings otherwise.
inline Matrix initial_pseudo_label(const GitrTask& task, Index r) {
  if (!task.source.labels) throw ValidationError("initial pseudo-labeling requires source labels");
  if (task.source.dim() == task.target.dim())
    return pseudo_label(task.target.features, task.source.features, *task.source.labels);
  const Matrix a_s = pca_projection(task.source.features, r);
  const Matrix a_t = pca_projection(task.target.features, r);
  return pseudo_label(a_t.transpose() * task.target.features,
                      a_s.transpose() * task.source.features, *task.source.labels);
}

/// Fraction of columns whose one-hot vectors match exactly.
inline double accuracy(const Matrix& predicted, const Matrix& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
    throw ValidationError("accuracy needs equal shapes");
  if (predicted.cols() == 0) throw ValidationError("accuracy needs at least one column");
  Index matches = 0;
  for (Index j = 0; j < predicted.cols(); ++j)
    if (predicted.col(j) == truth.col(j)) ++matches;
  return static_cast<double>(matches) / static_cast<double>(predicted.cols());
}

/// Runs training with a per-iteration scoring callback. Target labels are
/// used for scoring only; the trace objective list is the optimizer's own.
inline TransferTrace trace_transfer(const GitrTask& task, const HyperParams& hp,
                                    Variant variant, std::uint64_t seed,
                                    const std::optional<KernelSpec>& kernel_spec = {}) {
  if (!task.source.labels)
    throw ValidationError("transfer diagnostics require source labels");
  if (!task.target.labels)
    throw ValidationError("transfer diagnostics require target labels for scoring");

  TransferTrace trace;
  TrainOptions options;
  options.on_iteration = [&](int iter, const TrainState& state) {
    const Matrix predicted =
        iter == 0 ? initial_pseudo_label(task, hp.r)
                  : pseudo_label(state.mapped(DomainId::target),
                                 state.mapped(DomainId::source), *task.source.labels);
    trace.accuracy_per_iter.push_back(accuracy(predicted, *task.target.labels));
  };
  const TrainState state = train(task, hp, variant, seed, options, kernel_spec);
  trace.objective_per_iter = state.objective_trace;
  return trace;
}

}  // namespace ath
