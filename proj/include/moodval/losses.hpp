#pragma once

// Training objectives: the epoch-scheduled MSE/CCC valence loss, softmax
// cross-entropy for the mood and emotion-change branches, and their sum.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "moodval/model_kind.hpp"
#include "moodval/tensor.hpp"

namespace moodval {

struct LossConfig {
  double alpha = 1.0;  ///< scales the MSE weight
  unsigned k = 2;      ///< schedule non-linearity
  void validate() const;
};

struct DynamicWeights {
  double f = 0.0;  ///< MSE weight, alpha * (i/m)^k
  double g = 1.0;  ///< (1 - CCC) weight, 1 - (i/m)^k
};

DynamicWeights dynamic_weights(std::size_t epoch, std::size_t total_epochs, double alpha,
                               unsigned k);

struct ValenceLossParts {
  double mse = 0.0;
  double one_minus_ccc = 0.0;
  double weighted = 0.0;
};

/// f * MSE + g * (1 - CCC) over one batch.
ValenceLossParts valence_loss_parts(std::span<const double> y, std::span<const double> y_hat,
                                    double f, double g);
double valence_loss(std::span<const double> y, std::span<const double> y_hat, double f, double g);

/// Analytic d(valence_loss)/d(y_hat).
std::vector<double> valence_loss_gradient(std::span<const double> y,
                                          std::span<const double> y_hat, double f, double g);

/// Mean softmax cross-entropy; logits row-major (B, classes), labels < classes.
double branch_cross_entropy(std::span<const double> logits, std::span<const std::size_t> labels,
                            std::size_t classes = 3);

// Autograd forms. `prediction` has shape (B) or (B, 1); logits (B, 3).
Tensor valence_loss(const Tensor& prediction, std::span<const double> targets, double f,
                    double g, ValenceLossParts* parts = nullptr);
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

struct LossBreakdown {
  ValenceLossParts valence;
  std::optional<double> mood;
  std::optional<double> delta;
  double total = 0.0;
};

struct BranchLosses {
  std::optional<double> valence;
  std::optional<double> mood;
  std::optional<double> delta;
};

/// Unweighted sum of the branches active for `kind`; missing or surplus
/// branch inputs are rejected.
double total_loss(ModelKind kind, const BranchLosses& losses);

struct BranchLossTensors {
  Tensor valence;
  Tensor mood;
  Tensor delta;
};
Tensor total_loss(ModelKind kind, const BranchLossTensors& losses);

}  // namespace moodval
