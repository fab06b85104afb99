#include "moodval/losses.hpp"

#include <cmath>

#include "moodval/error.hpp"
#include "moodval/metrics.hpp"
#include "moodval/ops.hpp"

namespace moodval {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::valnet: return "valnet";
    case ModelKind::m_valnet: return "m_valnet";
    case ModelKind::mdelta_valnet: return "mdelta_valnet";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "valnet") return ModelKind::valnet;
  if (name == "m_valnet") return ModelKind::m_valnet;
  if (name == "mdelta_valnet") return ModelKind::mdelta_valnet;
  throw ConfigError("unknown model kind '" + std::string(name) +
                    "' (expected valnet, m_valnet or mdelta_valnet)");
}

void LossConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("loss.alpha must be > 0");
  if (k < 1) throw ConfigError("loss.k must be >= 1");
}

DynamicWeights dynamic_weights(std::size_t epoch, std::size_t total_epochs, double alpha,
                               unsigned k) {
  if (total_epochs == 0) throw ValidationError("total epochs must be positive");
  if (epoch > total_epochs) throw ValidationError("epoch exceeds total epochs");
  LossConfig{alpha, k}.validate();
  const double progress =
      std::pow(static_cast<double>(epoch) / static_cast<double>(total_epochs), static_cast<double>(k));
  return {alpha * progress, 1.0 - progress};
}

namespace {

void check_batch(std::span<const double> y, std::span<const double> y_hat) {
  if (y.empty()) throw ValidationError("empty batch");
  if (y.size() != y_hat.size()) throw ValidationError("prediction/target size mismatch");
}

// Batch CCC following the metrics conventions (0 for constant series or a
// single sample).
double batch_ccc(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() < 2) return 0.0;
  return ccc(y, y_hat);
}

}  // namespace

ValenceLossParts valence_loss_parts(std::span<const double> y, std::span<const double> y_hat,
                                    double f, double g) {
  check_batch(y, y_hat);
  ValenceLossParts p;
  for (std::size_t i = 0; i < y.size(); ++i) p.mse += (y_hat[i] - y[i]) * (y_hat[i] - y[i]);
  p.mse /= static_cast<double>(y.size());
  p.one_minus_ccc = 1.0 - batch_ccc(y, y_hat);
  p.weighted = f * p.mse + g * p.one_minus_ccc;
  return p;
}

double valence_loss(std::span<const double> y, std::span<const double> y_hat, double f, double g) {
  return valence_loss_parts(y, y_hat, f, g).weighted;
}

std::vector<double> valence_loss_gradient(std::span<const double> y,
                                          std::span<const double> y_hat, double f, double g) {
  check_batch(y, y_hat);
  const std::size_t n_items = y.size();
  const double n = static_cast<double>(n_items);
  std::vector<double> grad(n_items);
  for (std::size_t i = 0; i < n_items; ++i) grad[i] = f * 2.0 * (y_hat[i] - y[i]) / n;
  if (n_items < 2) return grad;
  double mu_y = 0.0, mu_p = 0.0;
  for (std::size_t i = 0; i < n_items; ++i) {
    mu_y += y[i];
    mu_p += y_hat[i];
  }
  mu_y /= n;
  mu_p /= n;
  double var_y = 0.0, var_p = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < n_items; ++i) {
    var_y += (y[i] - mu_y) * (y[i] - mu_y);
    var_p += (y_hat[i] - mu_p) * (y_hat[i] - mu_p);
    cov += (y[i] - mu_y) * (y_hat[i] - mu_p);
  }
  var_y /= n;
  var_p /= n;
  cov /= n;
  const double dmu = mu_y - mu_p;
  const double denom = var_y + var_p + dmu * dmu;
  if (denom <= 0.0) return grad;
  // The CCC gradient is taken from the closed form even where the value
  // convention pins CCC to 0, so constant predictions can still move.
  for (std::size_t i = 0; i < n_items; ++i) {
    const double d_cov = (y[i] - mu_y) / n;
    const double d_denom = 2.0 * (y_hat[i] - mu_p) / n - 2.0 * dmu / n;
    const double d_ccc = 2.0 * d_cov / denom - 2.0 * cov * d_denom / (denom * denom);
    grad[i] -= g * d_ccc;
  }
  return grad;
}

double branch_cross_entropy(std::span<const double> logits, std::span<const std::size_t> labels,
                            std::size_t classes) {
  if (labels.empty()) throw ValidationError("empty batch");
  if (logits.size() != labels.size() * classes) throw ValidationError("logits/labels size mismatch");
  double total = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] >= classes) {
      throw ValidationError("class label " + std::to_string(labels[b]) + " out of range");
    }
    const double* row = logits.data() + b * classes;
    double mx = row[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    total += -(row[labels[b]] - mx - std::log(z));
  }
  return total / static_cast<double>(labels.size());
}

Tensor valence_loss(const Tensor& prediction, std::span<const double> targets, double f,
                    double g, ValenceLossParts* parts) {
  if (prediction.numel() != targets.size()) {
    throw ValidationError("valence prediction has " + std::to_string(prediction.numel()) +
                          " entries for " + std::to_string(targets.size()) + " targets");
  }
  const auto p = valence_loss_parts(targets, prediction.values(), f, g);
  if (parts) *parts = p;
  auto grad = valence_loss_gradient(targets, prediction.values(), f, g);
  auto ip = prediction.impl();
  return detail::make_result({1}, {p.weighted}, {&prediction},
                             [ip, grad = std::move(grad)](Tensor::Impl& self) {
                               auto& gp = ip->ensure_grad();
                               for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[0] * grad[i];
                             });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ValidationError("cross_entropy: logits " + shape_string(logits.shape()) + " for " +
                          std::to_string(labels.size()) + " labels");
  }
  const std::size_t classes = logits.dim(1);
  const double value = branch_cross_entropy(logits.values(), labels, classes);
  // d/dlogits = (softmax - onehot) / B
  std::vector<double> grad(logits.numel());
  const auto lv = logits.values();
  const double inv_b = 1.0 / static_cast<double>(labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const double* row = lv.data() + b * classes;
    double mx = row[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    for (std::size_t c = 0; c < classes; ++c) {
      const double prob = std::exp(row[c] - mx) / z;
      grad[b * classes + c] = (prob - (c == labels[b] ? 1.0 : 0.0)) * inv_b;
    }
  }
  auto il = logits.impl();
  return detail::make_result({1}, {value}, {&logits},
                             [il, grad = std::move(grad)](Tensor::Impl& self) {
                               auto& gl = il->ensure_grad();
                               for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += self.grad[0] * grad[i];
                             });
}

namespace {

void check_branches(ModelKind kind, bool has_valence, bool has_mood, bool has_delta) {
  if (!has_valence) throw ValidationError("valence branch loss missing");
  if (has_mood != has_mood_branch(kind)) {
    throw ValidationError(std::string(has_mood ? "unexpected" : "missing") +
                          " mood branch loss for " + to_string(kind));
  }
  if (has_delta != has_delta_branch(kind)) {
    throw ValidationError(std::string(has_delta ? "unexpected" : "missing") +
                          " delta branch loss for " + to_string(kind));
  }
}

}  // namespace

double total_loss(ModelKind kind, const BranchLosses& l) {
  check_branches(kind, l.valence.has_value(), l.mood.has_value(), l.delta.has_value());
  return *l.valence + l.mood.value_or(0.0) + l.delta.value_or(0.0);
}

Tensor total_loss(ModelKind kind, const BranchLossTensors& l) {
  check_branches(kind, l.valence.defined(), l.mood.defined(), l.delta.defined());
  Tensor total = l.valence;
  if (l.mood.defined()) total = ops::add(total, l.mood);
  if (l.delta.defined()) total = ops::add(total, l.delta);
  return total;
}

}  // namespace moodval
