#include "moodval/attention.hpp"

#include <algorithm>

#include "moodval/error.hpp"

namespace moodval {

namespace {

// sigmoid(kSaturation) rounds to exactly 1.0 in double precision.
constexpr double kSaturation = 100.0;

Tensor as_rank5(const Tensor& x) {
  if (x.rank() == 5) return x;
  if (x.rank() == 4) return ops::reshape(x, {x.dim(0), x.dim(1), 1, x.dim(2), x.dim(3)});
  throw ValidationError("attention expects a (B, C, H, W) or (B, C, T, H, W) feature map, got " +
                        shape_string(x.shape()));
}

Tensor restore_rank(const Tensor& y, const Tensor& like) {
  return like.rank() == 5 ? y : ops::reshape(y, like.shape());
}

void check_finite_nonempty(const Tensor& x) {
  for (auto d : x.shape()) {
    if (d == 0) throw ValidationError("feature map has an empty dimension");
  }
}

}  // namespace

std::string to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::spatial: return "spatial";
    case AttentionKind::channel: return "channel";
    case AttentionKind::temporal: return "temporal";
  }
  return "?";
}

std::string to_string(Placement placement) {
  return placement == Placement::within_block ? "within_block" : "outside_backbone";
}

AttentionKind attention_kind_from_string(const std::string& name) {
  if (name == "spatial") return AttentionKind::spatial;
  if (name == "channel") return AttentionKind::channel;
  if (name == "temporal") return AttentionKind::temporal;
  throw ConfigError("unknown attention kind '" + name + "'");
}

Placement placement_from_string(const std::string& name) {
  if (name == "within_block") return Placement::within_block;
  if (name == "outside_backbone") return Placement::outside_backbone;
  throw ConfigError("unknown attention placement '" + name + "'");
}

void AttentionConfig::validate() const {
  if (kinds.empty()) throw ConfigError("attention.kinds must not be empty");
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    for (std::size_t j = i + 1; j < kinds.size(); ++j) {
      if (kinds[i] == kinds[j]) throw ConfigError("attention.kinds contains duplicates");
    }
  }
  if (spatial_kernel == 0 || spatial_kernel % 2 == 0) {
    throw ConfigError("attention.spatial_kernel must be odd");
  }
  if (reduction < 1) throw ConfigError("attention.reduction must be >= 1");
}

bool AttentionConfig::has(AttentionKind k) const {
  return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
}

std::string AttentionConfig::label() const {
  std::string s;
  for (auto k : kinds) {
    if (!s.empty()) s += "-";
    s += to_string(k);
  }
  return s;
}

SpatialAttention::SpatialAttention(std::size_t kernel, Rng& rng) : kernel_(kernel) {
  if (kernel == 0 || kernel % 2 == 0) throw ConfigError("spatial attention kernel must be odd");
  conv_ = register_module("conv", std::make_shared<nn::Conv3d>(
                                      2, 1, std::array<std::size_t, 3>{1, kernel, kernel},
                                      ops::Conv3dOptions{{1, 1, 1}, {0, kernel / 2, kernel / 2}},
                                      rng));
}

Tensor SpatialAttention::forward(const Tensor& input) {
  check_finite_nonempty(input);
  const Tensor x = as_rank5(input);
  static constexpr std::size_t kChannelAxis[] = {1};
  const Tensor avg = ops::mean_over(x, kChannelAxis);
  const Tensor mx = ops::max_over(x, kChannelAxis);
  const Tensor both[] = {avg, mx};
  last_gate_ = ops::sigmoid(conv_->forward(ops::concat(both, 1)));
  return restore_rank(ops::mul_broadcast(x, last_gate_), input);
}

void SpatialAttention::saturate() {
  for (auto& w : conv_->weight().values()) w = 0.0;
  conv_->bias().values()[0] = kSaturation;
}

ChannelAttention::ChannelAttention(std::size_t channels, std::size_t reduction, Rng& rng)
    : channels_(channels) {
  if (reduction < 1) throw ConfigError("channel attention reduction must be >= 1");
  const std::size_t hidden = std::max<std::size_t>(1, channels / reduction);
  fc1_ = register_module("fc1", std::make_shared<nn::Linear>(channels, hidden, rng));
  fc2_ = register_module("fc2", std::make_shared<nn::Linear>(hidden, channels, rng));
}

Tensor ChannelAttention::forward(const Tensor& x) {
  check_finite_nonempty(x);
  if (x.rank() < 3 || x.dim(1) != channels_) {
    throw ValidationError("channel attention built for " + std::to_string(channels_) +
                          " channels got " + shape_string(x.shape()));
  }
  std::vector<std::size_t> axes;
  for (std::size_t a = 2; a < x.rank(); ++a) axes.push_back(a);
  const std::size_t batch = x.dim(0);
  const Tensor avg = ops::reshape(ops::mean_over(x, axes), {batch, channels_});
  const Tensor mx = ops::reshape(ops::max_over(x, axes), {batch, channels_});
  auto mlp = [&](const Tensor& v) { return fc2_->forward(ops::relu(fc1_->forward(v))); };
  Shape gate_shape(x.rank(), 1);
  gate_shape[0] = batch;
  gate_shape[1] = channels_;
  last_gate_ = ops::reshape(ops::sigmoid(ops::add(mlp(avg), mlp(mx))), gate_shape);
  return ops::mul_broadcast(x, last_gate_);
}

void ChannelAttention::saturate() {
  for (auto& w : fc2_->weight().values()) w = 0.0;
  // The bias enters twice (avg and max paths).
  for (auto& b : fc2_->bias().values()) b = kSaturation / 2.0;
}

TemporalAttention::TemporalAttention(std::size_t time_steps, std::size_t reduction, Rng& rng)
    : time_steps_(time_steps) {
  if (time_steps == 0) throw ConfigError("temporal attention requires a time axis");
  if (reduction < 1) throw ConfigError("temporal attention reduction must be >= 1");
  const std::size_t hidden = std::max<std::size_t>(1, time_steps / reduction);
  fc1_ = register_module("fc1", std::make_shared<nn::Linear>(time_steps, hidden, rng));
  fc2_ = register_module("fc2", std::make_shared<nn::Linear>(hidden, time_steps, rng));
}

Tensor TemporalAttention::forward(const Tensor& x) {
  check_finite_nonempty(x);
  if (x.rank() != 5) {
    throw ConfigError("temporal attention requires a (B, C, T, H, W) input, got " +
                      shape_string(x.shape()));
  }
  if (x.dim(2) != time_steps_) {
    throw ValidationError("temporal attention built for " + std::to_string(time_steps_) +
                          " timesteps got " + shape_string(x.shape()));
  }
  static constexpr std::size_t kAxes[] = {1, 3, 4};
  const std::size_t batch = x.dim(0);
  const Tensor avg = ops::reshape(ops::mean_over(x, kAxes), {batch, time_steps_});
  const Tensor mx = ops::reshape(ops::max_over(x, kAxes), {batch, time_steps_});
  auto mlp = [&](const Tensor& v) { return fc2_->forward(ops::relu(fc1_->forward(v))); };
  last_gate_ = ops::reshape(ops::sigmoid(ops::add(mlp(avg), mlp(mx))),
                            {batch, 1, time_steps_, 1, 1});
  return ops::mul_broadcast(x, last_gate_);
}

void TemporalAttention::saturate() {
  for (auto& w : fc2_->weight().values()) w = 0.0;
  for (auto& b : fc2_->bias().values()) b = kSaturation / 2.0;
}

void AttentionSequence::append(std::shared_ptr<AttentionModule> module) {
  register_module(std::to_string(modules_.size()) + "_" + to_string(module->kind()), module);
  modules_.push_back(std::move(module));
}

Tensor AttentionSequence::forward(const Tensor& x) {
  applications_.fetch_add(1);
  Tensor y = x;
  for (auto& m : modules_) y = m->forward(y);
  return y;
}

void AttentionSequence::saturate() {
  for (auto& m : modules_) m->saturate();
}

std::shared_ptr<AttentionSequence> make_attention(const std::vector<AttentionKind>& kinds,
                                                  std::size_t spatial_kernel,
                                                  std::size_t reduction, std::size_t channels,
                                                  std::size_t time_steps, Rng& rng) {
  auto seq = std::make_shared<AttentionSequence>();
  for (auto k : kinds) {
    switch (k) {
      case AttentionKind::spatial:
        seq->append(std::make_shared<SpatialAttention>(spatial_kernel, rng));
        break;
      case AttentionKind::channel:
        seq->append(std::make_shared<ChannelAttention>(channels, reduction, rng));
        break;
      case AttentionKind::temporal:
        if (time_steps == 0) {
          throw ConfigError("temporal attention requested for features without a time axis");
        }
        seq->append(std::make_shared<TemporalAttention>(time_steps, reduction, rng));
        break;
    }
  }
  return seq;
}

Backbone::Geometry Backbone::block_geometry(std::size_t) const {
  throw ConfigError("backbone exposes no residual blocks");
}

void Backbone::attach_block_attention(std::size_t, std::shared_ptr<AttentionSequence>) {
  throw ConfigError("backbone exposes no residual blocks");
}

InputAttentionBackbone::InputAttentionBackbone(std::shared_ptr<Backbone> inner,
                                               std::shared_ptr<AttentionSequence> attn)
    : inner_(register_module("backbone", std::move(inner))),
      attn_(register_module("input_attention", std::move(attn))) {}

Tensor InputAttentionBackbone::forward(const Tensor& x) { return inner_->forward(attn_->forward(x)); }

std::shared_ptr<Backbone> place(std::shared_ptr<Backbone> backbone, const AttentionConfig& config,
                                Rng& rng) {
  config.validate();
  if (config.placement == Placement::outside_backbone) {
    const auto g = backbone->input_geometry();
    auto attn = make_attention(config.kinds, config.spatial_kernel, config.reduction, g.channels,
                               g.time_steps, rng);
    return std::make_shared<InputAttentionBackbone>(std::move(backbone), std::move(attn));
  }
  if (backbone->block_count() == 0) {
    throw ConfigError("within_block attention needs a backbone with residual block hooks");
  }
  for (std::size_t b = 0; b < backbone->block_count(); ++b) {
    const auto g = backbone->block_geometry(b);
    backbone->attach_block_attention(b, make_attention(config.kinds, config.spatial_kernel,
                                                       config.reduction, g.channels,
                                                       g.time_steps, rng));
  }
  return backbone;
}

}  // namespace moodval
