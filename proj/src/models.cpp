#include "moodval/models.hpp"

#include <algorithm>

#include "moodval/error.hpp"

namespace moodval {

namespace {

constexpr std::size_t kSpatialAxes[] = {2, 3, 4};

Tensor global_average(const Tensor& x) {
  return ops::reshape(ops::mean_over(x, kSpatialAxes), {x.dim(0), x.dim(1)});
}

std::shared_ptr<nn::Conv3d> conv(std::size_t in, std::size_t out, std::array<std::size_t, 3> k,
                                 std::array<std::size_t, 3> stride,
                                 std::array<std::size_t, 3> pad, Rng& rng) {
  return std::make_shared<nn::Conv3d>(in, out, k, ops::Conv3dOptions{stride, pad}, rng);
}

void check_widths(const std::vector<std::size_t>& widths, const char* what) {
  if (widths.empty()) throw ConfigError(std::string(what) + " must not be empty");
  for (auto w : widths) {
    if (w == 0) throw ConfigError(std::string(what) + " entries must be positive");
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (channels == 0 || height == 0 || width == 0) throw ConfigError("image shape must be positive");
  if (frames_per_clip < 2) throw ConfigError("frames_per_clip must be >= 2");
  check_widths(frame_widths, "model.frame_widths");
  check_widths(clip_widths, "model.clip_widths");
  check_widths(head_widths, "model.head_widths");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (attention) {
    attention->validate();
    const bool frame_only = kind == ModelKind::valnet;
    if ((frame_only || attention->frame_branch) && attention->has(AttentionKind::temporal)) {
      throw ConfigError("temporal attention needs a time axis; the frame encoder has none");
    }
  }
}

// ---------------------------------------------------------------- FrameEncoder

FrameEncoder::FrameEncoder(std::size_t channels, const std::vector<std::size_t>& widths, Rng& rng)
    : channels_(channels) {
  check_widths(widths, "frame encoder widths");
  std::size_t in = channels;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    Stage s;
    s.width = widths[i];
    s.conv = register_module("stage" + std::to_string(i) + ".conv",
                             conv(in, widths[i], {1, 3, 3}, {1, 2, 2}, {0, 1, 1}, rng));
    s.bn = register_module("stage" + std::to_string(i) + ".bn",
                           std::make_shared<nn::BatchNorm>(widths[i]));
    stages_.push_back(std::move(s));
    in = widths[i];
  }
  fc_ = register_module("fc", std::make_shared<nn::Linear>(in, kFeatureDim, rng));
}

Tensor FrameEncoder::forward(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != channels_) {
    throw ValidationError("frame encoder expects (B, " + std::to_string(channels_) +
                          ", H, W), got " + shape_string(x.shape()));
  }
  Tensor h = ops::reshape(x, {x.dim(0), x.dim(1), 1, x.dim(2), x.dim(3)});
  for (auto& s : stages_) {
    h = s.bn->forward(s.conv->forward(h));
    if (s.attn) h = s.attn->forward(h);
    h = ops::relu(h);
  }
  return ops::relu(fc_->forward(global_average(h)));
}

Backbone::Geometry FrameEncoder::block_geometry(std::size_t block) const {
  return {stages_.at(block).width, 0};
}

void FrameEncoder::attach_block_attention(std::size_t block,
                                          std::shared_ptr<AttentionSequence> attn) {
  auto& s = stages_.at(block);
  if (s.attn) throw ConfigError("frame encoder stage already has attention");
  s.attn = register_module("stage" + std::to_string(block) + ".attention", std::move(attn));
}

std::vector<std::shared_ptr<AttentionSequence>> FrameEncoder::attention_hooks() const {
  std::vector<std::shared_ptr<AttentionSequence>> out;
  for (const auto& s : stages_) {
    if (s.attn) out.push_back(s.attn);
  }
  return out;
}

// ------------------------------------------------------------- ResidualBlock3d

ResidualBlock3d::ResidualBlock3d(std::size_t in_channels, std::size_t out_channels,
                                 std::size_t spatial_stride, Rng& rng)
    : out_channels_(out_channels) {
  const std::size_t s = spatial_stride;
  conv1_ = register_module("conv1", conv(in_channels, out_channels, {3, 3, 3}, {1, s, s},
                                         {1, 1, 1}, rng));
  bn1_ = register_module("bn1", std::make_shared<nn::BatchNorm>(out_channels));
  conv2_ = register_module("conv2", conv(out_channels, out_channels, {3, 3, 3}, {1, 1, 1},
                                         {1, 1, 1}, rng));
  bn2_ = register_module("bn2", std::make_shared<nn::BatchNorm>(out_channels));
  if (in_channels != out_channels || s != 1) {
    shortcut_ = register_module("shortcut", conv(in_channels, out_channels, {1, 1, 1}, {1, s, s},
                                                 {0, 0, 0}, rng));
    shortcut_bn_ = register_module("shortcut_bn", std::make_shared<nn::BatchNorm>(out_channels));
  }
}

Tensor ResidualBlock3d::forward(const Tensor& x) {
  Tensor h = ops::relu(bn1_->forward(conv1_->forward(x)));
  h = bn2_->forward(conv2_->forward(h));
  if (attn_) h = attn_->forward(h);
  const Tensor skip = shortcut_ ? shortcut_bn_->forward(shortcut_->forward(x)) : x;
  return ops::relu(ops::add(h, skip));
}

void ResidualBlock3d::set_attention(std::shared_ptr<AttentionSequence> attn) {
  if (attn_) throw ConfigError("residual block already has attention");
  attn_ = register_module("attention", std::move(attn));
}

// ----------------------------------------------------------------- ClipEncoder

ClipEncoder::ClipEncoder(std::size_t channels, std::size_t time_steps,
                         const std::vector<std::size_t>& widths, Rng& rng)
    : channels_(channels), time_steps_(time_steps) {
  check_widths(widths, "clip encoder widths");
  if (time_steps == 0) throw ConfigError("clip encoder needs at least one timestep");
  stem_ = register_module("stem", conv(channels, widths[0], {3, 3, 3}, {1, 2, 2}, {1, 1, 1}, rng));
  stem_bn_ = register_module("stem_bn", std::make_shared<nn::BatchNorm>(widths[0]));
  std::size_t in = widths[0];
  for (std::size_t i = 0; i < widths.size(); ++i) {
    blocks_.push_back(register_module("block" + std::to_string(i),
                                      std::make_shared<ResidualBlock3d>(in, widths[i], 2, rng)));
    in = widths[i];
  }
  fc_ = register_module("fc", std::make_shared<nn::Linear>(in, kFeatureDim, rng));
}

Tensor ClipEncoder::forward(const Tensor& x) {
  if (x.rank() != 5 || x.dim(1) != channels_ || x.dim(2) != time_steps_) {
    throw ValidationError("clip encoder expects (B, " + std::to_string(channels_) + ", " +
                          std::to_string(time_steps_) + ", H, W), got " +
                          shape_string(x.shape()));
  }
  Tensor h = ops::relu(stem_bn_->forward(stem_->forward(x)));
  for (auto& b : blocks_) h = b->forward(h);
  return ops::relu(fc_->forward(global_average(h)));
}

Backbone::Geometry ClipEncoder::block_geometry(std::size_t block) const {
  return {blocks_.at(block)->out_channels(), time_steps_};
}

void ClipEncoder::attach_block_attention(std::size_t block,
                                         std::shared_ptr<AttentionSequence> attn) {
  blocks_.at(block)->set_attention(std::move(attn));
}

std::vector<std::shared_ptr<AttentionSequence>> ClipEncoder::attention_hooks() const {
  std::vector<std::shared_ptr<AttentionSequence>> out;
  for (const auto& b : blocks_) {
    if (b->attention()) out.push_back(b->attention());
  }
  return out;
}

// -------------------------------------------------------------- ProjectionHead

ProjectionHead::ProjectionHead(std::size_t in_features, const std::vector<std::size_t>& hidden,
                               std::size_t out_features, double dropout, Rng& rng)
    : in_features_(in_features), dropout_(dropout) {
  std::size_t in = in_features;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    Layer l;
    l.bn = register_module("bn" + std::to_string(i), std::make_shared<nn::BatchNorm>(in));
    l.fc = register_module("fc" + std::to_string(i),
                           std::make_shared<nn::Linear>(in, hidden[i], rng));
    hidden_.push_back(std::move(l));
    in = hidden[i];
  }
  out_ = register_module("out", std::make_shared<nn::Linear>(in, out_features, rng));
}

Tensor ProjectionHead::forward(const Tensor& x, std::mt19937_64& dropout_rng) {
  if (x.rank() != 2 || x.dim(1) != in_features_) {
    throw ValidationError("projection head expects (B, " + std::to_string(in_features_) +
                          "), got " + shape_string(x.shape()));
  }
  Tensor h = x;
  for (auto& l : hidden_) {
    h = ops::relu(l.fc->forward(l.bn->forward(h)));
    h = ops::dropout(h, dropout_, dropout_rng, training());
  }
  return out_->forward(h);
}

std::vector<std::size_t> ProjectionHead::widths() const {
  std::vector<std::size_t> w;
  for (const auto& l : hidden_) w.push_back(l.fc->out_features());
  w.push_back(out_->out_features());
  return w;
}

// ---------------------------------------------------------------- ValenceModel

ValenceModel::ValenceModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  dropout_rng_.seed(mix_seed(seed, 0));
  const auto& attn = config_.attention;

  Rng frame_rng(mix_seed(seed, 1));
  frame_encoder_ = std::make_shared<FrameEncoder>(config_.channels, config_.frame_widths, frame_rng);
  if (attn && (config_.kind == ModelKind::valnet || attn->frame_branch)) {
    frame_encoder_ = place(frame_encoder_, *attn, frame_rng);
  }
  register_module("frame_encoder", frame_encoder_);
  if (config_.freeze_frame_encoder) frame_encoder_->set_requires_grad(false);

  // The mood and delta branches start from the same seed; their parameters
  // are separate objects and diverge once trained on different labels.
  auto make_clip_branch = [&]() -> std::shared_ptr<Backbone> {
    Rng rng(mix_seed(seed, 2));
    std::shared_ptr<Backbone> enc = std::make_shared<ClipEncoder>(
        config_.channels, config_.frames_per_clip, config_.clip_widths, rng);
    if (attn) enc = place(enc, *attn, rng);
    return enc;
  };
  if (has_mood_branch(config_.kind)) {
    mood_encoder_ = register_module("mood_encoder", make_clip_branch());
  }
  if (has_delta_branch(config_.kind)) {
    delta_encoder_ = register_module("delta_encoder", make_clip_branch());
    Rng proj_rng(mix_seed(seed, 3));
    mood_projection_ = register_module("mood_projection",
                                       std::make_shared<nn::Linear>(kFeatureDim, kFeatureDim, proj_rng));
    Rng proj_rng2(mix_seed(seed, 3));
    delta_projection_ = register_module(
        "delta_projection", std::make_shared<nn::Linear>(kFeatureDim, kFeatureDim, proj_rng2));
  }
  Rng head_rng(mix_seed(seed, 4));
  head_ = register_module("head", std::make_shared<ProjectionHead>(
                                      fused_dim(), config_.head_widths, head_outputs(),
                                      config_.dropout, head_rng));
}

std::size_t ValenceModel::encoder_count() const {
  return 1 + (mood_encoder_ ? 1 : 0) + (delta_encoder_ ? 1 : 0);
}

std::size_t ValenceModel::fused_dim() const { return kFeatureDim * encoder_count(); }

std::size_t ValenceModel::head_outputs() const {
  return 1 + (has_mood_branch(config_.kind) ? kMoodClasses : 0) +
         (has_delta_branch(config_.kind) ? kDeltaClasses : 0);
}

ModelOutput ValenceModel::forward(const Tensor& clip, const Tensor& frame, ForwardOptions options) {
  if (!frame.defined() || frame.rank() != 4 || frame.dim(1) != config_.channels ||
      frame.dim(2) != config_.height || frame.dim(3) != config_.width) {
    throw ValidationError("frame batch must be (B, " + std::to_string(config_.channels) + ", " +
                          std::to_string(config_.height) + ", " + std::to_string(config_.width) +
                          ")" + (frame.defined() ? ", got " + shape_string(frame.shape()) : ""));
  }
  const std::size_t batch = frame.dim(0);
  std::vector<Tensor> parts;
  if (mood_encoder_) {
    if (!clip.defined() || clip.rank() != 5 || clip.dim(0) != batch ||
        clip.dim(3) != config_.height || clip.dim(4) != config_.width) {
      throw ValidationError("clip batch must be (" + std::to_string(batch) + ", " +
                            std::to_string(config_.channels) + ", " +
                            std::to_string(config_.frames_per_clip) + ", " +
                            std::to_string(config_.height) + ", " +
                            std::to_string(config_.width) + ")" +
                            (clip.defined() ? ", got " + shape_string(clip.shape()) : ""));
    }
    auto branch = [&](Backbone& enc, const std::shared_ptr<nn::Linear>& proj) {
      Tensor u = enc.forward(clip);
      if (proj) u = ops::relu(proj->forward(u));
      if (options.zero_clip_features) u = Tensor(u.shape());
      return u;
    };
    parts.push_back(branch(*mood_encoder_, mood_projection_));
    if (delta_encoder_) parts.push_back(branch(*delta_encoder_, delta_projection_));
  }
  parts.push_back(frame_encoder_->forward(frame));

  ModelOutput out;
  out.fused = parts.size() == 1 ? parts[0] : ops::concat(parts, 1);
  const Tensor y = head_->forward(out.fused, dropout_rng_);
  std::size_t col = 0;
  if (has_mood_branch(config_.kind)) {
    out.mood_logits = ops::slice(y, 1, col, col + kMoodClasses);
    col += kMoodClasses;
  }
  if (has_delta_branch(config_.kind)) {
    out.delta_logits = ops::slice(y, 1, col, col + kDeltaClasses);
    col += kDeltaClasses;
  }
  out.valence = ops::reshape(ops::slice(y, 1, col, col + 1), {batch});
  if (!training()) out.valence = ops::clamp(out.valence, -1.0, 1.0);
  return out;
}

std::vector<std::shared_ptr<AttentionSequence>> ValenceModel::attention_hooks() const {
  std::vector<std::shared_ptr<AttentionSequence>> out;
  for (const auto* enc : {&frame_encoder_, &mood_encoder_, &delta_encoder_}) {
    if (!*enc) continue;
    for (auto& h : (*enc)->attention_hooks()) out.push_back(h);
  }
  return out;
}

void ValenceModel::saturate_attention() {
  for (auto& h : attention_hooks()) h->saturate();
}

std::unique_ptr<ValenceModel> build_model(const ModelConfig& config, std::uint64_t seed) {
  return std::make_unique<ValenceModel>(config, seed);
}

}  // namespace moodval
