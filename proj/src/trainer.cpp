#include "moodval/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "moodval/checkpoint.hpp"
#include "moodval/error.hpp"

namespace moodval {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("trainer.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("trainer.batch_size must be >= 1");
  if (!(base_lr > 0.0)) throw ConfigError("trainer.base_lr must be > 0");
  if (!(lr_decay > 0.0)) throw ConfigError("trainer.lr_decay must be > 0");
  if (lr_decay_every < 1) throw ConfigError("trainer.lr_decay_every must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("trainer.adam_eps must be > 0");
  if (grad_clip < 0.0) throw ConfigError("trainer.grad_clip must be >= 0");
  loss.validate();
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  return config.base_lr *
         std::pow(config.lr_decay, static_cast<double>(epoch / config.lr_decay_every));
}

Batch make_batch(FrameStore& store, std::span<const ClipSpec* const> clips,
                 const ModelConfig& model, bool with_clips) {
  if (clips.empty()) throw ValidationError("empty batch");
  const std::size_t b = clips.size();
  const std::size_t c = model.channels, h = model.height, w = model.width;
  const std::size_t n = model.frames_per_clip;
  const std::size_t plane = h * w;
  Batch batch;
  batch.frames = Tensor({b, c, h, w});
  if (with_clips) batch.clips = Tensor({b, c, n, h, w});
  auto fv = batch.frames.values();
  for (std::size_t i = 0; i < b; ++i) {
    const ClipSpec& clip = *clips[i];
    const VideoFrames& video = store.video(clip.video_id);
    if (video.channels != c || video.height != h || video.width != w) {
      throw ValidationError("video '" + clip.video_id + "' frames are " +
                            std::to_string(video.channels) + "x" + std::to_string(video.height) +
                            "x" + std::to_string(video.width) + ", model expects " +
                            std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w));
    }
    const auto last = video.frame(clip.clip_end);
    std::copy(last.begin(), last.end(), fv.begin() + static_cast<std::ptrdiff_t>(i * c * plane));
    if (with_clips) {
      if (clip.sampled_indices.size() != n) {
        throw ValidationError("clip of '" + clip.video_id + "' has " +
                              std::to_string(clip.sampled_indices.size()) +
                              " sampled frames, model expects " + std::to_string(n));
      }
      auto cv = batch.clips.values();
      for (std::size_t t = 0; t < n; ++t) {
        const auto f = video.frame(clip.sampled_indices[t]);
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::copy(f.begin() + static_cast<std::ptrdiff_t>(ch * plane),
                    f.begin() + static_cast<std::ptrdiff_t>((ch + 1) * plane),
                    cv.begin() + static_cast<std::ptrdiff_t>(((i * c + ch) * n + t) * plane));
        }
      }
    }
    batch.targets.push_back(clip.target_valence);
    batch.mood.push_back(class_index(clip.mood));
    batch.delta.push_back(class_index(clip.delta));
  }
  return batch;
}

// ---------------------------------------------------------------- history I/O

nlohmann::json to_json(const HistoryHeader& h) {
  return {{"kind", "header"},
          {"model", h.model},
          {"attention", h.attention},
          {"placement", h.placement},
          {"frames_per_clip", h.frames_per_clip},
          {"seed", h.seed}};
}

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json train = {{"valence_mse", r.train.valence.mse},
                          {"valence_one_minus_ccc", r.train.valence.one_minus_ccc},
                          {"valence", r.train.valence.weighted},
                          {"total", r.train.total}};
  train["mood"] = r.train.mood ? nlohmann::json(*r.train.mood) : nlohmann::json(nullptr);
  train["delta"] = r.train.delta ? nlohmann::json(*r.train.delta) : nlohmann::json(nullptr);
  return {{"kind", "epoch"},
          {"epoch", r.epoch},
          {"lr", r.lr},
          {"f", r.weights.f},
          {"g", r.weights.g},
          {"train", train},
          {"train_ccc", r.train_ccc ? nlohmann::json(*r.train_ccc) : nlohmann::json(nullptr)},
          {"val_ccc", r.val_ccc},
          {"val_pcc", r.val_pcc},
          {"val_mean_video_ccc", r.val_mean_video_ccc}};
}

void write_history(std::ostream& out, const TrainHistory& history) {
  out << to_json(history.header).dump() << "\n";
  for (const auto& r : history.epochs) out << to_json(r).dump() << "\n";
}

void write_history(const TrainHistory& history, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_history(out, history);
}

TrainHistory read_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open history " + path.string());
  TrainHistory h;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "header") {
        if (have_header) throw ParseError(path.string(), lineno, "duplicate header");
        h.header.model = j.at("model").get<std::string>();
        h.header.attention = j.at("attention").get<std::string>();
        h.header.placement = j.value("placement", "none");
        h.header.frames_per_clip = j.at("frames_per_clip").get<std::size_t>();
        h.header.seed = j.at("seed").get<std::uint64_t>();
        have_header = true;
      } else if (kind == "epoch") {
        if (!have_header) throw ParseError(path.string(), lineno, "epoch record before header");
        EpochRecord r;
        r.epoch = j.at("epoch").get<std::size_t>();
        r.lr = j.at("lr").get<double>();
        r.weights = {j.at("f").get<double>(), j.at("g").get<double>()};
        const auto& t = j.at("train");
        r.train.valence.mse = t.at("valence_mse").get<double>();
        r.train.valence.one_minus_ccc = t.at("valence_one_minus_ccc").get<double>();
        r.train.valence.weighted = t.at("valence").get<double>();
        if (!t.at("mood").is_null()) r.train.mood = t.at("mood").get<double>();
        if (!t.at("delta").is_null()) r.train.delta = t.at("delta").get<double>();
        r.train.total = t.at("total").get<double>();
        if (!j.at("train_ccc").is_null()) r.train_ccc = j.at("train_ccc").get<double>();
        r.val_ccc = j.at("val_ccc").get<double>();
        r.val_pcc = j.at("val_pcc").get<double>();
        r.val_mean_video_ccc = j.value("val_mean_video_ccc", 0.0);
        h.epochs.push_back(r);
      } else {
        throw ParseError(path.string(), lineno, "unknown record kind '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  if (!have_header) throw ParseError(path.string(), lineno, "missing header line");
  return h;
}

// ------------------------------------------------------------------ evaluation

MetricReport score_predictions(std::span<const Prediction> predictions) {
  std::vector<const Prediction*> sorted;
  for (const auto& p : predictions) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(), [](const Prediction* a, const Prediction* b) {
    return std::tie(a->video_id, a->frame) < std::tie(b->video_id, b->frame);
  });
  std::map<std::string, PredictionSeries> series;
  for (const auto* p : sorted) series[p->video_id].push(p->y, p->y_hat);
  return evaluate(series);
}

EvalResult run_eval(ValenceModel& model, FrameStore& store, std::span<const ClipSpec> clips,
                    std::size_t batch_size) {
  if (clips.empty()) throw ValidationError("evaluation set is empty");
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  std::vector<const ClipSpec*> order;
  for (const auto& c : clips) order.push_back(&c);
  std::sort(order.begin(), order.end(), [](const ClipSpec* a, const ClipSpec* b) {
    return std::tie(a->video_id, a->target_index) < std::tie(b->video_id, b->target_index);
  });

  const bool was_training = model.training();
  model.set_training(false);
  NoGradGuard no_grad;
  const bool with_clips = has_mood_branch(model.kind());
  EvalResult result;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    const std::span<const ClipSpec* const> chunk(order.data() + start, end - start);
    const Batch batch = make_batch(store, chunk, model.config(), with_clips);
    const auto out = model.forward(batch.clips, batch.frames);
    const auto yv = out.valence.values();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      result.predictions.push_back(
          {chunk[i]->video_id, chunk[i]->target_index, chunk[i]->target_valence, yv[i]});
    }
  }
  model.set_training(was_training);
  result.report = score_predictions(result.predictions);
  return result;
}

// -------------------------------------------------------------------- training

namespace {

struct Adam {
  std::vector<Tensor> params;
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;

  explicit Adam(std::vector<Tensor> p) : params(std::move(p)) {
    for (const auto& t : params) {
      m.emplace_back(t.numel(), 0.0);
      v.emplace_back(t.numel(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params) p.zero_grad();
  }

  void clip(double max_norm) {
    double sq = 0.0;
    for (auto& p : params) {
      for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double s = max_norm / norm;
    for (auto& p : params) {
      for (double& g : p.grad()) g *= s;
    }
  }

  void update(double lr, const TrainConfig& c) {
    ++step;
    const double bc1 = 1.0 - std::pow(c.adam_beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(c.adam_beta2, static_cast<double>(step));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto val = params[k].values();
      const auto g = params[k].grad();
      auto& mk = m[k];
      auto& vk = v[k];
      for (std::size_t i = 0; i < val.size(); ++i) {
        mk[i] = c.adam_beta1 * mk[i] + (1.0 - c.adam_beta1) * g[i];
        vk[i] = c.adam_beta2 * vk[i] + (1.0 - c.adam_beta2) * g[i] * g[i];
        val[i] -= lr * (mk[i] / bc1) / (std::sqrt(vk[i] / bc2) + c.adam_eps);
      }
    }
  }
};

std::string describe(const LossBreakdown& b) {
  std::ostringstream s;
  s << "valence=" << b.valence.weighted << " (mse=" << b.valence.mse
    << ", 1-ccc=" << b.valence.one_minus_ccc << ")";
  if (b.mood) s << " mood=" << *b.mood;
  if (b.delta) s << " delta=" << *b.delta;
  s << " total=" << b.total;
  return s.str();
}

}  // namespace

TrainResult train(ValenceModel& model, FrameStore& store, std::span<const ClipSpec> train_clips,
                  std::span<const ClipSpec> val_clips, const TrainConfig& config,
                  const TrainOutputs& outputs) {
  config.validate();
  if (train_clips.empty()) throw ValidationError("training set is empty");
  if (val_clips.empty()) throw ValidationError("validation set is empty");

  const ModelKind kind = model.kind();
  const bool with_clips = has_mood_branch(kind);
  Adam adam(model.trainable_parameters());
  Rng order_rng(mix_seed(config.seed, 0x5eed));

  std::vector<const ClipSpec*> pool;
  for (const auto& c : train_clips) pool.push_back(&c);

  TrainResult result;
  result.history.header = outputs.header;
  const bool persist = !outputs.dir.empty();
  if (persist) std::filesystem::create_directories(outputs.dir);
  double best = -2.0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    model.set_training(true);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(epoch, config);
    rec.weights = dynamic_weights(epoch, config.epochs, config.loss.alpha, config.loss.k);

    order_rng.shuffle(pool.begin(), pool.end());
    const std::size_t used = config.clips_per_epoch == 0
                                 ? pool.size()
                                 : std::min(pool.size(), config.clips_per_epoch);

    LossBreakdown sums;
    double mood_sum = 0.0, delta_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < used; start += config.batch_size) {
      const std::size_t end = std::min(used, start + config.batch_size);
      const std::span<const ClipSpec* const> chunk(pool.data() + start, end - start);
      const Batch batch = make_batch(store, chunk, model.config(), with_clips);

      adam.zero_grad();
      const auto out = model.forward(batch.clips, batch.frames);
      LossBreakdown b;
      BranchLossTensors losses;
      losses.valence = valence_loss(out.valence, batch.targets, rec.weights.f, rec.weights.g,
                                    &b.valence);
      if (has_mood_branch(kind)) {
        losses.mood = cross_entropy(out.mood_logits, batch.mood);
        b.mood = losses.mood.item();
      }
      if (has_delta_branch(kind)) {
        losses.delta = cross_entropy(out.delta_logits, batch.delta);
        b.delta = losses.delta.item();
      }
      const Tensor total = total_loss(kind, losses);
      b.total = total.item();
      if (!std::isfinite(b.total)) {
        throw NonFiniteLossError("non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches) + ": " + describe(b));
      }
      total.backward();
      if (config.grad_clip > 0.0) adam.clip(config.grad_clip);
      adam.update(rec.lr, config);

      sums.valence.mse += b.valence.mse;
      sums.valence.one_minus_ccc += b.valence.one_minus_ccc;
      sums.valence.weighted += b.valence.weighted;
      mood_sum += b.mood.value_or(0.0);
      delta_sum += b.delta.value_or(0.0);
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    rec.train.valence = {sums.valence.mse / nb, sums.valence.one_minus_ccc / nb,
                         sums.valence.weighted / nb};
    BranchLosses means{rec.train.valence.weighted, std::nullopt, std::nullopt};
    if (has_mood_branch(kind)) rec.train.mood = means.mood = mood_sum / nb;
    if (has_delta_branch(kind)) rec.train.delta = means.delta = delta_sum / nb;
    rec.train.total = total_loss(kind, means);

    if (config.eval_train) rec.train_ccc = run_eval(model, store, train_clips).report.ccc;
    const auto val = run_eval(model, store, val_clips).report;
    rec.val_ccc = val.ccc;
    rec.val_pcc = val.pcc;
    rec.val_mean_video_ccc = val.mean_video_ccc;
    result.history.epochs.push_back(rec);

    nlohmann::json meta = {{"config", outputs.config_snapshot},
                           {"epoch", epoch},
                           {"val_ccc", rec.val_ccc}};
    if (rec.val_ccc > best) {
      best = rec.val_ccc;
      result.best_epoch = epoch;
      result.best_val_ccc = rec.val_ccc;
      if (persist) save_checkpoint(outputs.dir / "best.ckpt", model, meta);
    }
    if (persist) {
      save_checkpoint(outputs.dir / "last.ckpt", model, meta);
      write_history(result.history, outputs.dir / "history.jsonl");
    }
    if (outputs.on_epoch) outputs.on_epoch(rec);
    if (config.target_train_ccc > 0.0 && rec.train_ccc && *rec.train_ccc >= config.target_train_ccc) {
      break;
    }
  }
  model.set_training(false);
  return result;
}

}  // namespace moodval
