#include "moodval/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "moodval/checkpoint.hpp"
#include "moodval/config.hpp"
#include "moodval/dataset.hpp"
#include "moodval/error.hpp"
#include "moodval/report.hpp"
#include "moodval/synthdata.hpp"
#include "moodval/trainer.hpp"

namespace moodval::cli {

namespace {

namespace fs = std::filesystem;
using Overrides = std::vector<std::pair<std::string, nlohmann::json>>;

// Flags shared by commands that resolve an ExperimentConfig.
struct ConfigFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> dataset;
  std::optional<std::string> out;
  std::vector<std::string> sets;

  void add_to(CLI::App& app) {
    app.add_option("-c,--config", config, "experiment config JSON")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "overrides /seed");
    app.add_option("--dataset", dataset, "overrides /dataset/path");
    app.add_option("-o,--out", out, "overrides /output/dir (or the dataset path for synth)");
    app.add_option("--set", sets, "generic override, /json/pointer=<json value>");
  }

  Overrides overrides() const {
    Overrides o;
    if (seed) o.emplace_back("/seed", *seed);
    if (dataset) o.emplace_back("/dataset/path", *dataset);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || s.empty() || s[0] != '/') {
        throw ConfigError("--set expects /json/pointer=value, got '" + s + "'");
      }
      const std::string text = s.substr(eq + 1);
      nlohmann::json value;
      try {
        value = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception&) {
        value = text;  // bare strings
      }
      o.emplace_back(s.substr(0, eq), value);
    }
    return o;
  }
};

struct SamplerFlags {
  std::optional<std::size_t> initial_length, stride, frames_per_clip;
  std::optional<double> confidence_threshold, delta_deadzone;

  void add_to(CLI::App& app) {
    app.add_option("--initial-length", initial_length);
    app.add_option("--stride", stride);
    app.add_option("--frames-per-clip", frames_per_clip);
    app.add_option("--confidence-threshold", confidence_threshold);
    app.add_option("--delta-deadzone", delta_deadzone);
  }

  void append(Overrides& o) const {
    if (initial_length) o.emplace_back("/sampler/initial_length", *initial_length);
    if (stride) o.emplace_back("/sampler/stride", *stride);
    if (frames_per_clip) o.emplace_back("/sampler/frames_per_clip", *frames_per_clip);
    if (confidence_threshold) o.emplace_back("/sampler/confidence_threshold", *confidence_threshold);
    if (delta_deadzone) o.emplace_back("/sampler/delta_deadzone", *delta_deadzone);
  }
};

ExperimentConfig resolve(const ConfigFlags& flags, Overrides extra) {
  auto o = flags.overrides();
  o.insert(o.end(), extra.begin(), extra.end());
  std::optional<fs::path> file;
  if (flags.config) file = *flags.config;
  return resolve_config(file, o);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<ClipSpec> load_split_manifest(const ExperimentConfig& cfg, const std::string& rel) {
  const fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : cfg.dataset_path / rel;
  auto clips = read_manifest(p);
  for (const auto& c : clips) {
    if (c.sampled_indices.size() != cfg.sampler.frames_per_clip) {
      throw ValidationError(p.string() + ": clips carry " + std::to_string(c.sampled_indices.size()) +
                            " frames, config expects " + std::to_string(cfg.sampler.frames_per_clip) +
                            " (run make-clips with matching --frames-per-clip)");
    }
  }
  return clips;
}

// ------------------------------------------------------------------ commands

int cmd_synth(const ConfigFlags& flags, std::optional<std::size_t> num_videos,
              std::optional<std::size_t> frames, std::ostream& out) {
  Overrides extra;
  if (num_videos) extra.emplace_back("/synth/num_videos", *num_videos);
  if (frames) extra.emplace_back("/synth/frames_per_video", *frames);
  const auto cfg = resolve(flags, extra);
  const fs::path root = flags.out ? fs::path(*flags.out) : cfg.dataset_path;
  build_benchmark(cfg.synth, root);
  const auto info = read_dataset_info(root);
  out << nlohmann::json{{"dataset", root.string()},
                        {"videos", info.videos.size()},
                        {"train_videos", info.split("train").size()},
                        {"val_videos", info.split("val").size()}}
             .dump()
      << "\n";
  return 0;
}

int cmd_derive_labels(const std::string& annotations, const std::optional<std::string>& labels_out,
                      bool keep_headers, std::ostream& out) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(annotations)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  if (files.empty()) throw ValidationError("no .jsonl annotation files in " + annotations);
  std::sort(files.begin(), files.end());
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& f : files) {
    auto tl = load_timeline(f);
    const MoodLabel derived = derive_mood(tl);
    const MoodLabel used = tl.annotated_mood().value_or(derived);
    labels[tl.video_id()] = {{"mood", static_cast<int>(used)},
                             {"derived", static_cast<int>(derived)},
                             {"source", tl.annotated_mood() ? "annotated" : "derived"}};
    if (!keep_headers && !tl.annotated_mood()) {
      tl.set_annotated_mood(derived);
      save_timeline(tl, f);
    }
  }
  const fs::path dst = labels_out ? fs::path(*labels_out) : fs::path(annotations) / ".." / "labels.json";
  write_json(dst, labels);
  out << nlohmann::json{{"labels", dst.lexically_normal().string()}, {"videos", labels.size()}}.dump()
      << "\n";
  return 0;
}

int cmd_make_clips(const ConfigFlags& flags, const SamplerFlags& sampler,
                   const std::optional<std::string>& annotations,
                   const std::optional<std::string>& out_dir, std::ostream& out) {
  Overrides extra;
  sampler.append(extra);
  const auto cfg = resolve(flags, extra);
  const auto info = read_dataset_info(cfg.dataset_path);
  const fs::path ann = annotations ? fs::path(*annotations) : layout::annotations(cfg.dataset_path);
  const fs::path dst = out_dir ? fs::path(*out_dir) : layout::manifests(cfg.dataset_path);
  fs::create_directories(dst);
  nlohmann::json summary = {{"manifests", dst.string()}};
  for (const std::string split : {"train", "val"}) {
    std::vector<ClipSpec> clips;
    for (const auto& id : info.split(split)) {
      const auto raw = load_timeline(ann / (id + ".jsonl"));
      // Mood comes from the raw annotations; clips from the usable frames.
      const auto mood = resolve_mood(raw);
      const auto usable = filter_confidence(raw, cfg.confidence_threshold);
      auto c = make_labelled_clips(usable, mood, cfg.sampler, cfg.delta_deadzone);
      clips.insert(clips.end(), c.begin(), c.end());
    }
    write_manifest(clips, dst / (split + ".jsonl"));
    summary[split + "_clips"] = clips.size();
  }
  out << summary.dump() << "\n";
  return 0;
}

struct TrainFlags {
  std::optional<std::string> model;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<std::string> attention, placement;
  bool quiet = false;
};

int cmd_train(const ConfigFlags& flags, const SamplerFlags& sampler, const TrainFlags& t,
              std::ostream& out, std::ostream& err) {
  Overrides extra;
  sampler.append(extra);
  if (flags.out) extra.emplace_back("/output/dir", *flags.out);
  if (t.model) extra.emplace_back("/model/kind", *t.model);
  if (t.epochs) extra.emplace_back("/trainer/epochs", *t.epochs);
  if (t.batch_size) extra.emplace_back("/trainer/batch_size", *t.batch_size);
  if (t.attention) {
    if (*t.attention == "none") {
      extra.emplace_back("/attention", nullptr);
    } else {
      nlohmann::json kinds = nlohmann::json::array();
      std::string::size_type start = 0;
      while (start <= t.attention->size()) {
        const auto comma = t.attention->find(',', start);
        kinds.push_back(t.attention->substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      extra.emplace_back("/attention/kinds", kinds);
    }
  }
  if (t.placement) extra.emplace_back("/attention/placement", *t.placement);
  const auto cfg = resolve(flags, extra);

  const auto info = read_dataset_info(cfg.dataset_path);
  const auto train_clips = load_split_manifest(cfg, cfg.train_manifest);
  const auto val_clips = load_split_manifest(cfg, cfg.val_manifest);
  const fs::path dir = resolved_output_dir(cfg);
  fs::create_directories(dir);
  const auto snapshot = to_json(cfg);
  write_json(dir / "config.json", snapshot);

  auto model = build_model(cfg.model_config(info.channels, info.height, info.width), cfg.seed);
  FrameStore store(layout::frames(cfg.dataset_path));
  TrainOutputs outputs;
  outputs.dir = dir;
  outputs.config_snapshot = snapshot;
  outputs.header = cfg.history_header();
  const std::size_t total = cfg.trainer.epochs;
  if (!t.quiet) {
    outputs.on_epoch = [&err, total](const EpochRecord& r) {
      err << "epoch " << r.epoch + 1 << "/" << total << " lr=" << r.lr
          << " loss=" << r.train.total << " val_ccc=" << r.val_ccc << std::endl;
    };
  }
  const auto result = train(*model, store, train_clips, val_clips, cfg.train_config(), outputs);
  const nlohmann::json summary = {{"output", dir.string()},
                                  {"epochs", result.history.epochs.size()},
                                  {"best_epoch", result.best_epoch},
                                  {"best_val_ccc", result.best_val_ccc},
                                  {"last_val_ccc", result.history.epochs.back().val_ccc}};
  write_json(dir / "summary.json", summary);
  out << summary.dump() << "\n";
  return 0;
}

int cmd_eval(const std::optional<std::string>& checkpoint, const std::optional<std::string>& predictions,
             const std::optional<std::string>& dataset, const std::string& split,
             const std::optional<std::string>& manifest, const std::string& out_dir, std::ostream& out) {
  if (checkpoint.has_value() == predictions.has_value()) {
    throw ValidationError("eval needs exactly one of --checkpoint or --predictions");
  }
  EvalResult result;
  if (predictions) {
    result.predictions = read_predictions(*predictions);
    if (result.predictions.empty()) throw ValidationError(*predictions + " holds no predictions");
    std::sort(result.predictions.begin(), result.predictions.end(),
              [](const Prediction& a, const Prediction& b) {
                return std::tie(a.video_id, a.frame) < std::tie(b.video_id, b.frame);
              });
    result.report = score_predictions(result.predictions);
  } else {
    const auto ck = read_checkpoint(*checkpoint);
    if (!ck.meta.contains("config")) throw ValidationError(*checkpoint + ": no config snapshot");
    Overrides o;
    if (dataset) o.emplace_back("/dataset/path", *dataset);
    auto doc = ck.meta["config"];
    for (const auto& [p, v] : o) doc[nlohmann::json::json_pointer(p)] = v;
    const auto cfg = config_from_json(doc);
    const auto info = read_dataset_info(cfg.dataset_path);
    auto model = build_model(cfg.model_config(info.channels, info.height, info.width), cfg.seed);
    load_state(*model, ck);
    const std::string rel = manifest ? *manifest : (split == "train" ? cfg.train_manifest : cfg.val_manifest);
    const auto clips = load_split_manifest(cfg, rel);
    FrameStore store(layout::frames(cfg.dataset_path));
    result = run_eval(*model, store, clips, cfg.eval_batch_size);
  }
  write_eval_artifacts(result, out_dir);
  out << nlohmann::json{{"report", (fs::path(out_dir) / "report.json").string()},
                        {"ccc", result.report.ccc},
                        {"pcc", result.report.pcc},
                        {"n_frames", result.report.n_frames}}
             .dump()
      << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& files, const std::string& format, bool group,
               const std::optional<std::string>& out_path, std::ostream& out) {
  std::vector<TrainHistory> histories;
  for (const auto& f : files) {
    const fs::path p = fs::is_directory(f) ? fs::path(f) / "history.jsonl" : fs::path(f);
    histories.push_back(read_history(p));
  }
  const auto rows = build_report(histories, group);
  const auto table = render_table(rows, format == "csv" ? TableFormat::csv : TableFormat::markdown);
  if (out_path) {
    if (fs::path(*out_path).has_parent_path()) fs::create_directories(fs::path(*out_path).parent_path());
    std::ofstream f(*out_path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + *out_path);
    f << table;
  }
  out << table;
  return 0;
}

void print_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Valence inference with mood and emotion-change context"};
  app.name("moodval");
  app.require_subcommand(1);

  ConfigFlags synth_flags;
  std::optional<std::size_t> synth_videos, synth_frames;
  auto* synth = app.add_subcommand("synth", "generate the synthetic benchmark");
  synth_flags.add_to(*synth);
  synth->add_option("--num-videos", synth_videos);
  synth->add_option("--frames-per-video", synth_frames);

  std::string derive_dir;
  std::optional<std::string> labels_out;
  bool keep_headers = false;
  auto* derive = app.add_subcommand("derive-labels", "derive per-video mood labels");
  derive->add_option("annotations", derive_dir, "directory of annotation .jsonl files")
      ->required()
      ->check(CLI::ExistingDirectory);
  derive->add_option("--labels", labels_out, "labels JSON output (default: <dir>/../labels.json)");
  derive->add_flag("--keep-headers", keep_headers, "do not write derived moods into file headers");

  ConfigFlags clips_flags;
  SamplerFlags clips_sampler;
  std::optional<std::string> clips_annotations;
  auto* clips = app.add_subcommand("make-clips", "build train/val clip manifests");
  clips_flags.add_to(*clips);
  clips_sampler.add_to(*clips);
  clips->add_option("--annotations", clips_annotations, "annotation directory (default: <dataset>/annotations)");

  ConfigFlags train_flags;
  SamplerFlags train_sampler;
  TrainFlags tflags;
  auto* trn = app.add_subcommand("train", "train a model");
  train_flags.add_to(*trn);
  train_sampler.add_to(*trn);
  trn->add_option("--model", tflags.model, "valnet | m_valnet | mdelta_valnet");
  trn->add_option("--epochs", tflags.epochs);
  trn->add_option("--batch-size", tflags.batch_size);
  trn->add_option("--attention", tflags.attention, "comma list of spatial,channel,temporal or none");
  trn->add_option("--placement", tflags.placement, "within_block | outside_backbone");
  trn->add_flag("-q,--quiet", tflags.quiet);

  std::optional<std::string> ev_ckpt, ev_pred, ev_dataset, ev_manifest;
  std::string ev_split = "val", ev_out;
  auto* ev = app.add_subcommand("eval", "score a checkpoint or a predictions file");
  ev->add_option("--checkpoint", ev_ckpt)->check(CLI::ExistingFile);
  ev->add_option("--predictions", ev_pred)->check(CLI::ExistingFile);
  ev->add_option("--dataset", ev_dataset, "dataset root (default: from the checkpoint config)");
  ev->add_option("--split", ev_split)->check(CLI::IsMember({"train", "val"}));
  ev->add_option("--manifest", ev_manifest, "manifest path, overrides --split");
  ev->add_option("-o,--out", ev_out, "output directory")->required();

  std::vector<std::string> rep_files;
  std::string rep_format = "markdown";
  bool rep_group = false;
  std::optional<std::string> rep_out;
  auto* rep = app.add_subcommand("report", "comparison table from training histories");
  rep->add_option("histories", rep_files, "history.jsonl files or run directories")->required();
  rep->add_option("--format", rep_format)->check(CLI::IsMember({"markdown", "csv"}));
  rep->add_flag("--group-seeds", rep_group, "average runs that differ only by seed");
  rep->add_option("-o,--out", rep_out);

  auto* schema = app.add_subcommand("schema", "print the experiment config JSON schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage_error", e.what());
    return 2;
  }

  try {
    if (*synth) return cmd_synth(synth_flags, synth_videos, synth_frames, out);
    if (*derive) return cmd_derive_labels(derive_dir, labels_out, keep_headers, out);
    if (*clips) return cmd_make_clips(clips_flags, clips_sampler, clips_annotations, clips_flags.out, out);
    if (*trn) return cmd_train(train_flags, train_sampler, tflags, out, err);
    if (*ev) return cmd_eval(ev_ckpt, ev_pred, ev_dataset, ev_split, ev_manifest, ev_out, out);
    if (*rep) return cmd_report(rep_files, rep_format, rep_group, rep_out, out);
    if (*schema) {
      out << config_schema().dump(2) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    print_error(err, e.kind(), e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    print_error(err, "io_error", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(err, "internal_error", e.what());
    return 1;
  }
  return 0;
}

}  // namespace moodval::cli
