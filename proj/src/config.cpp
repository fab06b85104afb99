#include "moodval/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "moodval/error.hpp"

namespace moodval {

namespace {

constexpr const char* kSchemaText = R"json({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "moodval experiment config",
  "type": "object",
  "additionalProperties": false,
  "required": ["schema_version"],
  "properties": {
    "schema_version": {"type": "integer", "enum": [1]},
    "seed": {"type": "integer", "minimum": 0},
    "dataset": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "path": {"type": "string", "minLength": 1},
        "train_manifest": {"type": "string", "minLength": 1},
        "val_manifest": {"type": "string", "minLength": 1}
      }
    },
    "output": {
      "type": "object", "additionalProperties": false,
      "properties": {"dir": {"type": "string", "minLength": 1}}
    },
    "model": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "kind": {"type": "string", "enum": ["valnet", "m_valnet", "mdelta_valnet"]},
        "frame_widths": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "clip_widths": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "head_widths": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "freeze_frame_encoder": {"type": "boolean"}
      }
    },
    "attention": {
      "type": ["object", "null"], "additionalProperties": false,
      "required": ["kinds"],
      "properties": {
        "kinds": {"type": "array", "minItems": 1, "uniqueItems": true,
                  "items": {"type": "string", "enum": ["spatial", "channel", "temporal"]}},
        "placement": {"type": "string", "enum": ["within_block", "outside_backbone"]},
        "spatial_kernel": {"type": "integer", "minimum": 1},
        "reduction": {"type": "integer", "minimum": 1},
        "frame_branch": {"type": "boolean"}
      }
    },
    "sampler": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "initial_length": {"type": "integer", "minimum": 3},
        "stride": {"type": "integer", "minimum": 1},
        "frames_per_clip": {"type": "integer", "minimum": 2},
        "confidence_threshold": {"type": "number", "minimum": 0, "maximum": 1},
        "delta_deadzone": {"type": "number", "minimum": 0}
      }
    },
    "loss": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "k": {"type": "integer", "minimum": 1}
      }
    },
    "trainer": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "epochs": {"type": "integer", "minimum": 1},
        "batch_size": {"type": "integer", "minimum": 1},
        "base_lr": {"type": "number", "exclusiveMinimum": 0},
        "lr_decay": {"type": "number", "exclusiveMinimum": 0},
        "lr_decay_every": {"type": "integer", "minimum": 1},
        "adam_beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "adam_beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "adam_eps": {"type": "number", "exclusiveMinimum": 0},
        "grad_clip": {"type": "number", "minimum": 0},
        "clips_per_epoch": {"type": "integer", "minimum": 0},
        "eval_train": {"type": "boolean"},
        "target_train_ccc": {"type": "number", "minimum": 0, "maximum": 1},
        "eval_batch_size": {"type": "integer", "minimum": 1}
      }
    },
    "synth": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "num_videos": {"type": "integer", "minimum": 1},
        "frames_per_video": {"type": "integer", "minimum": 2},
        "channels": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "width": {"type": "integer", "minimum": 1},
        "mood_biases": {"type": "array", "minItems": 1,
                        "items": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1}},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "latent_amplitude": {"type": "number", "minimum": 0},
        "observation_noise": {"type": "number", "minimum": 0},
        "pixel_noise": {"type": "number", "minimum": 0},
        "drift_window": {"type": "integer", "minimum": 1},
        "drift_scale": {"type": "number", "exclusiveMinimum": 0},
        "square_size": {"type": "integer", "minimum": 1},
        "val_every": {"type": "integer", "minimum": 2}
      }
    }
  }
})json";

std::string type_name(const nlohmann::json& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "object";
}

bool type_matches(const nlohmann::json& v, const std::string& t) {
  if (t == "number") return v.is_number();
  if (t == "integer") {
    if (v.is_number_integer()) return true;
    return v.is_number_float() && std::floor(v.get<double>()) == v.get<double>();
  }
  return type_name(v) == t;
}

void check(const nlohmann::json& v, const nlohmann::json& s, const std::string& at,
           std::vector<std::string>& out) {
  const std::string where = at.empty() ? "/" : at;
  if (s.contains("type")) {
    std::vector<std::string> types;
    if (s["type"].is_array()) {
      for (const auto& t : s["type"]) types.push_back(t.get<std::string>());
    } else {
      types.push_back(s["type"].get<std::string>());
    }
    bool ok = false;
    for (const auto& t : types) ok = ok || type_matches(v, t);
    if (!ok) {
      out.push_back(where + ": expected " + s["type"].dump() + ", got " + type_name(v));
      return;
    }
  }
  if (s.contains("enum")) {
    bool found = false;
    for (const auto& e : s["enum"]) found = found || e == v;
    if (!found) out.push_back(where + ": " + v.dump() + " is not one of " + s["enum"].dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>()) {
      out.push_back(where + ": " + v.dump() + " is below the minimum " + s["minimum"].dump());
    }
    if (s.contains("maximum") && x > s["maximum"].get<double>()) {
      out.push_back(where + ": " + v.dump() + " exceeds the maximum " + s["maximum"].dump());
    }
    if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>()) {
      out.push_back(where + ": " + v.dump() + " must be > " + s["exclusiveMinimum"].dump());
    }
    if (s.contains("exclusiveMaximum") && x >= s["exclusiveMaximum"].get<double>()) {
      out.push_back(where + ": " + v.dump() + " must be < " + s["exclusiveMaximum"].dump());
    }
  }
  if (v.is_string() && s.contains("minLength") &&
      v.get<std::string>().size() < s["minLength"].get<std::size_t>()) {
    out.push_back(where + ": string is too short");
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) {
      out.push_back(where + ": needs at least " + s["minItems"].dump() + " items");
    }
    if (s.value("uniqueItems", false)) {
      for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = i + 1; j < v.size(); ++j)
          if (v[i] == v[j]) out.push_back(where + ": items must be unique");
    }
    if (s.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], at + "/" + std::to_string(i), out);
    }
  }
  if (v.is_object()) {
    if (s.contains("required")) {
      for (const auto& r : s["required"]) {
        if (!v.contains(r.get<std::string>())) {
          out.push_back(where + ": missing required key '" + r.get<std::string>() + "'");
        }
      }
    }
    const auto props = s.value("properties", nlohmann::json::object());
    for (const auto& [key, child] : v.items()) {
      if (props.contains(key)) {
        check(child, props[key], at + "/" + key, out);
      } else if (s.contains("additionalProperties") && s["additionalProperties"] == false) {
        out.push_back(where + ": unknown key '" + key + "'");
      }
    }
  }
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

const nlohmann::json& config_schema() {
  static const nlohmann::json schema = nlohmann::json::parse(kSchemaText);
  return schema;
}

std::vector<std::string> schema_violations(const nlohmann::json& document,
                                           const nlohmann::json& schema) {
  std::vector<std::string> out;
  check(document, schema, "", out);
  return out;
}

ModelConfig ExperimentConfig::model_config(std::size_t channels, std::size_t height,
                                           std::size_t width) const {
  ModelConfig m;
  m.kind = model_kind;
  m.channels = channels;
  m.height = height;
  m.width = width;
  m.frames_per_clip = sampler.frames_per_clip;
  m.frame_widths = frame_widths;
  m.clip_widths = clip_widths;
  m.head_widths = head_widths;
  m.dropout = dropout;
  m.freeze_frame_encoder = freeze_frame_encoder;
  m.attention = attention;
  return m;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t = trainer;
  t.loss = loss;
  t.seed = seed;
  return t;
}

HistoryHeader ExperimentConfig::history_header() const {
  HistoryHeader h;
  h.model = to_string(model_kind);
  if (attention) {
    h.attention = attention->label();
    h.placement = to_string(attention->placement);
  }
  h.frames_per_clip = sampler.frames_per_clip;
  h.seed = seed;
  return h;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json attention = nullptr;
  if (c.attention) {
    nlohmann::json kinds = nlohmann::json::array();
    for (auto k : c.attention->kinds) kinds.push_back(to_string(k));
    attention = {{"kinds", kinds},
                 {"placement", to_string(c.attention->placement)},
                 {"spatial_kernel", c.attention->spatial_kernel},
                 {"reduction", c.attention->reduction},
                 {"frame_branch", c.attention->frame_branch}};
  }
  const auto& t = c.trainer;
  const auto& s = c.synth;
  return {
      {"schema_version", kConfigSchemaVersion},
      {"seed", c.seed},
      {"dataset",
       {{"path", c.dataset_path.string()},
        {"train_manifest", c.train_manifest},
        {"val_manifest", c.val_manifest}}},
      {"output", {{"dir", c.output_dir.string()}}},
      {"model",
       {{"kind", to_string(c.model_kind)},
        {"frame_widths", c.frame_widths},
        {"clip_widths", c.clip_widths},
        {"head_widths", c.head_widths},
        {"dropout", c.dropout},
        {"freeze_frame_encoder", c.freeze_frame_encoder}}},
      {"attention", attention},
      {"sampler",
       {{"initial_length", c.sampler.initial_length},
        {"stride", c.sampler.stride},
        {"frames_per_clip", c.sampler.frames_per_clip},
        {"confidence_threshold", c.confidence_threshold},
        {"delta_deadzone", c.delta_deadzone}}},
      {"loss", {{"alpha", c.loss.alpha}, {"k", c.loss.k}}},
      {"trainer",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"base_lr", t.base_lr},
        {"lr_decay", t.lr_decay},
        {"lr_decay_every", t.lr_decay_every},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"grad_clip", t.grad_clip},
        {"clips_per_epoch", t.clips_per_epoch},
        {"eval_train", t.eval_train},
        {"target_train_ccc", t.target_train_ccc},
        {"eval_batch_size", c.eval_batch_size}}},
      {"synth",
       {{"num_videos", s.num_videos},
        {"frames_per_video", s.frames_per_video},
        {"channels", s.channels},
        {"height", s.height},
        {"width", s.width},
        {"mood_biases", s.mood_biases},
        {"tau", s.tau},
        {"latent_amplitude", s.latent_amplitude},
        {"observation_noise", s.observation_noise},
        {"pixel_noise", s.pixel_noise},
        {"drift_window", s.drift_window},
        {"drift_scale", s.drift_scale},
        {"square_size", s.square_size},
        {"val_every", s.val_every}}}};
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  const auto problems = schema_violations(doc, config_schema());
  if (!problems.empty()) {
    std::string msg = "config does not match the schema:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  ExperimentConfig c;
  read_opt(doc, "seed", c.seed);
  if (doc.contains("dataset")) {
    const auto& d = doc["dataset"];
    if (d.contains("path")) c.dataset_path = d["path"].get<std::string>();
    read_opt(d, "train_manifest", c.train_manifest);
    read_opt(d, "val_manifest", c.val_manifest);
  }
  if (doc.contains("output") && doc["output"].contains("dir")) {
    c.output_dir = doc["output"]["dir"].get<std::string>();
  }
  if (doc.contains("model")) {
    const auto& m = doc["model"];
    if (m.contains("kind")) c.model_kind = model_kind_from_string(m["kind"].get<std::string>());
    read_opt(m, "frame_widths", c.frame_widths);
    read_opt(m, "clip_widths", c.clip_widths);
    read_opt(m, "head_widths", c.head_widths);
    read_opt(m, "dropout", c.dropout);
    read_opt(m, "freeze_frame_encoder", c.freeze_frame_encoder);
  }
  if (doc.contains("attention") && !doc["attention"].is_null()) {
    const auto& a = doc["attention"];
    AttentionConfig ac;
    for (const auto& k : a["kinds"]) ac.kinds.push_back(attention_kind_from_string(k.get<std::string>()));
    if (a.contains("placement")) ac.placement = placement_from_string(a["placement"].get<std::string>());
    read_opt(a, "spatial_kernel", ac.spatial_kernel);
    read_opt(a, "reduction", ac.reduction);
    read_opt(a, "frame_branch", ac.frame_branch);
    c.attention = ac;
  }
  if (doc.contains("sampler")) {
    const auto& s = doc["sampler"];
    read_opt(s, "initial_length", c.sampler.initial_length);
    read_opt(s, "stride", c.sampler.stride);
    read_opt(s, "frames_per_clip", c.sampler.frames_per_clip);
    read_opt(s, "confidence_threshold", c.confidence_threshold);
    read_opt(s, "delta_deadzone", c.delta_deadzone);
  }
  if (doc.contains("loss")) {
    read_opt(doc["loss"], "alpha", c.loss.alpha);
    read_opt(doc["loss"], "k", c.loss.k);
  }
  if (doc.contains("trainer")) {
    const auto& t = doc["trainer"];
    read_opt(t, "epochs", c.trainer.epochs);
    read_opt(t, "batch_size", c.trainer.batch_size);
    read_opt(t, "base_lr", c.trainer.base_lr);
    read_opt(t, "lr_decay", c.trainer.lr_decay);
    read_opt(t, "lr_decay_every", c.trainer.lr_decay_every);
    read_opt(t, "adam_beta1", c.trainer.adam_beta1);
    read_opt(t, "adam_beta2", c.trainer.adam_beta2);
    read_opt(t, "adam_eps", c.trainer.adam_eps);
    read_opt(t, "grad_clip", c.trainer.grad_clip);
    read_opt(t, "clips_per_epoch", c.trainer.clips_per_epoch);
    read_opt(t, "eval_train", c.trainer.eval_train);
    read_opt(t, "target_train_ccc", c.trainer.target_train_ccc);
    read_opt(t, "eval_batch_size", c.eval_batch_size);
  }
  if (doc.contains("synth")) {
    const auto& s = doc["synth"];
    auto& y = c.synth;
    read_opt(s, "num_videos", y.num_videos);
    read_opt(s, "frames_per_video", y.frames_per_video);
    read_opt(s, "channels", y.channels);
    read_opt(s, "height", y.height);
    read_opt(s, "width", y.width);
    read_opt(s, "mood_biases", y.mood_biases);
    read_opt(s, "tau", y.tau);
    read_opt(s, "latent_amplitude", y.latent_amplitude);
    read_opt(s, "observation_noise", y.observation_noise);
    read_opt(s, "pixel_noise", y.pixel_noise);
    read_opt(s, "drift_window", y.drift_window);
    read_opt(s, "drift_scale", y.drift_scale);
    read_opt(s, "square_size", y.square_size);
    read_opt(s, "val_every", y.val_every);
  }
  // The synthetic benchmark shares the experiment seed and sampler.
  c.synth.seed = c.seed;
  c.synth.sampler = c.sampler;

  // Semantic checks beyond the schema.
  c.sampler.validate();
  c.loss.validate();
  c.train_config().validate();
  if (c.attention) c.attention->validate();
  c.model_config(c.synth.channels, c.synth.height, c.synth.width).validate();
  return c;
}

ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& file,
                                const std::vector<std::pair<std::string, nlohmann::json>>& overrides) {
  nlohmann::json doc = to_json(ExperimentConfig{});
  if (file) {
    const auto user = read_json_file(*file);
    const auto problems = schema_violations(user, config_schema());
    if (!problems.empty()) {
      std::string msg = file->string() + " does not match the config schema:";
      for (const auto& p : problems) msg += "\n  " + p;
      throw ConfigError(msg);
    }
    for (const auto& [key, value] : user.items()) {
      if (value.is_object() && doc[key].is_object()) {
        for (const auto& [k2, v2] : value.items()) doc[key][k2] = v2;
      } else {
        doc[key] = value;
      }
    }
  }
  for (const auto& [pointer, value] : overrides) {
    try {
      doc[nlohmann::json::json_pointer(pointer)] = value;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad override '" + pointer + "': " + e.what());
    }
  }
  return config_from_json(doc);
}

std::filesystem::path resolved_output_dir(const ExperimentConfig& config) {
  if (config.output_dir.is_absolute()) return config.output_dir;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
    return std::filesystem::path(root) / config.output_dir;
  }
  return config.output_dir;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

}  // namespace moodval
