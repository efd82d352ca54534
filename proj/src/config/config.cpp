#include "casr/config.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

#include "casr/errors.hpp"

namespace casr {

using nlohmann::json;

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seeds are read through the size_t overload");

void DataConfig::validate() const {
  if (min_tokens > max_tokens) throw InputError("data: min_tokens exceeds max_tokens");
  if (longform_segments == 0) throw InputError("data: longform_segments must be >= 1");
}

void RunConfig::validate() const {
  task.validate();
  data.validate();
  model.validate();
  train.validate();
  if (model.frontend.input_dim != task.feature_dim) {
    throw InputError("config: model.frontend.input_dim " + std::to_string(model.frontend.input_dim) +
                     " differs from task.feature_dim " + std::to_string(task.feature_dim));
  }
  if (model.decoder.vocab_size != task.vocab_size) {
    throw InputError("config: model.decoder.vocab_size " + std::to_string(model.decoder.vocab_size) +
                     " differs from task.vocab_size " + std::to_string(task.vocab_size));
  }
  if (decode.max_symbols_per_frame == 0) throw InputError("decode: max_symbols_per_frame must be >= 1");
}

namespace {

/// Reads the keys of one JSON object and rejects whatever was not read.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError("config: '" + path_ + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void get(const std::string& key, std::size_t& out) {
    if (const json* v = child(key)) {
      if (!v->is_number_unsigned()) throw type_error(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const std::string& key, double& out) {
    if (const json* v = child(key)) {
      if (!v->is_number()) throw type_error(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = child(key)) {
      if (!v->is_string()) throw type_error(key, "a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::optional<std::size_t>& out) {
    if (const json* v = child(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      if (!v->is_number_unsigned()) throw type_error(key, "a non-negative integer or null");
      out = v->get<std::size_t>();
    }
  }
  template <class Enum, class Parse>
  void get_enum(const std::string& key, Enum& out, Parse parse) {
    std::string s;
    if (!has(key)) {
      seen_.insert(key);
      return;
    }
    get(key, s);
    out = parse(s);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw InputError("config: unknown key '" + path_ + "." + key + "'");
    }
  }

 private:
  InputError type_error(const std::string& key, const char* expected) const {
    return InputError("config: '" + path_ + "." + key + "' must be " + expected);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_task(Section s, SynthTaskSpec& t) {
  s.get("vocab_size", t.vocab_size);
  s.get("feature_dim", t.feature_dim);
  s.get("frames_per_token", t.frames_per_token);
  s.get("duration_jitter", t.duration_jitter);
  s.get("noise_sigma", t.noise_sigma);
  s.get("seed", t.seed);
  s.finish();
}

void read_data(Section s, DataConfig& d) {
  s.get("train_utterances", d.train_utterances);
  s.get("eval_utterances", d.eval_utterances);
  s.get("longform_utterances", d.longform_utterances);
  s.get("min_tokens", d.min_tokens);
  s.get("max_tokens", d.max_tokens);
  s.get("longform_segments", d.longform_segments);
  s.get("longform_silence_frames", d.longform_silence_frames);
  s.finish();
}

void read_encoder(Section s, EncoderConfig& e) {
  s.get_enum("causal_kind", e.causal_kind, parse_causal_kind);
  s.get("causal_layers", e.causal_layers);
  s.get_enum("noncausal_kind", e.noncausal_kind, parse_noncausal_kind);
  s.get("noncausal_layers", e.noncausal_layers);
  s.get("hidden_units", e.hidden_units);
  s.get("proj_units", e.proj_units);
  s.get("attn_heads", e.attn_heads);
  s.get("conv_kernel", e.conv_kernel);
  s.get("right_context_frames", e.right_context_frames);
  s.get("time_reduction_after_layer", e.time_reduction_after_layer);
  s.finish();
}

void read_model(Section s, ModelConfig& m, const SynthTaskSpec& task) {
  m.frontend.input_dim = task.feature_dim;
  m.decoder.vocab_size = task.vocab_size;
  if (const json* f = s.child("frontend")) {
    Section fs(*f, "model.frontend");
    fs.get("input_dim", m.frontend.input_dim);
    fs.get("stack", m.frontend.stack);
    fs.get("stride", m.frontend.stride);
    fs.finish();
  }
  if (const json* e = s.child("encoder")) read_encoder(Section(*e, "model.encoder"), m.encoder);
  if (const json* d = s.child("decoder")) {
    Section ds(*d, "model.decoder");
    ds.get("vocab_size", m.decoder.vocab_size);
    ds.get("embed_dim", m.decoder.embed_dim);
    ds.get("pred_hidden", m.decoder.pred_hidden);
    ds.get("pred_proj", m.decoder.pred_proj);
    ds.get("joint_units", m.decoder.joint_units);
    ds.finish();
  }
  s.finish();
}

void read_train(Section s, TrainConfig& t) {
  s.get("lambda", t.lambda);
  s.get("beta", t.beta);
  s.get_enum("strategy", t.strategy, parse_loss_strategy);
  s.get("learning_rate", t.learning_rate);
  s.get("adam_beta1", t.adam_beta1);
  s.get("adam_beta2", t.adam_beta2);
  s.get("adam_eps", t.adam_eps);
  s.get("clip_norm", t.clip_norm);
  s.get("batch_size", t.batch_size);
  s.get("steps", t.steps);
  s.get("seed", t.seed);
  s.get("checkpoint_every", t.checkpoint_every);
  s.get("divergence_threshold", t.divergence_threshold);
  s.finish();
}

void read_decode(Section s, DecodeConfig& d) {
  s.get_enum("mode", d.mode, parse_encoder_mode);
  s.get("beam", d.beam);
  s.get("max_symbols_per_frame", d.max_symbols_per_frame);
  s.finish();
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "config");
  if (const json* t = root.child("task")) read_task(Section(*t, "task"), c.task);
  if (const json* d = root.child("data")) read_data(Section(*d, "data"), c.data);
  if (const json* m = root.child("model")) {
    read_model(Section(*m, "model"), c.model, c.task);
  } else {
    c.model.frontend.input_dim = c.task.feature_dim;
    c.model.decoder.vocab_size = c.task.vocab_size;
  }
  if (const json* t = root.child("train")) read_train(Section(*t, "train"), c.train);
  if (const json* d = root.child("decode")) read_decode(Section(*d, "decode"), c.decode);
  root.finish();
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  const auto& e = c.model.encoder;
  json reduction = nullptr;
  if (e.time_reduction_after_layer) reduction = *e.time_reduction_after_layer;
  return {
      {"task",
       {{"vocab_size", c.task.vocab_size},
        {"feature_dim", c.task.feature_dim},
        {"frames_per_token", c.task.frames_per_token},
        {"duration_jitter", c.task.duration_jitter},
        {"noise_sigma", c.task.noise_sigma},
        {"seed", c.task.seed}}},
      {"data",
       {{"train_utterances", c.data.train_utterances},
        {"eval_utterances", c.data.eval_utterances},
        {"longform_utterances", c.data.longform_utterances},
        {"min_tokens", c.data.min_tokens},
        {"max_tokens", c.data.max_tokens},
        {"longform_segments", c.data.longform_segments},
        {"longform_silence_frames", c.data.longform_silence_frames}}},
      {"model",
       {{"frontend",
         {{"input_dim", c.model.frontend.input_dim},
          {"stack", c.model.frontend.stack},
          {"stride", c.model.frontend.stride}}},
        {"encoder",
         {{"causal_kind", to_string(e.causal_kind)},
          {"causal_layers", e.causal_layers},
          {"noncausal_kind", to_string(e.noncausal_kind)},
          {"noncausal_layers", e.noncausal_layers},
          {"hidden_units", e.hidden_units},
          {"proj_units", e.proj_units},
          {"attn_heads", e.attn_heads},
          {"conv_kernel", e.conv_kernel},
          {"right_context_frames", e.right_context_frames},
          {"time_reduction_after_layer", reduction}}},
        {"decoder",
         {{"vocab_size", c.model.decoder.vocab_size},
          {"embed_dim", c.model.decoder.embed_dim},
          {"pred_hidden", c.model.decoder.pred_hidden},
          {"pred_proj", c.model.decoder.pred_proj},
          {"joint_units", c.model.decoder.joint_units}}}}},
      {"train",
       {{"lambda", c.train.lambda},
        {"beta", c.train.beta},
        {"strategy", to_string(c.train.strategy)},
        {"learning_rate", c.train.learning_rate},
        {"adam_beta1", c.train.adam_beta1},
        {"adam_beta2", c.train.adam_beta2},
        {"adam_eps", c.train.adam_eps},
        {"clip_norm", c.train.clip_norm},
        {"batch_size", c.train.batch_size},
        {"steps", c.train.steps},
        {"seed", c.train.seed},
        {"checkpoint_every", c.train.checkpoint_every},
        {"divergence_threshold", c.train.divergence_threshold}}},
      {"decode",
       {{"mode", to_string(c.decode.mode)},
        {"beam", c.decode.beam},
        {"max_symbols_per_frame", c.decode.max_symbols_per_frame}}},
  };
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config: invalid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace casr
