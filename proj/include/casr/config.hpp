#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casr/decoder.hpp"
#include "casr/encoders.hpp"
#include "casr/frontend.hpp"
#include "casr/trainer.hpp"
#include "casr/transducer.hpp"

namespace casr {

struct DataConfig {
  std::size_t train_utterances = 600;
  std::size_t eval_utterances = 300;
  std::size_t longform_utterances = 10;
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 16;
  // Each long-form utterance concatenates this many segments of
  // longform_tokens_each() tokens, the rounded-up mean eval length.
  std::size_t longform_segments = 10;
  std::size_t longform_silence_frames = 6;

  std::size_t longform_tokens_each() const { return (min_tokens + max_tokens + 1) / 2; }

  void validate() const;
};

struct DecodeConfig {
  EncoderMode mode = EncoderMode::kCausal;
  std::size_t beam = 0;  // 0 = greedy
  std::size_t max_symbols_per_frame = kDefaultMaxSymbolsPerFrame;
};

/// Everything a run needs, as one JSON document:
/// {task, data, model: {frontend, encoder, decoder}, train, decode}.
struct RunConfig {
  SynthTaskSpec task;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;

  void validate() const;  // throws InputError
};

// Strict: unknown keys and wrong types throw InputError. Missing keys take
// defaults; model.frontend.input_dim and model.decoder.vocab_size default to
// the task's feature_dim and vocab_size.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);  // every field, defaults included

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

enum class Split { kTrain, kEval, kLongform };
std::string to_string(Split s);
Split parse_split(const std::string& s);

// Utterances of one split, a pure function of (task, data, split, count).
// Values are rounded to float so they match what the feature files store.
// `count` defaults to the split's size in `data`.
std::vector<Utterance> generate_split(const RunConfig& config, Split split,
                                      std::optional<std::size_t> count = std::nullopt);

}  // namespace casr
