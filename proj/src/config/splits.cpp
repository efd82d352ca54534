#include "casr/config.hpp"
#include "casr/errors.hpp"

namespace casr {

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kEval: return "eval";
    case Split::kLongform: return "longform";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "eval") return Split::kEval;
  if (s == "longform") return Split::kLongform;
  throw InputError("unknown split '" + s + "' (expected train|eval|longform)");
}

std::vector<Utterance> generate_split(const RunConfig& config, Split split,
                                      std::optional<std::size_t> count) {
  const DataConfig& d = config.data;
  d.validate();
  std::size_t n = 0;
  switch (split) {
    case Split::kTrain: n = d.train_utterances; break;
    case Split::kEval: n = d.eval_utterances; break;
    case Split::kLongform: n = d.longform_utterances; break;
  }
  if (count) n = *count;
  Rng rng = Rng::stream(config.task.seed, "split/" + to_string(split));
  std::vector<Utterance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Utterance u;
    if (split == Split::kLongform) {
      u = synth_longform(config.task, d.longform_segments, d.longform_tokens_each(), d.longform_silence_frames, rng);
    } else {
      const std::size_t len = d.min_tokens + static_cast<std::size_t>(rng.below(d.max_tokens - d.min_tokens + 1));
      u = synth_utterance(config.task, len, rng);
    }
    for (double& v : u.features.data) v = static_cast<double>(static_cast<float>(v));
    char id[32];
    std::snprintf(id, sizeof id, "%s-%05zu", to_string(split).c_str(), i);
    u.id = id;
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace casr
