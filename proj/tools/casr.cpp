// casr: data generation, training, evaluation, decoding and latency reports.
//
// stdout carries exactly one JSON document per command; diagnostics go to stderr.
// Exit codes: 2 bad config/arguments, 3 I/O failure, 4 divergence, 5 checkpoint mismatch.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "casr/config.hpp"
#include "casr/decoder.hpp"
#include "casr/errors.hpp"
#include "casr/metrics.hpp"
#include "casr/trainer.hpp"
#include "casr/transducer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace casr;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kIo = 3, kDivergence = 4, kMismatch = 5 };

// Checkpoint/config disagreement; reported with exit code 5.
struct Mismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print(const json& j) { std::cout << j.dump() << "\n"; }

struct LoadedModel {
  RunConfig config;
  CascadedModel model;
  std::uint64_t step;
};

LoadedModel load_model(const fs::path& checkpoint_path, const std::optional<fs::path>& config_path) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  RunConfig stored;
  try {
    stored = parse_run_config(ckpt.config_json);
  } catch (const InputError& e) {
    throw Mismatch(std::string("checkpoint carries an unusable config: ") + e.what());
  }
  if (config_path) {
    const RunConfig given = load_run_config(*config_path);
    if (to_json(given)["model"] != to_json(stored)["model"]) {
      throw Mismatch("model section of " + config_path->string() + " differs from the checkpoint");
    }
  }
  CascadedModel model(stored.model, stored.train.seed);
  try {
    load_parameters(model.params(), ckpt);
  } catch (const ContractError& e) {
    throw Mismatch(e.what());
  }
  return {stored, std::move(model), ckpt.step};
}

// ---- gen-data ------------------------------------------------------------------------

int cmd_gen_data(const fs::path& config_path, const fs::path& out_dir, const std::string& split_name,
                 std::optional<std::size_t> count) {
  const RunConfig config = load_run_config(config_path);
  const Split split = parse_split(split_name);
  const auto utts = generate_split(config, split, count);
  write_dataset(out_dir, utts);
  std::size_t tokens = 0, frames = 0;
  for (const auto& u : utts) {
    tokens += u.tokens.size();
    frames += u.features.num_frames;
  }
  print({{"split", to_string(split)},
         {"utterances", utts.size()},
         {"tokens", tokens},
         {"frames", frames},
         {"manifest", (out_dir / "manifest.jsonl").string()}});
  return kOk;
}

// ---- train ---------------------------------------------------------------------------

std::vector<Utterance> load_training_data(const fs::path& manifest) {
  LoadedDataset data = load_dataset(manifest);
  for (const auto& e : data.errors) std::cerr << "warning: skipping record: " << e << "\n";
  if (data.skipped * 10 > data.total) {
    throw IoError(manifest.string() + ": more than 10% of the records are unreadable");
  }
  if (data.utterances.empty()) throw IoError(manifest.string() + ": no training utterances");
  return std::move(data.utterances);
}

int cmd_train(const fs::path& config_path, const fs::path& data, const fs::path& out,
              const std::optional<fs::path>& resume) {
  const RunConfig config = load_run_config(config_path);
  const std::string config_text = to_json(config).dump();
  const auto utts = load_training_data(data);

  CascadedModel model(config.model, config.train.seed);
  Trainer trainer(model, config.train);
  trainer.set_threads(threads_from_env());
  if (resume) {
    const Checkpoint ckpt = load_checkpoint(*resume);
    RunConfig stored;
    try {
      stored = parse_run_config(ckpt.config_json);
    } catch (const InputError& e) {
      throw Mismatch(std::string("checkpoint carries an unusable config: ") + e.what());
    }
    if (to_json(stored)["model"] != to_json(config)["model"]) {
      throw Mismatch("model section of the config differs from the resumed checkpoint");
    }
    try {
      trainer.restore(ckpt);
    } catch (const ContractError& e) {
      throw Mismatch(e.what());
    }
  }

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  std::ofstream log(out / "train_log.jsonl", std::ios::trunc);
  if (!log) throw IoError("cannot write " + (out / "train_log.jsonl").string());
  log << json{{"config", to_json(config)}, {"resumed_from_step", trainer.step_count()}}.dump() << "\n";

  auto save = [&](const fs::path& path) { save_checkpoint(path, trainer.checkpoint(config_text)); };
  StepResult last;
  while (trainer.step_count() < config.train.steps) {
    try {
      last = trainer.step(utts);
    } catch (const NumericError&) {
      log.flush();
      throw;
    }
    log << json{{"step", last.step},
                {"loss", last.loss},
                {"mode", {{"causal", last.causal}, {"noncausal", last.noncausal}, {"weighted", last.weighted}}},
                {"grad_norm", last.grad_norm}}
               .dump()
        << "\n";
    const auto every = config.train.checkpoint_every;
    if (every > 0 && last.step % every == 0) {
      save(out / ("checkpoint-" + std::to_string(last.step) + ".casr"));
    }
  }
  log.flush();
  if (!log) throw IoError("failed writing the training log");
  const fs::path final_path = out / "final.casr";
  save(final_path);
  print({{"steps", trainer.step_count()},
         {"final_loss", last.step > 0 ? json(last.loss) : json(nullptr)},
         {"checkpoint", final_path.string()},
         {"log", (out / "train_log.jsonl").string()}});
  return kOk;
}

// ---- eval / latency / decode ---------------------------------------------------------------

int cmd_eval(const fs::path& checkpoint, const fs::path& data, const std::optional<fs::path>& config_path,
             const std::optional<std::string>& mode, std::optional<std::size_t> beam, bool streaming) {
  const LoadedModel m = load_model(checkpoint, config_path);
  EvalOptions options;
  options.mode = mode ? parse_encoder_mode(*mode) : m.config.decode.mode;
  options.beam = beam ? *beam : m.config.decode.beam;
  options.max_symbols_per_frame = m.config.decode.max_symbols_per_frame;
  if (streaming) {
    options.mode = EncoderMode::kCausal;
    options.beam = 0;
    options.streaming = true;
  }
  const CorpusReport report = corpus_eval(data, m.model, options);
  json j = report_json(report);
  j["checkpoint_step"] = m.step;
  print(j);
  return kOk;
}

int cmd_decode(const fs::path& checkpoint, const fs::path& data, const std::optional<std::string>& mode,
               std::optional<std::size_t> beam) {
  const LoadedModel m = load_model(checkpoint, std::nullopt);
  const EncoderMode md = mode ? parse_encoder_mode(*mode) : m.config.decode.mode;
  const std::size_t b = beam ? *beam : m.config.decode.beam;
  LoadedDataset ds = load_dataset(data);
  for (const auto& e : ds.errors) std::cerr << "warning: skipping record: " << e << "\n";
  json out = json::array();
  for (const auto& u : ds.utterances) {
    const DecodeResult r = decode_dual(u.features, m.model, md, b, m.config.decode.max_symbols_per_frame);
    out.push_back({{"id", u.id}, {"tokens", r.tokens}, {"emit_frames", r.emit_frames}, {"score", r.score}});
  }
  print({{"mode", to_string(md)}, {"beam", b}, {"results", out}});
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded causal/non-causal transducer toolkit"};
  app.require_subcommand(1);

  std::string config, out_dir, split = "train", data, out, checkpoint, resume, mode;
  std::size_t num_utterances = 0, beam = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset split");
  gen->add_option("--config", config, "Run config JSON")->required();
  gen->add_option("--out-dir", out_dir, "Output directory")->required();
  gen->add_option("--split", split, "train|eval|longform")->check(CLI::IsMember({"train", "eval", "longform"}));
  auto* num_opt = gen->add_option("--num-utterances", num_utterances, "Override the split size");

  auto* train = app.add_subcommand("train", "Train a cascaded model");
  train->add_option("--config", config, "Run config JSON")->required();
  train->add_option("--data", data, "Training manifest")->required();
  train->add_option("--out", out, "Output directory for checkpoints and the log")->required();
  auto* resume_opt = train->add_option("--resume", resume, "Checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "Corpus WER and latency in one mode");
  auto* latency = app.add_subcommand("latency", "Streaming emission latency and causal WER");
  auto* decode = app.add_subcommand("decode", "Print hypotheses for every utterance");
  CLI::Option* eval_config = nullptr;
  CLI::Option* mode_opts[2]{};
  CLI::Option* beam_opts[2]{};
  for (auto* sub : {eval, latency, decode}) {
    sub->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    sub->add_option("--data", data, "Manifest to evaluate")->required();
  }
  eval_config = eval->add_option("--config", config, "Reject the checkpoint unless its model matches");
  latency->add_option("--config", config, "Reject the checkpoint unless its model matches");
  for (int i = 0; i < 2; ++i) {
    auto* sub = i == 0 ? eval : decode;
    mode_opts[i] = sub->add_option("--mode", mode, "causal|noncausal")->check(CLI::IsMember({"causal", "noncausal"}));
    beam_opts[i] = sub->add_option("--beam", beam, "Beam width, 0 = greedy");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  auto opt_path = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };
  try {
    if (*gen) {
      return cmd_gen_data(config, out_dir, split,
                          num_opt->count() ? std::optional<std::size_t>(num_utterances) : std::nullopt);
    }
    if (*train) return cmd_train(config, data, out, resume_opt->count() ? opt_path(resume) : std::nullopt);
    const int which = *eval ? 0 : 1;
    const auto m = mode_opts[which]->count() ? std::optional<std::string>(mode) : std::nullopt;
    const auto b = beam_opts[which]->count() ? std::optional<std::size_t>(beam) : std::nullopt;
    if (*eval) return cmd_eval(checkpoint, data, eval_config->count() ? opt_path(config) : std::nullopt, m, b, false);
    if (*latency) return cmd_eval(checkpoint, data, opt_path(config), std::nullopt, std::nullopt, true);
    if (*decode) return cmd_decode(checkpoint, data, m, b);
  } catch (const Mismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMismatch;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kConfig;
}
