#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "casr/rng.hpp"
#include "casr/tensor.hpp"

namespace casr {

using Token = std::int32_t;
inline constexpr Token kBlank = 0;

// Label ids in [1, V]; blank (0) never appears.
using TokenSequence = std::vector<Token>;

// Throws InputError if any id falls outside [1, vocab_size].
void validate_tokens(const TokenSequence& tokens, std::size_t vocab_size);

inline constexpr double kBaseFramePeriodMs = 10.0;

/// T x d frames, row-major.
struct FeatureSequence {
  std::size_t num_frames = 0;
  std::size_t dim = 0;
  std::vector<double> data;
  double frame_period_ms = kBaseFramePeriodMs;

  FeatureSequence() = default;
  FeatureSequence(std::size_t t, std::size_t d, double period_ms)
      : num_frames(t), dim(d), data(t * d, 0.0), frame_period_ms(period_ms) {}

  double* frame(std::size_t t) { return data.data() + t * dim; }
  const double* frame(std::size_t t) const { return data.data() + t * dim; }
  Tensor to_tensor() const { return Tensor({num_frames, dim}, data); }
  // First `t` frames.
  FeatureSequence prefix(std::size_t t) const;

  bool operator==(const FeatureSequence&) const = default;
};

struct SynthTaskSpec {
  std::size_t vocab_size = 8;
  std::size_t feature_dim = 8;
  std::size_t frames_per_token = 6;
  std::size_t duration_jitter = 1;
  double noise_sigma = 1.0;
  std::uint64_t seed = 1;

  void validate() const;  // throws InputError
};

struct Utterance {
  std::string id;
  FeatureSequence features;
  TokenSequence tokens;
  // Index of the last input frame of each token.
  std::vector<std::size_t> end_frames;
};

// Mean vector of token `v`, a pure function of (spec.seed, v).
std::vector<double> token_mean(const SynthTaskSpec& spec, Token v);

Utterance synth_utterance(const SynthTaskSpec& spec, std::size_t length_tokens, Rng& rng);

// Concatenates `n_utterances` utterances separated by `silence_frames` zero frames.
Utterance synth_longform(const SynthTaskSpec& spec, std::size_t n_utterances,
                         std::size_t tokens_each, std::size_t silence_frames, Rng& rng);

// Output frame t' holds input frames [t'*stride, t'*stride + stack - 1],
// zero-padded past the end. T' = ceil(T / stride).
FeatureSequence stack_and_subsample(const FeatureSequence& x, std::size_t stack, std::size_t stride);

// ---- on-disk dataset ------------------------------------------------------------

// Little-endian: "FEAT", u32 version=1, u32 T, u32 d, f64 frame_period_ms, T*d f32.
void write_feature_file(const std::filesystem::path& path, const FeatureSequence& features);
FeatureSequence read_feature_file(const std::filesystem::path& path);

struct ManifestRecord {
  std::string id;
  std::string feature_file;  // relative to the manifest's directory
  TokenSequence transcript;
  std::vector<std::size_t> end_frames;
};

std::string manifest_line(const ManifestRecord& record);
ManifestRecord parse_manifest_line(const std::string& line);  // throws InputError

struct Manifest {
  std::filesystem::path path;
  std::vector<ManifestRecord> records;
  std::size_t total_lines = 0;
  std::vector<std::string> errors;  // one per unparseable line
};

// Tolerant reader: malformed lines are collected in `errors`, not thrown.
Manifest read_manifest(const std::filesystem::path& path);

// Loads each record's features; records that fail are skipped and reported.
struct LoadedDataset {
  std::vector<Utterance> utterances;
  std::size_t skipped = 0;
  std::size_t total = 0;
  std::vector<std::string> errors;
};
LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

// Writes utterances as `<out_dir>/<prefix>-NNNNN.feat` plus `<out_dir>/manifest.jsonl`.
void write_dataset(const std::filesystem::path& out_dir, const std::vector<Utterance>& utterances);

}  // namespace casr
