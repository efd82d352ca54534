#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "casr/frontend.hpp"
#include "casr/params.hpp"
#include "casr/rng.hpp"
#include "casr/transducer.hpp"

namespace casr {

struct TrainConfig {
  double lambda = 0.5;
  double beta = 0.0;  // FastEmit, causal path only
  LossStrategy strategy = LossStrategy::kSampled;
  double learning_rate = 3e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  std::size_t batch_size = 8;
  std::size_t steps = 2000;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;  // 0 = only at the end
  double divergence_threshold = 1e6;

  void validate() const;  // throws InputError
};

// One gradient buffer per parameter, in ParamStore order.
using GradientSet = std::vector<std::vector<double>>;

struct AdamMoments {
  GradientSet m;
  GradientSet v;

  static AdamMoments zeros_like(const ParamStore& params);
};

// Bias-corrected Adam update at step t >= 1. Checks every gradient before
// touching anything; a NaN aborts the step with a NumericError naming the parameter.
void adam_step(ParamStore& params, const GradientSet& grads, AdamMoments& moments,
               const TrainConfig& config, std::uint64_t t);

double global_norm(const GradientSet& grads);
// Scales `grads` in place when their global norm exceeds clip_norm; returns the pre-clip norm.
double clip_global_norm(GradientSet& grads, double clip_norm);

/// A batch entry: the first `valid_frames` rows of `features` are real, the
/// rest is padding that never reaches the encoders or the loss.
struct BatchEntry {
  const FeatureSequence* features = nullptr;
  std::size_t valid_frames = 0;
  const TokenSequence* tokens = nullptr;

  static BatchEntry of(const Utterance& u) { return {&u.features, u.features.num_frames, &u.tokens}; }
};

struct BatchGradients {
  GradientSet grads;  // mean over the batch
  double loss = 0.0;  // mean over the batch
  std::size_t causal = 0;
  std::size_t noncausal = 0;
  std::size_t weighted = 0;
};

struct StepResult {
  std::uint64_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  std::size_t causal = 0;
  std::size_t noncausal = 0;
  std::size_t weighted = 0;
};

// ---- checkpoints ------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t step = 0;
  std::string config_json;
  std::vector<NamedTensor> tensors;  // parameters, then "<name>/m", then "<name>/v"
  Rng::State rng{};
};

std::vector<char> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::vector<char> bytes);  // throws IoError with the byte offset
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameter values (no moments) from a checkpoint into `params`.
// Throws ContractError on a missing name or a shape mismatch.
void load_parameters(ParamStore& params, const Checkpoint& checkpoint);

// ---- training loop ------------------------------------------------------------------------

/// Per-utterance path sampling, mean-reduced gradients, clipped Adam.
///
/// Utterances of a batch may be differentiated on `threads` independent
/// tapes; gradients are reduced in batch order, so results do not depend on
/// the thread count.
class Trainer {
 public:
  Trainer(CascadedModel& model, const TrainConfig& config);

  // Forward/backward only. Advances the sampling stream.
  BatchGradients compute_gradients(std::span<const BatchEntry> batch);
  // compute_gradients + divergence guard + clip + Adam.
  StepResult train_step(std::span<const BatchEntry> batch);
  // Draws the batch for the next step from the data stream and trains on it.
  StepResult step(const std::vector<Utterance>& data);

  // Indices of the batch for step `step` (1-based); a pure function of (seed, step).
  std::vector<std::size_t> select_batch(std::size_t data_size, std::uint64_t step) const;

  std::uint64_t step_count() const { return step_; }
  void set_threads(std::size_t threads) { threads_ = threads == 0 ? 1 : threads; }
  const TrainConfig& config() const { return config_; }

  Checkpoint checkpoint(const std::string& config_json) const;
  // Restores parameters, moments, step and sampling stream. Throws ContractError on mismatch.
  void restore(const Checkpoint& checkpoint);

 private:
  CascadedModel& model_;
  TrainConfig config_;
  AdamMoments moments_;
  Rng sampling_;
  std::uint64_t step_ = 0;
  std::size_t threads_ = 1;
};

// CASR_THREADS, defaulting to 1.
std::size_t threads_from_env();

}  // namespace casr
