#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "casr/encoders.hpp"
#include "casr/frontend.hpp"
#include "casr/params.hpp"
#include "casr/rng.hpp"
#include "casr/tensor.hpp"

namespace casr {

struct DecoderConfig {
  std::size_t vocab_size = 8;  // labels only; the model outputs vocab_size + 1 with blank at 0
  std::size_t embed_dim = 16;
  std::size_t pred_hidden = 32;
  std::size_t pred_proj = 16;
  std::size_t joint_units = 32;

  void validate() const;
};

/// Label-only LSTM over [start, y_1, ..., y_U]; the start symbol shares id 0 with blank.
class PredictionNet {
 public:
  struct State {
    LstmState lstm;
    std::vector<double> output;  // [q], the row the joint consumes
  };

  PredictionNet() = default;
  PredictionNet(const DecoderConfig& config, ParamStore& store, Rng& rng);

  // Row u is the state after consuming y_1..y_u; row 0 is the start state.
  Tensor forward(const TokenSequence& y) const;

  State start() const;
  State step(const State& state, Token token) const;
  std::size_t output_dim() const { return lstm_.proj(); }

 private:
  std::size_t vocab_size_ = 0;
  Tensor embedding_;  // [(V+1) x E]
  LstmParams lstm_;
};

/// logits(t, u) = W_out tanh(W_e e_t + W_p pred_u + b) + b_out.
class JointNet {
 public:
  JointNet() = default;
  JointNet(std::size_t enc_dim, std::size_t pred_dim, const DecoderConfig& config, ParamStore& store,
           Rng& rng);

  // e: [T x p], pred: [(U+1) x q] -> [T x (U+1) x (V+1)].
  Tensor forward(const Tensor& e, const Tensor& pred) const;

  // Untaped helpers for decoding: project once, then combine per (t, u).
  Tensor project_encoder(const Tensor& e) const;                    // [T x J], bias included
  std::vector<double> project_prediction(std::span<const double> pred) const;  // [J]
  std::vector<double> logits(std::span<const double> enc_row, std::span<const double> pred_row) const;

  std::size_t output_dim() const { return out_.out_dim(); }

 private:
  Linear enc_;       // p -> J, carries the shared bias b
  Tensor pred_w_;    // [q x J]
  Linear out_;       // J -> V+1
};

struct FrontendConfig {
  std::size_t input_dim = 8;
  std::size_t stack = 4;
  std::size_t stride = 3;
};

struct ModelConfig {
  FrontendConfig frontend;
  EncoderConfig encoder;
  DecoderConfig decoder;

  void validate() const;
};

/// Causal encoder + cascaded non-causal encoder + one shared transducer decoder.
class CascadedModel {
 public:
  CascadedModel(const ModelConfig& config, std::uint64_t seed);
  CascadedModel(const CascadedModel&) = delete;
  CascadedModel& operator=(const CascadedModel&) = delete;
  CascadedModel(CascadedModel&&) = default;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  FeatureSequence prepare(const FeatureSequence& raw) const;  // stack + subsample
  EncoderOutput encode(const FeatureSequence& raw, EncoderMode mode) const;

  const CausalEncoder& causal_encoder() const { return causal_; }
  const NonCausalEncoder& cascade_encoder() const { return cascade_; }
  const PredictionNet& prediction() const { return prediction_; }
  const JointNet& joint() const { return joint_; }

  // Input frames per encoder frame, and the last raw input frame encoder
  // frame `t` can depend on (clamped to `num_input_frames` - 1 when given).
  std::size_t input_frames_per_encoder_frame() const;
  std::size_t last_input_frame(std::size_t encoder_frame) const;

 private:
  ModelConfig config_;
  ParamStore params_;
  CausalEncoder causal_;
  NonCausalEncoder cascade_;
  PredictionNet prediction_;
  JointNet joint_;
};

// ---- lattice loss --------------------------------------------------------------------

/// Log forward/backward variables over the T x (U+1) grid.
struct Lattice {
  std::size_t T = 0;
  std::size_t U = 0;
  std::vector<double> alpha;  // [T x (U+1)]
  std::vector<double> beta;   // [T x (U+1)], includes the emission at (t, u)
  double log_likelihood = 0.0;

  double a(std::size_t t, std::size_t u) const { return alpha[t * (U + 1) + u]; }
  double b(std::size_t t, std::size_t u) const { return beta[t * (U + 1) + u]; }
};

struct LossResult {
  Tensor loss;  // scalar, -log P(y | e)
  Lattice lattice;
};

// logits: [T x (U+1) x (V+1)], blank at index 0 of the last axis.
LossResult rnnt_loss(const Tensor& logits, const TokenSequence& y);

// Same forward value; the backward pass scales label-arc gradients by (1 + lambda_fe).
LossResult fastemit_rnnt_loss(const Tensor& logits, const TokenSequence& y, double lambda_fe);

// Explicit sum over every alignment. Refuses instances with T + U > 12.
double brute_force_loss(const Tensor& logits, const TokenSequence& y, std::size_t* path_count = nullptr);

// Causal with probability lambda.
EncoderMode sample_path(double lambda, Rng& rng);

enum class LossStrategy { kSampled, kWeighted };
std::string to_string(LossStrategy s);
LossStrategy parse_loss_strategy(const std::string& s);

// Transducer loss of one path; FastEmit (beta) is applied only to the causal path.
Tensor path_loss(const FeatureSequence& raw, const TokenSequence& y, const CascadedModel& model,
                 EncoderMode mode, double beta);

struct CombinedLoss {
  Tensor loss;
  std::optional<EncoderMode> sampled_mode;  // set for the sampled strategy
};

// weighted: lambda * L_s(beta) + (1 - lambda) * L_a.
// sampled:  L_s(beta) with probability lambda, else L_a.
CombinedLoss combined_loss(const FeatureSequence& raw, const TokenSequence& y,
                           const CascadedModel& model, double lambda, double beta, Rng& rng,
                           LossStrategy strategy);

}  // namespace casr
