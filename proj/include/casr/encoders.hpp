#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "casr/frontend.hpp"
#include "casr/params.hpp"
#include "casr/tensor.hpp"

namespace casr {

enum class CausalKind { kLstm, kConformer };
enum class NonCausalKind { kBiLstm, kConformer, kIdentity };
enum class EncoderMode { kCausal, kNonCausal };

std::string to_string(CausalKind k);
std::string to_string(NonCausalKind k);
std::string to_string(EncoderMode m);
CausalKind parse_causal_kind(const std::string& s);
NonCausalKind parse_noncausal_kind(const std::string& s);
EncoderMode parse_encoder_mode(const std::string& s);

struct EncoderConfig {
  CausalKind causal_kind = CausalKind::kLstm;
  std::size_t causal_layers = 2;
  NonCausalKind noncausal_kind = NonCausalKind::kBiLstm;
  std::size_t noncausal_layers = 1;
  // LSTM cell count, or the conformer feed-forward width.
  std::size_t hidden_units = 64;
  std::size_t proj_units = 32;
  std::size_t attn_heads = 2;
  std::size_t conv_kernel = 3;
  // Per-layer right context of the non-causal conformer. Causal layers always use 0.
  std::size_t right_context_frames = 0;
  // Apply the stride-2 time reduction after this many causal layers.
  std::optional<std::size_t> time_reduction_after_layer;

  void validate() const;  // throws InputError
  std::size_t time_reduction_factor() const { return time_reduction_after_layer ? 2 : 1; }
  // Right reach of the depthwise conv in non-causal conformer layers: min((k-1)/2, W).
  std::size_t conv_right_reach() const;
  // Total future frames the cascade can see; nullopt when unbounded (bilstm).
  std::optional<std::size_t> lookahead_frames() const;
};

struct EncoderOutput {
  Tensor features;  // [T_e x p]
  double frame_period_ms = 0.0;
  EncoderMode mode = EncoderMode::kCausal;

  std::size_t num_frames() const { return features.dim(0); }
};

// ---- LSTM ---------------------------------------------------------------------------

enum class Direction { kForward, kBackward };

/// LSTM with a recurrent projection: the projected output feeds the next step.
/// Gate column order in the 4h blocks is input, forget, cell, output.
struct LstmParams {
  Tensor w_input;      // [in x 4h]
  Tensor w_recurrent;  // [proj x 4h]
  Tensor bias;         // [4h], forget block initialized to +1
  Tensor w_proj;       // [h x proj]

  static LstmParams create(ParamStore& store, const std::string& name, std::size_t in,
                           std::size_t hidden, std::size_t proj, Rng& rng);
  std::size_t hidden() const { return w_proj.dim(0); }
  std::size_t proj() const { return w_proj.dim(1); }
};

struct LstmState {
  std::vector<double> cell;    // [h]
  std::vector<double> output;  // [proj]
  static LstmState zeros(const LstmParams& p) {
    return {std::vector<double>(p.hidden(), 0.0), std::vector<double>(p.proj(), 0.0)};
  }
};

// Runs the recurrence over precomputed input contributions `gate_inputs` [T x 4h].
// `state`, when given, supplies the initial state and receives the final one;
// no gradient flows into the initial state.
Tensor lstm_recurrence(const Tensor& gate_inputs, const LstmParams& p, LstmState* state = nullptr);

Tensor lstm_layer_forward(const Tensor& x, const LstmParams& p, Direction direction);

struct BiLstmParams {
  LstmParams forward;
  LstmParams backward;
  Linear merge;  // [2*proj -> proj]

  static BiLstmParams create(ParamStore& store, const std::string& name, std::size_t in,
                             std::size_t hidden, std::size_t proj, Rng& rng);
};

Tensor bilstm_layer_forward(const Tensor& x, const BiLstmParams& p);

// ---- attention / conformer -------------------------------------------------------------

struct AttentionParams {
  Linear query, key, value, output;
  std::size_t heads = 1;

  static AttentionParams create(ParamStore& store, const std::string& name, std::size_t dim,
                                std::size_t heads, Rng& rng);
};

// Position t attends to [max(0, t - left), min(T - 1, t + right)]; `left`
// nullopt means unlimited history.
std::vector<bool> attention_mask(std::size_t T, std::optional<std::size_t> left, std::size_t right);

Tensor masked_self_attention(const Tensor& x, const AttentionParams& p,
                             std::optional<std::size_t> left, std::size_t right);

struct ConformerParams {
  LayerNormParams ff1_norm;
  Linear ff1_in, ff1_out;
  LayerNormParams attn_norm;
  AttentionParams attn;
  LayerNormParams conv_norm;
  Linear conv_expand;     // p -> 2p, followed by GLU
  Tensor conv_depthwise;  // [k x p]
  LayerNormParams conv_mid_norm;
  Linear conv_project;    // p -> p
  LayerNormParams ff2_norm;
  Linear ff2_in, ff2_out;
  LayerNormParams final_norm;

  static ConformerParams create(ParamStore& store, const std::string& name, std::size_t dim,
                                std::size_t ff_dim, std::size_t heads, std::size_t kernel, Rng& rng);
};

// Right context `right` on attention; the depthwise conv is causal when
// right == 0 and otherwise reaches min((k-1)/2, right) frames ahead.
Tensor conformer_layer_forward(const Tensor& x, const ConformerParams& p, std::size_t right);

// Pairs adjacent frames (zero-padding an odd tail) and maps 2p -> p.
Tensor time_reduce(const Tensor& x, const Linear& proj);

// ---- encoder stacks --------------------------------------------------------------------

class CausalEncoder {
 public:
  CausalEncoder() = default;
  CausalEncoder(const EncoderConfig& config, std::size_t input_dim, ParamStore& store, Rng& rng);

  std::size_t output_dim() const { return output_dim_; }
  EncoderOutput encode(const FeatureSequence& x) const;

 private:
  EncoderConfig config_;
  std::size_t output_dim_ = 0;
  std::optional<Linear> input_proj_;  // conformer stacks only
  std::vector<LstmParams> lstm_layers_;
  std::vector<ConformerParams> conformer_layers_;
  std::optional<Linear> reduction_;
};

class NonCausalEncoder {
 public:
  NonCausalEncoder() = default;
  NonCausalEncoder(const EncoderConfig& config, std::size_t input_dim, ParamStore& store, Rng& rng);

  EncoderOutput encode(const EncoderOutput& causal) const;
  bool is_identity() const { return config_.noncausal_kind == NonCausalKind::kIdentity; }

 private:
  EncoderConfig config_;
  std::vector<BiLstmParams> bilstm_layers_;
  std::vector<ConformerParams> conformer_layers_;
};

// x is the stacked/subsampled encoder input.
EncoderOutput causal_encode(const FeatureSequence& x, const CausalEncoder& encoder);
// Throws ContractError unless `e_s` came from the causal encoder.
EncoderOutput cascade_encode(const EncoderOutput& e_s, const NonCausalEncoder& encoder);

}  // namespace casr
