#include "casr/encoders.hpp"

#include "casr/errors.hpp"

namespace casr {

std::string to_string(CausalKind k) { return k == CausalKind::kLstm ? "lstm" : "conformer"; }

std::string to_string(NonCausalKind k) {
  switch (k) {
    case NonCausalKind::kBiLstm: return "bilstm";
    case NonCausalKind::kConformer: return "conformer";
    case NonCausalKind::kIdentity: return "identity";
  }
  return "identity";
}

std::string to_string(EncoderMode m) { return m == EncoderMode::kCausal ? "causal" : "noncausal"; }

CausalKind parse_causal_kind(const std::string& s) {
  if (s == "lstm") return CausalKind::kLstm;
  if (s == "conformer") return CausalKind::kConformer;
  throw InputError("unknown causal encoder kind '" + s + "'");
}

NonCausalKind parse_noncausal_kind(const std::string& s) {
  if (s == "bilstm") return NonCausalKind::kBiLstm;
  if (s == "conformer") return NonCausalKind::kConformer;
  if (s == "identity") return NonCausalKind::kIdentity;
  throw InputError("unknown non-causal encoder kind '" + s + "'");
}

EncoderMode parse_encoder_mode(const std::string& s) {
  if (s == "causal") return EncoderMode::kCausal;
  if (s == "noncausal") return EncoderMode::kNonCausal;
  throw InputError("unknown mode '" + s + "' (expected causal|noncausal)");
}

void EncoderConfig::validate() const {
  if (hidden_units == 0 || proj_units == 0) throw InputError("encoder: hidden/proj units must be > 0");
  const bool conformer =
      causal_kind == CausalKind::kConformer || noncausal_kind == NonCausalKind::kConformer;
  if (conformer) {
    if (attn_heads == 0 || proj_units % attn_heads != 0) {
      throw InputError("encoder: proj_units " + std::to_string(proj_units) +
                       " must divide evenly by attn_heads " + std::to_string(attn_heads));
    }
    if (conv_kernel == 0 || conv_kernel % 2 == 0) throw InputError("encoder: conv_kernel must be odd");
  }
  if (time_reduction_after_layer && *time_reduction_after_layer > causal_layers) {
    throw InputError("encoder: time_reduction_after_layer exceeds causal_layers");
  }
}

std::size_t EncoderConfig::conv_right_reach() const {
  return std::min((conv_kernel - 1) / 2, right_context_frames);
}

std::optional<std::size_t> EncoderConfig::lookahead_frames() const {
  if (noncausal_kind == NonCausalKind::kIdentity || noncausal_layers == 0) return 0;
  if (noncausal_kind == NonCausalKind::kBiLstm) return std::nullopt;
  return noncausal_layers * (right_context_frames + conv_right_reach());
}

// ---- causal stack -----------------------------------------------------------------

CausalEncoder::CausalEncoder(const EncoderConfig& config, std::size_t input_dim, ParamStore& store,
                             Rng& rng)
    : config_(config) {
  config_.validate();
  std::size_t dim = input_dim;
  auto maybe_reduction = [&](std::size_t after) {
    if (config_.time_reduction_after_layer == after) {
      reduction_ = Linear::create(store, "causal/reduce", 2 * dim, dim, rng);
    }
  };
  if (config_.causal_kind == CausalKind::kConformer && config_.causal_layers > 0) {
    input_proj_ = Linear::create(store, "causal/input_proj", dim, config_.proj_units, rng);
    dim = config_.proj_units;
  }
  maybe_reduction(0);
  for (std::size_t l = 0; l < config_.causal_layers; ++l) {
    const std::string name = "causal/layer" + std::to_string(l);
    if (config_.causal_kind == CausalKind::kLstm) {
      lstm_layers_.push_back(
          LstmParams::create(store, name, dim, config_.hidden_units, config_.proj_units, rng));
    } else {
      conformer_layers_.push_back(ConformerParams::create(store, name, dim, config_.hidden_units,
                                                          config_.attn_heads, config_.conv_kernel, rng));
    }
    dim = config_.proj_units;
    maybe_reduction(l + 1);
  }
  output_dim_ = dim;
}

EncoderOutput CausalEncoder::encode(const FeatureSequence& x) const {
  EncoderOutput out;
  out.mode = EncoderMode::kCausal;
  out.frame_period_ms = x.frame_period_ms;
  Tensor h = x.to_tensor();
  auto maybe_reduce = [&](std::size_t after) {
    if (reduction_ && config_.time_reduction_after_layer == after) {
      h = time_reduce(h, *reduction_);
      out.frame_period_ms *= 2.0;
    }
  };
  if (input_proj_) h = (*input_proj_)(h);
  maybe_reduce(0);
  for (std::size_t l = 0; l < config_.causal_layers; ++l) {
    if (config_.causal_kind == CausalKind::kLstm) {
      h = lstm_layer_forward(h, lstm_layers_[l], Direction::kForward);
    } else {
      h = conformer_layer_forward(h, conformer_layers_[l], 0);
    }
    maybe_reduce(l + 1);
  }
  out.features = h;
  return out;
}

// ---- non-causal cascade --------------------------------------------------------------

NonCausalEncoder::NonCausalEncoder(const EncoderConfig& config, std::size_t input_dim,
                                   ParamStore& store, Rng& rng)
    : config_(config) {
  config_.validate();
  std::size_t dim = input_dim;
  for (std::size_t l = 0; l < config_.noncausal_layers; ++l) {
    const std::string name = "cascade/layer" + std::to_string(l);
    switch (config_.noncausal_kind) {
      case NonCausalKind::kBiLstm:
        bilstm_layers_.push_back(
            BiLstmParams::create(store, name, dim, config_.hidden_units, config_.proj_units, rng));
        dim = config_.proj_units;
        break;
      case NonCausalKind::kConformer:
        conformer_layers_.push_back(ConformerParams::create(
            store, name, dim, config_.hidden_units, config_.attn_heads, config_.conv_kernel, rng));
        break;
      case NonCausalKind::kIdentity:
        break;
    }
  }
}

EncoderOutput NonCausalEncoder::encode(const EncoderOutput& causal) const {
  if (causal.mode != EncoderMode::kCausal) {
    throw ContractError("cascade_encode: input must be the causal encoder output");
  }
  EncoderOutput out = causal;
  out.mode = EncoderMode::kNonCausal;
  Tensor h = causal.features;
  for (const auto& layer : bilstm_layers_) h = bilstm_layer_forward(h, layer);
  for (const auto& layer : conformer_layers_) {
    h = conformer_layer_forward(h, layer, config_.right_context_frames);
  }
  out.features = h;
  return out;
}

EncoderOutput causal_encode(const FeatureSequence& x, const CausalEncoder& encoder) {
  return encoder.encode(x);
}

EncoderOutput cascade_encode(const EncoderOutput& e_s, const NonCausalEncoder& encoder) {
  return encoder.encode(e_s);
}

}  // namespace casr
