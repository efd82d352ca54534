#include <cmath>

#include "casr/errors.hpp"
#include "casr/transducer.hpp"

namespace casr {

void DecoderConfig::validate() const {
  if (vocab_size < 1) throw InputError("decoder: vocab_size must be >= 1");
  if (embed_dim == 0 || pred_hidden == 0 || pred_proj == 0 || joint_units == 0) {
    throw InputError("decoder: all dimensions must be > 0");
  }
}

// ---- prediction network ----------------------------------------------------------------

PredictionNet::PredictionNet(const DecoderConfig& config, ParamStore& store, Rng& rng)
    : vocab_size_(config.vocab_size) {
  embedding_ = store.uniform("pred/embedding", {config.vocab_size + 1, config.embed_dim}, 1, rng);
  lstm_ = LstmParams::create(store, "pred/lstm", config.embed_dim, config.pred_hidden,
                             config.pred_proj, rng);
}

Tensor PredictionNet::forward(const TokenSequence& y) const {
  validate_tokens(y, vocab_size_);
  std::vector<std::size_t> ids;
  ids.reserve(y.size() + 1);
  ids.push_back(static_cast<std::size_t>(kBlank));
  for (Token v : y) ids.push_back(static_cast<std::size_t>(v));
  return lstm_layer_forward(gather_rows(embedding_, ids), lstm_, Direction::kForward);
}

PredictionNet::State PredictionNet::start() const {
  State zero{LstmState::zeros(lstm_), {}};
  return step(zero, kBlank);
}

PredictionNet::State PredictionNet::step(const State& state, Token token) const {
  if (token < 0 || static_cast<std::size_t>(token) > vocab_size_) {
    throw InputError("prediction: token " + std::to_string(token) + " out of range");
  }
  Tape::Pause pause;
  const std::size_t id = static_cast<std::size_t>(token);
  const Tensor emb = gather_rows(embedding_, std::span<const std::size_t>(&id, 1));
  State next = state;
  const Tensor out = lstm_recurrence(matmul(emb, lstm_.w_input), lstm_, &next.lstm);
  next.output = out.vec();
  return next;
}

// ---- joint network ----------------------------------------------------------------------

JointNet::JointNet(std::size_t enc_dim, std::size_t pred_dim, const DecoderConfig& config,
                   ParamStore& store, Rng& rng) {
  enc_ = Linear::create(store, "joint/enc", enc_dim, config.joint_units, rng);
  pred_w_ = store.uniform("joint/pred", {pred_dim, config.joint_units}, pred_dim, rng);
  out_ = Linear::create(store, "joint/out", config.joint_units, config.vocab_size + 1, rng);
}

Tensor JointNet::forward(const Tensor& e, const Tensor& pred) const {
  const std::size_t T = e.dim(0), U1 = pred.dim(0), J = enc_.out_dim();
  const Tensor hidden = tanh(pairwise_add(enc_(e), matmul(pred, pred_w_)));
  const Tensor logits = out_(reshape(hidden, {T * U1, J}));
  return reshape(logits, {T, U1, out_.out_dim()});
}

Tensor JointNet::project_encoder(const Tensor& e) const {
  Tape::Pause pause;
  return enc_(e);
}

std::vector<double> JointNet::project_prediction(std::span<const double> pred) const {
  Tape::Pause pause;
  const Tensor row({1, pred.size()}, std::vector<double>(pred.begin(), pred.end()));
  return matmul(row, pred_w_).vec();
}

std::vector<double> JointNet::logits(std::span<const double> enc_row,
                                     std::span<const double> pred_row) const {
  const std::size_t J = enc_.out_dim(), K = out_.out_dim();
  const auto w = out_.weight.values();
  const auto b = out_.bias.values();
  std::vector<double> h(J);
  for (std::size_t j = 0; j < J; ++j) h[j] = std::tanh(enc_row[j] + pred_row[j]);
  // Same accumulation order as matmul followed by the bias add.
  std::vector<double> out(K, 0.0);
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t k = 0; k < K; ++k) out[k] += h[j] * w[j * K + k];
  }
  for (std::size_t k = 0; k < K; ++k) out[k] = out[k] + b[k];
  return out;
}

// ---- assembled model ----------------------------------------------------------------------

void ModelConfig::validate() const {
  if (frontend.input_dim == 0 || frontend.stack == 0 || frontend.stride == 0) {
    throw InputError("frontend: input_dim, stack and stride must be >= 1");
  }
  encoder.validate();
  decoder.validate();
  const bool cascade_changes_dim = encoder.noncausal_kind != NonCausalKind::kIdentity &&
                                   encoder.noncausal_layers > 0;
  const std::size_t causal_dim =
      encoder.causal_layers > 0 ? encoder.proj_units : frontend.input_dim * frontend.stack;
  // One joint network reads both encoders, so their widths must agree.
  if (cascade_changes_dim && causal_dim != encoder.proj_units) {
    throw InputError("model: causal output width " + std::to_string(causal_dim) +
                     " must equal proj_units " + std::to_string(encoder.proj_units) +
                     " for a non-identity cascade");
  }
}

CascadedModel::CascadedModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng = Rng::stream(seed, "init");
  const std::size_t in_dim = config_.frontend.input_dim * config_.frontend.stack;
  causal_ = CausalEncoder(config_.encoder, in_dim, params_, rng);
  cascade_ = NonCausalEncoder(config_.encoder, causal_.output_dim(), params_, rng);
  prediction_ = PredictionNet(config_.decoder, params_, rng);
  joint_ = JointNet(causal_.output_dim(), prediction_.output_dim(), config_.decoder, params_, rng);
}

FeatureSequence CascadedModel::prepare(const FeatureSequence& raw) const {
  if (raw.dim != config_.frontend.input_dim) {
    throw DimensionError("model: input dim " + std::to_string(raw.dim) + ", expected " +
                         std::to_string(config_.frontend.input_dim));
  }
  return stack_and_subsample(raw, config_.frontend.stack, config_.frontend.stride);
}

EncoderOutput CascadedModel::encode(const FeatureSequence& raw, EncoderMode mode) const {
  EncoderOutput e_s = causal_encode(prepare(raw), causal_);
  if (mode == EncoderMode::kCausal) return e_s;
  return cascade_encode(e_s, cascade_);
}

std::size_t CascadedModel::input_frames_per_encoder_frame() const {
  return config_.frontend.stride * config_.encoder.time_reduction_factor();
}

std::size_t CascadedModel::last_input_frame(std::size_t encoder_frame) const {
  const std::size_t r = config_.encoder.time_reduction_factor();
  const std::size_t last_stacked = encoder_frame * r + r - 1;
  return last_stacked * config_.frontend.stride + config_.frontend.stack - 1;
}

}  // namespace casr
