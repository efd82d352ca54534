#include "casr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <thread>

#include "casr/errors.hpp"

namespace casr {

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError("train: lambda must lie in [0, 1]");
  if (!(beta >= 0.0)) throw InputError("train: beta must be >= 0");
  if (!(learning_rate > 0.0) || !(adam_eps > 0.0) || !(clip_norm > 0.0)) {
    throw InputError("train: learning_rate, adam_eps and clip_norm must be > 0");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw InputError("train: adam betas must lie in [0, 1)");
  }
  if (batch_size == 0) throw InputError("train: batch_size must be >= 1");
  if (!(divergence_threshold > 0.0)) throw InputError("train: divergence_threshold must be > 0");
}

AdamMoments AdamMoments::zeros_like(const ParamStore& params) {
  AdamMoments m;
  for (const auto& e : params.entries()) {
    m.m.emplace_back(e.tensor.numel(), 0.0);
    m.v.emplace_back(e.tensor.numel(), 0.0);
  }
  return m;
}

void adam_step(ParamStore& params, const GradientSet& grads, AdamMoments& moments,
               const TrainConfig& config, std::uint64_t t) {
  auto& entries = params.entries();
  if (grads.size() != entries.size() || moments.m.size() != entries.size() ||
      moments.v.size() != entries.size()) {
    throw DimensionError("adam_step: gradient/moment count does not match the parameters");
  }
  if (t < 1) throw ContractError("adam_step: step must be >= 1");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (grads[i].size() != entries[i].tensor.numel()) {
      throw DimensionError("adam_step: gradient size mismatch for " + entries[i].name);
    }
    for (double g : grads[i]) {
      if (std::isnan(g)) throw NumericError("adam_step: NaN gradient in parameter " + entries[i].name);
    }
  }
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto theta = entries[i].tensor.mutable_values();
    auto& m = moments.m[i];
    auto& v = moments.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grads[i][j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      theta[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

double global_norm(const GradientSet& grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g) sq += x * x;
  }
  return std::sqrt(sq);
}

double clip_global_norm(GradientSet& grads, double clip_norm) {
  if (!(clip_norm > 0.0)) throw InputError("clip_global_norm: clip_norm must be > 0");
  const double norm = global_norm(grads);
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (auto& g : grads) {
      for (double& x : g) x *= scale;
    }
  }
  return norm;
}

// ---- trainer ----------------------------------------------------------------------------

Trainer::Trainer(CascadedModel& model, const TrainConfig& config)
    : model_(model),
      config_(config),
      moments_(AdamMoments::zeros_like(model.params())),
      sampling_(Rng::stream(config.seed, "sampling")) {
  config_.validate();
}

namespace {

struct UtteranceWork {
  FeatureSequence trimmed;  // only filled when padding had to be dropped
  const FeatureSequence* features = nullptr;
  const TokenSequence* tokens = nullptr;
  std::optional<EncoderMode> mode;  // nullopt under the weighted strategy
  double loss = 0.0;
  GradientSet grads;
};

void run_utterance(UtteranceWork& w, const CascadedModel& model, const TrainConfig& config) {
  Tape tape;
  Tape::Scope scope(tape);
  Tensor loss;
  if (w.mode) {
    loss = path_loss(*w.features, *w.tokens, model, *w.mode, config.beta);
  } else {
    Rng unused(0);
    loss = combined_loss(*w.features, *w.tokens, model, config.lambda, config.beta, unused,
                         LossStrategy::kWeighted)
               .loss;
  }
  w.loss = loss.item();
  tape.backward(loss);
  const auto& entries = model.params().entries();
  w.grads.resize(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto g = tape.grad(entries[i].tensor);
    if (g.empty()) {
      w.grads[i].assign(entries[i].tensor.numel(), 0.0);
    } else {
      w.grads[i].assign(g.begin(), g.end());
    }
  }
}

}  // namespace

BatchGradients Trainer::compute_gradients(std::span<const BatchEntry> batch) {
  if (batch.empty()) throw InputError("train_step: empty batch");
  std::vector<UtteranceWork> work(batch.size());
  BatchGradients out;
  // Sampling is serial and in batch order so the stream does not depend on threading.
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const BatchEntry& b = batch[i];
    if (b.features == nullptr || b.tokens == nullptr || b.valid_frames > b.features->num_frames) {
      throw InputError("train_step: malformed batch entry " + std::to_string(i));
    }
    UtteranceWork& w = work[i];
    if (b.valid_frames < b.features->num_frames) {
      w.trimmed = b.features->prefix(b.valid_frames);
      w.features = &w.trimmed;
    } else {
      w.features = b.features;
    }
    w.tokens = b.tokens;
    if (config_.strategy == LossStrategy::kSampled) {
      w.mode = sample_path(config_.lambda, sampling_);
      ++(*w.mode == EncoderMode::kCausal ? out.causal : out.noncausal);
    } else {
      ++out.weighted;
    }
  }

  const std::size_t n_threads = std::min(threads_, batch.size());
  if (n_threads <= 1) {
    for (auto& w : work) run_utterance(w, model_, config_);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> failures(n_threads);
    for (std::size_t k = 0; k < n_threads; ++k) {
      pool.emplace_back([&, k] {
        try {
          for (std::size_t i = k; i < work.size(); i += n_threads) run_utterance(work[i], model_, config_);
        } catch (...) {
          failures[k] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }

  const double scale = static_cast<double>(batch.size());
  out.grads.resize(work.front().grads.size());
  for (std::size_t p = 0; p < out.grads.size(); ++p) {
    out.grads[p].assign(work.front().grads[p].size(), 0.0);
    for (const auto& w : work) {
      for (std::size_t j = 0; j < out.grads[p].size(); ++j) out.grads[p][j] += w.grads[p][j];
    }
    for (double& g : out.grads[p]) g /= scale;
  }
  for (const auto& w : work) out.loss += w.loss;
  out.loss /= scale;
  return out;
}

StepResult Trainer::train_step(std::span<const BatchEntry> batch) {
  BatchGradients g = compute_gradients(batch);
  if (!(g.loss <= config_.divergence_threshold)) {
    throw NumericError("train_step: loss " + std::to_string(g.loss) + " exceeds the divergence guard " +
                       std::to_string(config_.divergence_threshold) + " at step " +
                       std::to_string(step_ + 1));
  }
  StepResult r;
  r.grad_norm = clip_global_norm(g.grads, config_.clip_norm);
  adam_step(model_.params(), g.grads, moments_, config_, step_ + 1);
  ++step_;
  r.step = step_;
  r.loss = g.loss;
  r.causal = g.causal;
  r.noncausal = g.noncausal;
  r.weighted = g.weighted;
  return r;
}

std::vector<std::size_t> Trainer::select_batch(std::size_t data_size, std::uint64_t step) const {
  if (data_size == 0) throw InputError("train: empty training set");
  Rng rng = Rng::stream(config_.seed, "data", step);
  std::vector<std::size_t> ids(config_.batch_size);
  for (auto& id : ids) id = static_cast<std::size_t>(rng.below(data_size));
  return ids;
}

StepResult Trainer::step(const std::vector<Utterance>& data) {
  std::vector<BatchEntry> batch;
  for (std::size_t id : select_batch(data.size(), step_ + 1)) batch.push_back(BatchEntry::of(data[id]));
  return train_step(batch);
}

Checkpoint Trainer::checkpoint(const std::string& config_json) const {
  Checkpoint c;
  c.step = step_;
  c.config_json = config_json;
  c.rng = sampling_.state();
  const auto& entries = model_.params().entries();
  for (const auto& e : entries) c.tensors.push_back({e.name, e.tensor.clone()});
  for (std::size_t i = 0; i < entries.size(); ++i) {
    c.tensors.push_back({entries[i].name + "/m", Tensor(entries[i].tensor.shape(), moments_.m[i])});
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    c.tensors.push_back({entries[i].name + "/v", Tensor(entries[i].tensor.shape(), moments_.v[i])});
  }
  return c;
}

namespace {

const Tensor& find_tensor(const Checkpoint& c, const std::string& name, const Shape& shape) {
  for (const auto& t : c.tensors) {
    if (t.name != name) continue;
    if (t.tensor.shape() != shape) {
      throw ContractError("checkpoint: tensor " + name + " has shape " + shape_to_string(t.tensor.shape()) +
                          ", model expects " + shape_to_string(shape));
    }
    return t.tensor;
  }
  throw ContractError("checkpoint: missing tensor " + name);
}

}  // namespace

void load_parameters(ParamStore& params, const Checkpoint& checkpoint) {
  for (auto& e : params.entries()) {
    const Tensor& src = find_tensor(checkpoint, e.name, e.tensor.shape());
    std::copy(src.values().begin(), src.values().end(), e.tensor.mutable_values().begin());
  }
}

void Trainer::restore(const Checkpoint& c) {
  auto& entries = model_.params().entries();
  if (c.tensors.size() != 3 * entries.size()) {
    throw ContractError("checkpoint: holds " + std::to_string(c.tensors.size()) + " tensors, expected " +
                        std::to_string(3 * entries.size()));
  }
  load_parameters(model_.params(), c);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& shape = entries[i].tensor.shape();
    moments_.m[i] = find_tensor(c, entries[i].name + "/m", shape).vec();
    moments_.v[i] = find_tensor(c, entries[i].name + "/v", shape).vec();
  }
  step_ = c.step;
  sampling_ = Rng::from_state(c.rng);
}

std::size_t threads_from_env() {
  const char* v = std::getenv("CASR_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw InputError(std::string("CASR_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

}  // namespace casr
