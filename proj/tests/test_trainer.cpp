#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <cstring>
#include <unistd.h>

#include "casr/config.hpp"
#include "casr/errors.hpp"
#include "casr/trainer.hpp"

using namespace casr;

namespace {

ModelConfig tiny_model(NonCausalKind cascade = NonCausalKind::kBiLstm) {
  ModelConfig c;
  c.frontend = {3, 2, 2};
  c.encoder.causal_layers = 1;
  c.encoder.noncausal_kind = cascade;
  c.encoder.hidden_units = 5;
  c.encoder.proj_units = 4;
  c.decoder = {3, 3, 4, 3, 4};
  return c;
}

std::vector<Utterance> tiny_data(std::size_t n, std::uint64_t seed) {
  SynthTaskSpec task;
  task.vocab_size = 3;
  task.feature_dim = 3;
  task.frames_per_token = 3;
  task.seed = seed;
  Rng rng(seed);
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(synth_utterance(task, 1 + rng.below(3), rng));
  return out;
}

TrainConfig small_train() {
  TrainConfig c;
  c.batch_size = 3;
  c.learning_rate = 1e-2;
  return c;
}

std::vector<double> flat_params(const CascadedModel& m) {
  std::vector<double> out;
  for (const auto& e : m.params().entries()) {
    const auto v = e.tensor.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("casr_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

// ---- Adam and clipping ----

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore store;
  store.constant("theta", {1}, 1.0);
  AdamMoments mom = AdamMoments::zeros_like(store);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  adam_step(store, {{1.0}}, mom, cfg, 1);
  // m_hat = v_hat = 1, so the step is lr / (1 + eps).
  EXPECT_NEAR(store.entries()[0].tensor.values()[0], 0.9, 1e-8);
}

TEST(Adam, MatchesScalarReferenceOverSteps) {
  ParamStore store;
  store.constant("a", {2}, 0.5);
  store.constant("b", {2}, 0.5);
  AdamMoments mom = AdamMoments::zeros_like(store);
  TrainConfig cfg;
  Rng rng(3);
  double theta = 0.5, m = 0.0, v = 0.0;
  for (std::uint64_t t = 1; t <= 20; ++t) {
    const double g = rng.uniform(-2.0, 2.0);
    adam_step(store, {{g, g}, {g, g}}, mom, cfg, t);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
    const double vh = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
    theta -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_eps);
  }
  for (const auto& e : store.entries()) {
    for (double x : e.tensor.values()) EXPECT_NEAR(x, theta, 1e-14);
  }
}

TEST(Adam, ZeroGradientLeavesParametersAndNanIsRejected) {
  ParamStore store;
  store.constant("w", {3}, 2.0);
  store.constant("u", {1}, 1.0);
  AdamMoments mom = AdamMoments::zeros_like(store);
  adam_step(store, {{0, 0, 0}, {0}}, mom, TrainConfig{}, 1);
  for (double x : store.entries()[0].tensor.values()) EXPECT_EQ(x, 2.0);
  try {
    adam_step(store, {{0, 0, 0}, {std::nan("")}}, mom, TrainConfig{}, 2);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("u"), std::string::npos);
  }
  // Nothing was updated by the aborted step.
  EXPECT_EQ(store.entries()[1].tensor.values()[0], 1.0);
}

TEST(Clip, ThreeFourFive) {
  GradientSet g{{3.0}, {4.0}};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0][0], 0.6, 1e-15);
  EXPECT_NEAR(g[1][0], 0.8, 1e-15);
}

TEST(Clip, BelowThresholdIsBitIdenticalAndNormIsCapped) {
  Rng rng(4);
  for (int n = 0; n < 100; ++n) {
    GradientSet g(3);
    for (auto& b : g) {
      b.resize(1 + rng.below(5));
      for (double& x : b) x = rng.uniform(-3.0, 3.0);
    }
    double sq = 0.0;
    for (const auto& b : g) {
      for (double x : b) sq += x * x;
    }
    const GradientSet before = g;
    const double clip = rng.uniform(0.5, 6.0);
    const double norm = clip_global_norm(g, clip);
    EXPECT_NEAR(norm, std::sqrt(sq), 1e-12);
    if (norm <= clip) EXPECT_EQ(g, before);
    EXPECT_NEAR(global_norm(g), std::min(norm, clip), 1e-12);
  }
}

// ---- train step ----

TEST(TrainStep, MeanReductionOverIdenticalUtterances) {
  const auto data = tiny_data(1, 5);
  TrainConfig cfg = small_train();
  cfg.strategy = LossStrategy::kWeighted;
  CascadedModel a(tiny_model(), 6), b(tiny_model(), 6);
  Trainer ta(a, cfg), tb(b, cfg);
  const std::vector<BatchEntry> one{BatchEntry::of(data[0])};
  const std::vector<BatchEntry> two{BatchEntry::of(data[0]), BatchEntry::of(data[0])};
  const BatchGradients g1 = ta.compute_gradients(one);
  const BatchGradients g2 = tb.compute_gradients(two);
  EXPECT_NEAR(g1.loss, g2.loss, 1e-12);
  ASSERT_EQ(g1.grads.size(), g2.grads.size());
  for (std::size_t p = 0; p < g1.grads.size(); ++p) {
    for (std::size_t j = 0; j < g1.grads[p].size(); ++j) EXPECT_NEAR(g1.grads[p][j], g2.grads[p][j], 1e-12);
  }
  EXPECT_EQ(g2.weighted, 2u);
}

TEST(TrainStep, PaddingDoesNotChangeGradients) {
  const auto data = tiny_data(2, 7);
  Utterance padded = data[0];
  const std::size_t extra = 5;
  for (std::size_t i = 0; i < extra * padded.features.dim; ++i) padded.features.data.push_back(3.0);
  padded.features.num_frames += extra;
  TrainConfig cfg = small_train();
  CascadedModel a(tiny_model(), 8), b(tiny_model(), 8);
  Trainer ta(a, cfg), tb(b, cfg);
  const std::vector<BatchEntry> plain{BatchEntry::of(data[0]), BatchEntry::of(data[1])};
  const std::vector<BatchEntry> with_pad{{&padded.features, data[0].features.num_frames, &padded.tokens},
                                         BatchEntry::of(data[1])};
  const BatchGradients g1 = ta.compute_gradients(plain);
  const BatchGradients g2 = tb.compute_gradients(with_pad);
  for (std::size_t p = 0; p < g1.grads.size(); ++p) {
    for (std::size_t j = 0; j < g1.grads[p].size(); ++j) EXPECT_NEAR(g1.grads[p][j], g2.grads[p][j], 1e-12);
  }
  // The padding would matter if it were read.
  CascadedModel c(tiny_model(), 8);
  Trainer tc(c, cfg);
  const std::vector<BatchEntry> unmasked{BatchEntry::of(padded), BatchEntry::of(data[1])};
  EXPECT_NE(tc.compute_gradients(unmasked).loss, g1.loss);
}

TEST(TrainStep, ModeCountsAreBinomial) {
  const auto data = tiny_data(1, 9);
  TrainConfig cfg = small_train();
  CascadedModel m(tiny_model(), 10);
  Trainer t(m, cfg);
  std::vector<BatchEntry> batch(50, BatchEntry::of(data[0]));
  std::size_t causal = 0, noncausal = 0;
  for (int i = 0; i < 20; ++i) {
    const BatchGradients g = t.compute_gradients(batch);
    causal += g.causal;
    noncausal += g.noncausal;
  }
  ASSERT_EQ(causal + noncausal, 1000u);
  const double sigma = std::sqrt(1000 * 0.25);
  EXPECT_LE(std::abs(static_cast<double>(causal) - 500.0), 3.0 * sigma);
}

TEST(TrainStep, DivergenceGuardAndEmptyBatch) {
  const auto data = tiny_data(2, 11);
  TrainConfig cfg = small_train();
  cfg.divergence_threshold = 1e-3;
  CascadedModel m(tiny_model(), 12);
  const auto before = flat_params(m);
  Trainer t(m, cfg);
  const std::vector<BatchEntry> batch{BatchEntry::of(data[0])};
  EXPECT_THROW(t.train_step(batch), NumericError);
  EXPECT_EQ(flat_params(m), before);
  EXPECT_THROW(t.train_step({}), InputError);
}

// λ = 1 with an identity cascade is a plain transducer: reproduce it with
// the encoder, prediction net, joint and lattice loss wired by hand.
TEST(TrainStep, LambdaOneIdentityEqualsPlainTransducer) {
  const auto data = tiny_data(12, 13);
  TrainConfig cfg = small_train();
  cfg.lambda = 1.0;
  CascadedModel cascaded(tiny_model(NonCausalKind::kIdentity), 14);
  CascadedModel plain(tiny_model(NonCausalKind::kIdentity), 14);
  Trainer trainer(cascaded, cfg);
  AdamMoments mom = AdamMoments::zeros_like(plain.params());
  for (std::uint64_t step = 1; step <= 10; ++step) {
    const auto ids = trainer.select_batch(data.size(), step);
    std::vector<BatchEntry> batch;
    for (auto i : ids) batch.push_back(BatchEntry::of(data[i]));
    const StepResult r = trainer.train_step(batch);
    EXPECT_EQ(r.causal, batch.size());

    GradientSet grads;
    double loss = 0.0;
    for (const auto& e : plain.params().entries()) grads.emplace_back(e.tensor.numel(), 0.0);
    for (auto i : ids) {
      Tape tape;
      Tape::Scope scope(tape);
      const EncoderOutput enc = causal_encode(plain.prepare(data[i].features), plain.causal_encoder());
      const Tensor logits =
          plain.joint().forward(enc.features, plain.prediction().forward(data[i].tokens));
      const Tensor l = rnnt_loss(logits, data[i].tokens).loss;
      tape.backward(l);
      loss += l.item();
      for (std::size_t p = 0; p < grads.size(); ++p) {
        const auto g = tape.grad(plain.params().entries()[p].tensor);
        for (std::size_t j = 0; j < g.size(); ++j) grads[p][j] += g[j];
      }
    }
    for (auto& g : grads) {
      for (double& x : g) x /= static_cast<double>(ids.size());
    }
    loss /= static_cast<double>(ids.size());
    clip_global_norm(grads, cfg.clip_norm);
    adam_step(plain.params(), grads, mom, cfg, step);
    EXPECT_EQ(r.loss, loss) << "step " << step;
  }
  EXPECT_EQ(flat_params(cascaded), flat_params(plain));
}

TEST(TrainStep, DeterministicAndThreadIndependent) {
  const auto data = tiny_data(10, 15);
  TrainConfig cfg = small_train();
  cfg.batch_size = 4;
  std::vector<std::vector<double>> finals;
  std::vector<std::vector<double>> losses;
  for (std::size_t threads : {1u, 1u, 3u}) {
    CascadedModel m(tiny_model(), 16);
    Trainer t(m, cfg);
    t.set_threads(threads);
    std::vector<double> l;
    for (int i = 0; i < 5; ++i) l.push_back(t.step(data).loss);
    losses.push_back(l);
    finals.push_back(flat_params(m));
  }
  EXPECT_EQ(losses[0], losses[1]);
  EXPECT_EQ(losses[0], losses[2]);
  EXPECT_EQ(finals[0], finals[1]);
  EXPECT_EQ(finals[0], finals[2]);
}

TEST(TrainStep, BatchSelectionIsAPureFunctionOfSeedAndStep) {
  CascadedModel m(tiny_model(), 17);
  TrainConfig cfg = small_train();
  Trainer a(m, cfg), b(m, cfg);
  EXPECT_EQ(a.select_batch(100, 7), b.select_batch(100, 7));
  EXPECT_NE(a.select_batch(100, 7), a.select_batch(100, 8));
  EXPECT_THROW(a.select_batch(0, 1), InputError);
}

TEST(TrainStep, LossHalvesOnDefaultTask) {
  RunConfig run;
  const auto data = generate_split(run, Split::kTrain);
  CascadedModel m(run.model, run.train.seed);
  Trainer t(m, run.train);
  double early = 0.0, late = 0.0;
  for (int s = 1; s <= 1000; ++s) {
    const double l = t.step(data).loss;
    if (s <= 100) early += l;
    if (s > 900) late += l;
  }
  EXPECT_LT(late, 0.5 * early);
}

// ---- checkpoints ----

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto data = tiny_data(6, 18);
  CascadedModel m(tiny_model(), 19);
  Trainer t(m, small_train());
  for (int i = 0; i < 3; ++i) t.step(data);
  const Checkpoint c = t.checkpoint(R"({"k":1})");
  EXPECT_EQ(c.step, 3u);
  EXPECT_EQ(c.tensors.size(), 3 * m.params().entries().size());
  const auto path = temp_path("rt.casr");
  save_checkpoint(path, c);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.step, c.step);
  EXPECT_EQ(back.config_json, c.config_json);
  EXPECT_EQ(back.rng, c.rng);
  ASSERT_EQ(back.tensors.size(), c.tensors.size());
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].name, c.tensors[i].name);
    EXPECT_EQ(back.tensors[i].tensor.shape(), c.tensors[i].tensor.shape());
    const auto x = back.tensors[i].tensor.values(), y = c.tensors[i].tensor.values();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(c));
  std::filesystem::remove(path);
}

TEST(Checkpoint, ByteLayout) {
  Checkpoint c;
  c.step = 7;
  c.config_json = "{}";
  c.tensors.push_back({"w", Tensor({2}, {1.5, -2.0})});
  c.rng = {1, 2, 3, 4};
  const auto bytes = encode_checkpoint(c);
  // magic 4 + version 4 + step 8 + len 4 + "{}" 2 + count 4 + name len 2 + "w" 1 + rank 1 + dim 4 + data 16 + rng 32
  EXPECT_EQ(bytes.size(), 82u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CASR");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 7u);
  double first;
  std::memcpy(&first, bytes.data() + 34, 8);
  EXPECT_EQ(first, 1.5);
}

TEST(Checkpoint, CorruptInputsReportOffsets) {
  Checkpoint c;
  c.config_json = "{}";
  c.tensors.push_back({"w", Tensor({2}, {1.0, 2.0})});
  auto bytes = encode_checkpoint(c);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), IoError);

  auto bad_version = bytes;
  bad_version[4] = 2;
  try {
    decode_checkpoint(bad_version);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("at byte 4"), std::string::npos) << e.what();
  }

  auto truncated = bytes;
  truncated.resize(40);
  try {
    decode_checkpoint(truncated);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("at byte"), std::string::npos) << e.what();
  }

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), IoError);
  EXPECT_THROW(load_checkpoint(temp_path("does-not-exist")), IoError);
}

TEST(Checkpoint, ResumeMatchesStraightRun) {
  const auto data = tiny_data(10, 20);
  TrainConfig cfg = small_train();
  CascadedModel straight(tiny_model(), 21);
  Trainer ts(straight, cfg);
  std::vector<double> straight_losses;
  for (int i = 0; i < 10; ++i) straight_losses.push_back(ts.step(data).loss);

  CascadedModel first(tiny_model(), 21);
  Trainer tf(first, cfg);
  for (int i = 0; i < 5; ++i) tf.step(data);
  const auto path = temp_path("resume.casr");
  save_checkpoint(path, tf.checkpoint("{}"));

  // Fresh model with different initial values: everything must come from the file.
  CascadedModel resumed(tiny_model(), 999);
  Trainer tr(resumed, cfg);
  tr.restore(load_checkpoint(path));
  EXPECT_EQ(tr.step_count(), 5u);
  for (int i = 5; i < 10; ++i) EXPECT_EQ(tr.step(data).loss, straight_losses[i]) << "step " << i + 1;
  EXPECT_EQ(flat_params(resumed), flat_params(straight));
  std::filesystem::remove(path);
}

TEST(Checkpoint, MismatchedModelIsRejected) {
  CascadedModel a(tiny_model(), 22);
  Trainer ta(a, small_train());
  const Checkpoint c = ta.checkpoint("{}");
  ModelConfig other = tiny_model();
  other.encoder.hidden_units = 6;
  CascadedModel b(other, 22);
  Trainer tb(b, small_train());
  EXPECT_THROW(tb.restore(c), ContractError);
  EXPECT_THROW(load_parameters(b.params(), c), ContractError);
  CascadedModel d(tiny_model(NonCausalKind::kIdentity), 22);
  EXPECT_THROW(load_parameters(d.params(), Checkpoint{}), ContractError);
}
