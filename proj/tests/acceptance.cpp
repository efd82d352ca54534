// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--config run.json] [--only 1,6,7]
//
// Criteria 6-9 train models on the synthetic task described by the run
// config (defaults when no file is given).

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "casr/config.hpp"
#include "casr/decoder.hpp"
#include "casr/errors.hpp"
#include "casr/metrics.hpp"
#include "casr/trainer.hpp"
#include "test_support.hpp"

using namespace casr;
using casr::testing::check_gradients;
using casr::testing::probe_sum;
using casr::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

void randomize(ParamStore& store, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (auto& e : store.entries()) {
    for (double& v : e.tensor.mutable_values()) v += scale * rng.uniform(-1.0, 1.0);
  }
}

FeatureSequence random_input(std::size_t T, std::size_t d, Rng& rng) {
  FeatureSequence x(T, d, kBaseFramePeriodMs);
  for (double& v : x.data) v = rng.uniform(-1.5, 1.5);
  return x;
}

// ---- 1 ----

Outcome lattice_oracle() {
  Rng rng(101);
  double worst = 0.0;
  for (int n = 0; n < 500; ++n) {
    const std::size_t T = 1 + rng.below(4), U = rng.below(4), V = 1 + rng.below(3);
    TokenSequence y(U);
    for (Token& t : y) t = static_cast<Token>(1 + rng.below(V));
    const Tensor logits = random_tensor({T, U + 1, V + 1}, rng, 3.0);
    const double a = rnnt_loss(logits, y).loss.item();
    const double b = brute_force_loss(logits, y);
    worst = std::max(worst, std::abs(a - b));
  }
  return {worst <= 1e-9, "500 instances, max |lattice - brute force| = " + fmt("%.2e", worst)};
}

// ---- 2 ----

Outcome gradient_suite() {
  Rng rng(202);
  const auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };
  std::vector<std::pair<std::string, std::function<double()>>> ops;
  double worst = 0.0;
  std::string worst_name;
  const auto check = [&](const std::string& name, std::function<Tensor()> f, std::vector<Tensor> in) {
    const auto g = check_gradients(f, std::move(in));
    if (g.max_rel_err > worst) {
      worst = g.max_rel_err;
      worst_name = name + " (" + g.worst + ")";
    }
  };

  Tensor a = r({3, 4}), b = r({4, 2}), c = r({3, 4}), row = r({4});
  check("matmul", [&] { return probe_sum(matmul(a, b)); }, {a, b});
  check("add", [&] { return probe_sum(add(a, c)); }, {a, c});
  check("add-broadcast", [&] { return probe_sum(add(a, row)); }, {a, row});
  check("sub", [&] { return probe_sum(sub(a, c)); }, {a, c});
  check("mul", [&] { return probe_sum(mul(a, c)); }, {a, c});
  check("mul-broadcast", [&] { return probe_sum(mul(a, row)); }, {a, row});
  check("add-scalar", [&] { return probe_sum(add(a, 0.7)); }, {a});
  check("mul-scalar", [&] { return probe_sum(mul(a, -1.3)); }, {a});
  for (auto [name, kind] : {std::pair{"sigmoid", Activation::kSigmoid}, std::pair{"tanh", Activation::kTanh},
                            std::pair{"relu", Activation::kRelu}, std::pair{"swish", Activation::kSwish}}) {
    check(name, [&, kind = kind] { return probe_sum(activation(a, kind)); }, {a});
  }
  check("sum", [&] { return sum(a); }, {a});
  Tensor cube = r({2, 3, 4});
  for (std::size_t axis = 0; axis < 3; ++axis) {
    check("log_sum_exp", [&, axis] { return probe_sum(log_sum_exp(cube, axis)); }, {cube});
  }
  Tensor sq = r({4, 4});
  const std::vector<bool> mask = attention_mask(4, 1, 1);
  check("softmax_rows", [&] { return probe_sum(softmax_rows(sq)); }, {sq});
  check("softmax_rows-masked", [&] { return probe_sum(softmax_rows(sq, &mask)); }, {sq});
  Tensor gain = r({4}), bias = r({4});
  check("layer_norm", [&] { return probe_sum(layer_norm(a, gain, bias)); }, {a, gain, bias});
  Tensor seq = r({6, 3}), kernel = r({3, 3});
  check("depthwise_conv1d", [&] { return probe_sum(depthwise_conv1d(seq, kernel, {1, 1})); }, {seq, kernel});
  check("reshape", [&] { return probe_sum(reshape(a, {2, 6})); }, {a});
  check("transpose", [&] { return probe_sum(transpose(a)); }, {a});
  check("slice_cols", [&] { return probe_sum(slice_cols(a, 1, 3)); }, {a});
  check("slice_rows", [&] { return probe_sum(slice_rows(a, 1, 3)); }, {a});
  check("concat_cols", [&] { return probe_sum(concat_cols({a, c})); }, {a, c});
  check("pad_rows", [&] { return probe_sum(pad_rows(a, 2)); }, {a});
  check("flip_rows", [&] { return probe_sum(flip_rows(a)); }, {a});
  const std::vector<std::size_t> ids{2, 0, 2};
  check("gather_rows", [&] { return probe_sum(gather_rows(a, ids)); }, {a});
  Tensor pa = r({3, 2}), pb = r({2, 2});
  check("pairwise_add", [&] { return probe_sum(pairwise_add(pa, pb)); }, {pa, pb});
  {
    ParamStore store;
    Rng init(203);
    const LstmParams p = LstmParams::create(store, "lstm", 3, 4, 3, init);
    randomize(store, 204, 0.3);
    Tensor gin = r({5, 16});
    check("lstm_recurrence", [&] { return probe_sum(lstm_recurrence(gin, p)); },
          {gin, p.w_recurrent, p.bias, p.w_proj});
  }
  Tensor logits = r({4, 3, 4});
  check("rnnt_loss", [&] { return rnnt_loss(logits, {2, 3}).loss; }, {logits});
  const double ops_worst = worst;
  const std::string ops_name = worst_name;

  // End-to-end: tiny cascaded model, T=5, U=2, weighted loss over both paths.
  double e2e = 0.0;
  for (NonCausalKind kind : {NonCausalKind::kBiLstm, NonCausalKind::kConformer}) {
    ModelConfig mc;
    mc.frontend = {2, 1, 1};
    mc.encoder.causal_layers = 1;
    mc.encoder.noncausal_kind = kind;
    mc.encoder.hidden_units = 4;
    mc.encoder.proj_units = 4;
    mc.encoder.attn_heads = 1;
    mc.encoder.right_context_frames = 1;
    mc.decoder = {3, 3, 4, 3, 4};
    CascadedModel m(mc, 205);
    randomize(m.params(), 206, 0.3);
    Rng xr(207);
    const FeatureSequence x = random_input(5, 2, xr);
    std::vector<Tensor> params;
    for (const auto& e : m.params().entries()) params.push_back(e.tensor);
    Rng unused(0);
    const auto g = check_gradients(
        [&] { return combined_loss(x, {2, 1}, m, 0.4, 0.0, unused, LossStrategy::kWeighted).loss; }, params);
    e2e = std::max(e2e, g.max_rel_err);
  }
  std::string detail = "ops max rel err " + fmt("%.2e", ops_worst) + ", end-to-end " + fmt("%.2e", e2e);
  if (ops_worst >= 1e-5) detail += "; worst op " + ops_name;
  return {ops_worst < 1e-5 && e2e < 1e-3, detail};
}

// ---- 3 ----

Outcome causality() {
  std::size_t prefix_checks = 0, stream_checks = 0, failures = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ModelConfig mc;
    mc.encoder.hidden_units = 16;
    mc.encoder.proj_units = 8;
    if (seed % 2 == 1) mc.encoder.time_reduction_after_layer = 1;
    CascadedModel m(mc, 300 + seed);
    randomize(m.params(), 310 + seed, 0.5);
    Tape::Pause pause;
    Rng rng(320 + seed);
    for (int n = 0; n < 20; ++n) {
      const FeatureSequence x = random_input(4 + rng.below(40), mc.frontend.input_dim, rng);
      const FeatureSequence stacked = m.prepare(x);
      const EncoderOutput full = causal_encode(stacked, m.causal_encoder());
      const std::size_t r = mc.encoder.time_reduction_factor();
      const auto full_values = full.features.values();
      for (std::size_t len = r; len <= stacked.num_frames; len += r) {
        const EncoderOutput part = causal_encode(stacked.prefix(len), m.causal_encoder());
        const auto pv = part.features.values();
        ++prefix_checks;
        if (!std::equal(pv.begin(), pv.end(), full_values.begin())) ++failures;
      }
      StreamingSession s(m);
      for (std::size_t t = 0; t < x.num_frames; ++t) s.push({x.frame(t), x.dim});
      s.finalize();
      ++stream_checks;
      if (!(s.result() == greedy_decode(full, m))) ++failures;
    }
  }
  return {failures == 0, std::to_string(prefix_checks) + " prefix checks, " + std::to_string(stream_checks) +
                             " streaming sessions, " + std::to_string(failures) + " mismatches"};
}

// ---- 4 ----

Outcome receptive_field() {
  std::size_t configs = 0, outside_violations = 0, silent_windows = 0;
  double worst_outside = 0.0;
  for (std::size_t layers : {1u, 2u, 3u}) {
    for (std::size_t W : {0u, 1u, 2u, 3u}) {
      EncoderConfig ec;
      ec.causal_layers = 1;
      ec.hidden_units = 6;
      ec.proj_units = 4;
      ec.noncausal_kind = NonCausalKind::kConformer;
      ec.noncausal_layers = layers;
      ec.right_context_frames = W;
      ec.conv_kernel = 5;
      const std::size_t c = std::min<std::size_t>((ec.conv_kernel - 1) / 2, W);
      const std::size_t reach = layers * (W + c);
      ++configs;
      bool inside_changed = false;
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        ParamStore store;
        Rng init(400 + seed);
        CausalEncoder causal(ec, 3, store, init);
        NonCausalEncoder cascade(ec, causal.output_dim(), store, init);
        randomize(store, 410 + seed, 0.3);
        Tape::Pause pause;
        Rng rng(420 + seed);
        const std::size_t T = 24, t = 3;
        EncoderOutput e_s;
        e_s.mode = EncoderMode::kCausal;
        e_s.features = random_tensor({T, 4}, rng);
        const Tensor base = cascade_encode(e_s, cascade).features;
        for (std::size_t p = t + 1; p < T; ++p) {
          EncoderOutput moved = e_s;
          moved.features = e_s.features.clone();
          for (std::size_t col = 0; col < 4; ++col) moved.features.mutable_values()[p * 4 + col] += 1.0;
          const Tensor out = cascade_encode(moved, cascade).features;
          double d = 0.0;
          for (std::size_t col = 0; col < base.dim(1); ++col) {
            d = std::max(d, std::abs(out.values()[t * base.dim(1) + col] - base.values()[t * base.dim(1) + col]));
          }
          if (p > t + reach) {
            worst_outside = std::max(worst_outside, d);
            if (d > 1e-12) ++outside_violations;
          } else if (d > 0.0) {
            inside_changed = true;
          }
        }
      }
      if (reach > 0 && !inside_changed) ++silent_windows;
    }
  }
  return {outside_violations == 0 && silent_windows == 0,
          std::to_string(configs) + " (L, W) configs, max change beyond window " + fmt("%.1e", worst_outside) +
              ", windows with no inside effect " + std::to_string(silent_windows)};
}

// ---- 5 ----

Outcome sampling() {
  std::ostringstream detail;
  bool ok = true;
  for (double lambda : {0.0, 0.5, 1.0}) {
    Rng rng = Rng::stream(505, "acceptance-sampling");
    std::size_t causal = 0;
    const std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) causal += sample_path(lambda, rng) == EncoderMode::kCausal;
    const double expected = lambda * n;
    const double sigma = std::sqrt(n * lambda * (1.0 - lambda));
    const bool pass = lambda == 0.5 ? std::abs(causal - expected) <= 3.0 * sigma : causal == expected;
    ok = ok && pass;
    detail << "lambda " << lambda << ": " << causal << "/" << n << " causal; ";
  }
  return {ok, detail.str()};
}

// ---- 6-9: trained models ----

struct Trained {
  RunConfig config;
  std::unique_ptr<CascadedModel> model;
  double seconds = 0.0;
};

Trained train(const RunConfig& config, const std::vector<Utterance>& data) {
  Trained t{config, std::make_unique<CascadedModel>(config.model, config.train.seed), 0.0};
  const auto start = std::chrono::steady_clock::now();
  Trainer trainer(*t.model, config.train);
  for (std::size_t s = 0; s < config.train.steps; ++s) trainer.step(data);
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

CorpusReport eval(const Trained& t, const std::vector<Utterance>& data, EncoderMode mode) {
  EvalOptions o;
  o.mode = mode;
  o.max_symbols_per_frame = t.config.decode.max_symbols_per_frame;
  return evaluate_utterances(data, *t.model, o);
}

CorpusReport stream_eval(const Trained& t, const std::vector<Utterance>& data) {
  EvalOptions o;
  o.streaming = true;
  o.max_symbols_per_frame = t.config.decode.max_symbols_per_frame;
  return evaluate_utterances(data, *t.model, o);
}

class TrendRuns {
 public:
  explicit TrendRuns(RunConfig base) : base_(std::move(base)) {
    train_ = generate_split(base_, Split::kTrain);
    eval_ = generate_split(base_, Split::kEval);
  }

  const Trained& cascade(std::uint64_t seed) {
    auto& slot = cascades_[seed];
    if (!slot.model) {
      RunConfig c = base_;
      c.train.seed = seed;
      slot = train(c, train_);
      log("cascade seed " + std::to_string(seed), slot);
    }
    return slot;
  }

  const Trained& standalone() {
    if (!standalone_.model) {
      RunConfig c = base_;
      c.model.encoder.noncausal_kind = NonCausalKind::kIdentity;
      c.train.lambda = 1.0;
      standalone_ = train(c, train_);
      log("standalone causal", standalone_);
    }
    return standalone_;
  }

  const Trained& fastemit() {
    if (!fastemit_.model) {
      RunConfig c = base_;
      c.train.beta = kFastEmitBeta;
      fastemit_ = train(c, train_);
      log("fastemit", fastemit_);
    }
    return fastemit_;
  }

  const std::vector<Utterance>& eval_set() const { return eval_; }
  const std::vector<Utterance>& longform_set() {
    if (longform_.empty()) longform_ = generate_split(base_, Split::kLongform);
    return longform_;
  }
  const RunConfig& base() const { return base_; }

  static constexpr double kFastEmitBeta = 0.05;

 private:
  static void log(const std::string& what, const Trained& t) {
    std::cerr << "  trained " << what << " (" << t.config.train.steps << " steps, " << fmt("%.0f", t.seconds)
              << " s)\n";
  }

  RunConfig base_;
  std::vector<Utterance> train_, eval_, longform_;
  std::map<std::uint64_t, Trained> cascades_;
  Trained standalone_, fastemit_;
};

Outcome trend_a(TrendRuns& runs) {
  std::ostringstream detail;
  std::size_t holding = 0;
  const std::uint64_t first = runs.base().train.seed;
  for (std::uint64_t seed = first; seed < first + 3; ++seed) {
    const Trained& t = runs.cascade(seed);
    const double c = eval(t, runs.eval_set(), EncoderMode::kCausal).totals.wer;
    const double nc = eval(t, runs.eval_set(), EncoderMode::kNonCausal).totals.wer;
    const bool ok = c <= 0.15 && nc <= 0.9 * c;
    holding += ok;
    detail << "seed " << seed << ": C " << fmt("%.4f", c) << " NC " << fmt("%.4f", nc) << " ratio "
           << (c > 0 ? fmt("%.3f", nc / c) : std::string("n/a")) << (ok ? " ok" : " no") << "; ";
  }
  detail << holding << "/3 seeds hold";
  return {holding >= 2, detail.str()};
}

Outcome trend_b(TrendRuns& runs) {
  const double cascaded = eval(runs.cascade(runs.base().train.seed), runs.eval_set(), EncoderMode::kCausal).totals.wer;
  const double alone = eval(runs.standalone(), runs.eval_set(), EncoderMode::kCausal).totals.wer;
  // A zero-error standalone model only admits a zero-error cascade.
  const bool ok = cascaded <= 1.2 * alone;
  return {ok, "cascaded causal WER " + fmt("%.4f", cascaded) + " vs standalone causal " + fmt("%.4f", alone)};
}

Outcome trend_c(TrendRuns& runs) {
  const Trained& plain = runs.cascade(runs.base().train.seed);
  const Trained& fe = runs.fastemit();
  const CorpusReport plain_stream = stream_eval(plain, runs.eval_set());
  const CorpusReport fe_stream = stream_eval(fe, runs.eval_set());
  const double fe_nc = eval(fe, runs.eval_set(), EncoderMode::kNonCausal).totals.wer;
  const double p0 = plain_stream.latency.p50_ms, p1 = fe_stream.latency.p50_ms;
  const double w0 = plain_stream.totals.wer, w1 = fe_stream.totals.wer;
  const bool latency_ok = !plain_stream.latency.empty && !fe_stream.latency.empty && p1 < p0;
  const bool wer_ok = w1 <= 1.3 * w0;
  const bool nc_ok = fe_nc <= w1;
  std::ostringstream detail;
  detail << "p50 " << fmt("%.1f", p0) << " -> " << fmt("%.1f", p1) << " ms (p90 " << fmt("%.1f", plain_stream.latency.p90_ms)
         << " -> " << fmt("%.1f", fe_stream.latency.p90_ms) << "); causal WER " << fmt("%.4f", w0) << " -> "
         << fmt("%.4f", w1) << "; beta model NC WER " << fmt("%.4f", fe_nc);
  return {latency_ok && wer_ok && nc_ok, detail.str()};
}

Outcome trend_longform(TrendRuns& runs) {
  const Trained& t = runs.cascade(runs.base().train.seed);
  const auto& lf = runs.longform_set();
  const double c = eval(t, lf, EncoderMode::kCausal).totals.wer;
  const double nc = eval(t, lf, EncoderMode::kNonCausal).totals.wer;
  const double short_nc = eval(t, runs.eval_set(), EncoderMode::kNonCausal).totals.wer;
  const bool ok = nc <= c && nc <= 2.0 * short_nc;
  return {ok, std::to_string(lf.size()) + " long-form utterances: C " + fmt("%.4f", c) + " NC " + fmt("%.4f", nc) +
                  "; short-form NC " + fmt("%.4f", short_nc)};
}

// ---- 10 ----

std::size_t brute_distance(const TokenSequence& a, std::size_t i, const TokenSequence& b, std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  return std::min({brute_distance(a, i + 1, b, j + 1) + (a[i] == b[j] ? 0u : 1u),
                   brute_distance(a, i + 1, b, j) + 1, brute_distance(a, i, b, j + 1) + 1});
}

Outcome wer_suite() {
  Rng rng(1010);
  const auto seq = [&](std::size_t alphabet) {
    TokenSequence s(rng.below(9));
    for (Token& t : s) t = static_cast<Token>(1 + rng.below(alphabet));
    return s;
  };
  const auto d = [](const TokenSequence& a, const TokenSequence& b) { return edit_distance_align(a, b).errors(); };
  std::size_t oracle_failures = 0, axiom_failures = 0;
  for (int n = 0; n < 1000; ++n) {
    const std::size_t alphabet = 1 + rng.below(4);
    const TokenSequence a = seq(alphabet), b = seq(alphabet), c = seq(alphabet);
    const WerBreakdown w = edit_distance_align(a, b);
    if (w.errors() != brute_distance(a, 0, b, 0)) ++oracle_failures;
    if (w.substitutions + w.deletions > a.size() ||
        w.wer != static_cast<double>(w.errors()) / static_cast<double>(std::max<std::size_t>(1, a.size()))) {
      ++axiom_failures;
    }
    if (d(a, a) != 0 || (d(a, b) == 0) != (a == b) || d(a, b) != d(b, a) || d(a, c) > d(a, b) + d(b, c)) {
      ++axiom_failures;
    }
  }
  return {oracle_failures == 0 && axiom_failures == 0,
          "1000 pairs: " + std::to_string(oracle_failures) + " oracle mismatches, " + std::to_string(axiom_failures) +
              " axiom violations"};
}

// ---- 11 ----

Outcome persistence() {
  RunConfig config;
  config.data.train_utterances = 50;
  config.train.steps = 10;
  const auto data = generate_split(config, Split::kTrain);
  const std::string config_json = to_json(config).dump();

  CascadedModel straight(config.model, config.train.seed);
  Trainer ts(straight, config.train);
  std::vector<double> straight_losses;
  for (int i = 0; i < 10; ++i) straight_losses.push_back(ts.step(data).loss);

  CascadedModel first(config.model, config.train.seed);
  Trainer tf(first, config.train);
  for (int i = 0; i < 5; ++i) tf.step(data);
  const Checkpoint saved = tf.checkpoint(config_json);
  const auto bytes = encode_checkpoint(saved);
  const Checkpoint loaded = decode_checkpoint(bytes);
  const bool round_trip = encode_checkpoint(loaded) == bytes && loaded.step == saved.step &&
                          loaded.rng == saved.rng && loaded.config_json == saved.config_json;

  CascadedModel resumed(config.model, config.train.seed + 1000);
  Trainer tr(resumed, config.train);
  tr.restore(loaded);
  bool twin = true;
  for (int i = 5; i < 10; ++i) twin = twin && tr.step(data).loss == straight_losses[i];
  twin = twin && encode_checkpoint(tr.checkpoint(config_json)) == encode_checkpoint(ts.checkpoint(config_json));
  return {round_trip && twin, std::string("round trip ") + (round_trip ? "bit-exact" : "differs") +
                                  ", resumed steps 6-10 " + (twin ? "identical to straight run" : "diverge")};
}

std::set<int> parse_only(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"casr acceptance run"};
  std::string config_path, only;
  app.add_option("--config", config_path, "run config for the trend criteria");
  app.add_option("--only", only, "comma-separated criterion numbers");
  CLI11_PARSE(app, argc, argv);

  RunConfig config;
  try {
    if (!config_path.empty()) config = load_run_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "acceptance: " << e.what() << "\n";
    return 2;
  }
  const std::set<int> selected = only.empty() ? std::set<int>{} : parse_only(only);
  std::unique_ptr<TrendRuns> runs;
  const auto trend = [&]() -> TrendRuns& {
    if (!runs) runs = std::make_unique<TrendRuns>(config);
    return *runs;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"lattice loss equals brute-force enumeration", lattice_oracle},
      {"finite-difference gradient suite", gradient_suite},
      {"causal prefix and streaming equivalence", causality},
      {"conformer cascade receptive field", receptive_field},
      {"per-utterance path sampling rates", sampling},
      {"noncausal mode beats causal mode", [&] { return trend_a(trend()); }},
      {"cascaded causal mode matches standalone causal", [&] { return trend_b(trend()); }},
      {"FastEmit lowers latency at small WER cost", [&] { return trend_c(trend()); }},
      {"long-form decoding stays sane", [&] { return trend_longform(trend()); }},
      {"WER metric oracle and axioms", wer_suite},
      {"checkpoint round trip and resume twin", persistence},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << " [" << fmt("%.1f", secs) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
