#include "casr/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "casr/errors.hpp"

namespace casr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> log_softmax(std::vector<double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  for (double& v : x) v -= lz;
  return x;
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

std::span<const double> row(const Tensor& m, std::size_t r) {
  const std::size_t c = m.dim(1);
  return m.values().subspan(r * c, c);
}

// One encoder frame of the greedy rule. Appends emitted tokens to `emitted`.
void greedy_frame(const CascadedModel& model, std::span<const double> enc_row, std::size_t frame,
                  std::size_t max_symbols, PredictionNet::State& pred, std::vector<double>& pred_proj,
                  DecodeResult& result, std::vector<Token>* emitted) {
  const JointNet& joint = model.joint();
  for (std::size_t emitted_here = 0; emitted_here < max_symbols; ++emitted_here) {
    const auto lp = log_softmax(joint.logits(enc_row, pred_proj));
    // max_element returns the first maximum, i.e. the lowest id on ties.
    const auto best = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    result.score += lp[best];
    if (best == static_cast<std::size_t>(kBlank)) return;
    const auto token = static_cast<Token>(best);
    result.tokens.push_back(token);
    result.emit_frames.push_back(frame);
    if (emitted) emitted->push_back(token);
    pred = model.prediction().step(pred, token);
    pred_proj = joint.project_prediction(pred.output);
  }
}

}  // namespace

DecodeResult greedy_decode(const EncoderOutput& e, const CascadedModel& model,
                           std::size_t max_symbols_per_frame) {
  if (max_symbols_per_frame < 1) throw InputError("greedy_decode: max_symbols_per_frame must be >= 1");
  const Tensor enc = model.joint().project_encoder(e.features);
  PredictionNet::State pred = model.prediction().start();
  std::vector<double> pred_proj = model.joint().project_prediction(pred.output);
  DecodeResult result;
  for (std::size_t t = 0; t < e.num_frames(); ++t) {
    greedy_frame(model, row(enc, t), t, max_symbols_per_frame, pred, pred_proj, result, nullptr);
  }
  return result;
}

// ---- beam search ---------------------------------------------------------------------

namespace {

struct Hypothesis {
  TokenSequence tokens;
  std::vector<std::size_t> emit_frames;
  PredictionNet::State pred;
  std::vector<double> pred_proj;
  double score = 0.0;
};

// Label-sequence keyed pool; merged scores combine by log-sum-exp and the
// better-scoring member keeps its emission frames.
class HypothesisPool {
 public:
  void merge(Hypothesis h) {
    auto it = index_.find(h.tokens);
    if (it == index_.end()) {
      index_.emplace(h.tokens, items_.size());
      items_.push_back(std::move(h));
      return;
    }
    Hypothesis& existing = items_[it->second];
    const double combined = log_add(existing.score, h.score);
    if (h.score > existing.score) existing.emit_frames = std::move(h.emit_frames);
    existing.score = combined;
  }

  // Best `n` by score; ties by label sequence for determinism.
  std::vector<Hypothesis> take_top(std::size_t n) && {
    std::stable_sort(items_.begin(), items_.end(), [](const Hypothesis& a, const Hypothesis& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.tokens < b.tokens;
    });
    if (items_.size() > n) items_.resize(n);
    return std::move(items_);
  }

  bool empty() const { return items_.empty(); }

 private:
  std::map<TokenSequence, std::size_t> index_;
  std::vector<Hypothesis> items_;
};

struct Candidate {
  std::size_t hyp;
  std::size_t symbol;
  double score;
};

}  // namespace

DecodeResult beam_decode(const EncoderOutput& e, const CascadedModel& model, std::size_t beam,
                         std::size_t max_symbols_per_frame) {
  if (beam < 1) throw InputError("beam_decode: beam must be >= 1");
  if (max_symbols_per_frame < 1) throw InputError("beam_decode: max_symbols_per_frame must be >= 1");
  const JointNet& joint = model.joint();
  const Tensor enc = joint.project_encoder(e.features);

  Hypothesis start;
  start.pred = model.prediction().start();
  start.pred_proj = joint.project_prediction(start.pred.output);
  std::vector<Hypothesis> active{std::move(start)};

  for (std::size_t t = 0; t < e.num_frames(); ++t) {
    const auto enc_row = row(enc, t);
    HypothesisPool next_frame;
    std::vector<Hypothesis> current = std::move(active);
    for (std::size_t round = 0; round < max_symbols_per_frame && !current.empty(); ++round) {
      std::vector<Candidate> candidates;
      std::vector<std::vector<double>> log_probs(current.size());
      for (std::size_t h = 0; h < current.size(); ++h) {
        log_probs[h] = log_softmax(joint.logits(enc_row, current[h].pred_proj));
        for (std::size_t k = 0; k < log_probs[h].size(); ++k) {
          candidates.push_back({h, k, current[h].score + log_probs[h][k]});
        }
      }
      std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.symbol < b.symbol;
      });
      if (candidates.size() > beam) candidates.resize(beam);

      HypothesisPool extended;
      for (const Candidate& c : candidates) {
        const Hypothesis& parent = current[c.hyp];
        if (c.symbol == static_cast<std::size_t>(kBlank)) {
          Hypothesis h = parent;
          h.score = c.score;
          next_frame.merge(std::move(h));
          continue;
        }
        Hypothesis h;
        h.tokens = parent.tokens;
        h.tokens.push_back(static_cast<Token>(c.symbol));
        h.emit_frames = parent.emit_frames;
        h.emit_frames.push_back(t);
        h.pred = model.prediction().step(parent.pred, static_cast<Token>(c.symbol));
        h.pred_proj = joint.project_prediction(h.pred.output);
        h.score = c.score;
        extended.merge(std::move(h));
      }
      current = std::move(extended).take_top(std::numeric_limits<std::size_t>::max());
    }
    // Symbol cap reached: forced advance without a blank.
    for (auto& h : current) next_frame.merge(std::move(h));
    active = std::move(next_frame).take_top(beam);
  }

  const Hypothesis& best = active.front();
  return {best.tokens, best.emit_frames, best.score};
}

DecodeResult decode_dual(const FeatureSequence& raw, const CascadedModel& model, EncoderMode mode,
                         std::size_t beam, std::size_t max_symbols_per_frame) {
  Tape::Pause pause;
  const EncoderOutput e = model.encode(raw, mode);
  if (beam == 0) return greedy_decode(e, model, max_symbols_per_frame);
  return beam_decode(e, model, beam, max_symbols_per_frame);
}

// ---- streaming -------------------------------------------------------------------------

StreamingSession::StreamingSession(const CascadedModel& model, std::size_t max_symbols_per_frame)
    : model_(model),
      max_symbols_(max_symbols_per_frame),
      raw_(0, model.config().frontend.input_dim, kBaseFramePeriodMs) {
  if (max_symbols_ < 1) throw InputError("streaming: max_symbols_per_frame must be >= 1");
  pred_ = model_.prediction().start();
  pred_proj_ = model_.joint().project_prediction(pred_.output);
}

std::vector<Token> StreamingSession::decode_frames(const EncoderOutput& e, std::size_t end) {
  std::vector<Token> emitted;
  const Tensor enc = model_.joint().project_encoder(slice_rows(e.features, frames_decoded_, end));
  for (std::size_t t = frames_decoded_; t < end; ++t) {
    const std::size_t before = emitted.size();
    greedy_frame(model_, row(enc, t - frames_decoded_), t, max_symbols_, pred_, pred_proj_, result_,
                 &emitted);
    for (std::size_t i = before; i < emitted.size(); ++i) {
      emissions_.push_back({emitted[i], t, raw_.num_frames});
    }
  }
  frames_decoded_ = end;
  return emitted;
}

std::vector<Token> StreamingSession::push(std::span<const double> frame) {
  if (finalized_) throw StateError("streaming: push after finalize");
  if (frame.size() != raw_.dim) {
    throw DimensionError("streaming: frame has " + std::to_string(frame.size()) +
                         " values, model expects " + std::to_string(raw_.dim));
  }
  Tape::Pause pause;
  raw_.data.insert(raw_.data.end(), frame.begin(), frame.end());
  ++raw_.num_frames;

  const auto& fe = model_.config().frontend;
  const std::size_t n = raw_.num_frames;
  const std::size_t complete_stacked = n >= fe.stack ? (n - fe.stack) / fe.stride + 1 : 0;
  const std::size_t r = model_.config().encoder.time_reduction_factor();
  const std::size_t ready = complete_stacked / r;
  std::vector<Token> emitted;
  if (ready > frames_decoded_) {
    // Encode only fully-determined stacked frames; causality makes the rows
    // identical to the offline encoding.
    FeatureSequence stacked = model_.prepare(raw_);
    stacked = stacked.prefix(ready * r);
    const EncoderOutput e = causal_encode(stacked, model_.causal_encoder());
    emitted = decode_frames(e, ready);
  }
  partial_lengths_.push_back(result_.tokens.size());
  return emitted;
}

std::vector<Token> StreamingSession::finalize() {
  if (finalized_) throw StateError("streaming: finalize called twice");
  finalized_ = true;
  if (raw_.num_frames == 0) return {};
  Tape::Pause pause;
  const EncoderOutput e = causal_encode(model_.prepare(raw_), model_.causal_encoder());
  return decode_frames(e, e.num_frames());
}

}  // namespace casr
