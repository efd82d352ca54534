#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "casr/encoders.hpp"
#include "casr/frontend.hpp"
#include "casr/transducer.hpp"

namespace casr {

inline constexpr std::size_t kDefaultMaxSymbolsPerFrame = 4;

struct DecodeResult {
  TokenSequence tokens;
  std::vector<std::size_t> emit_frames;  // encoder frame of each token, non-decreasing
  double score = 0.0;                    // total log-probability of the chosen path(s)

  bool operator==(const DecodeResult&) const = default;
};

// Per-frame greedy rule: take the argmax (ties to the lowest id, blank first);
// blank advances the frame, a label is emitted and the frame is retried, at
// most `max_symbols_per_frame` times before a forced advance.
DecodeResult greedy_decode(const EncoderOutput& e, const CascadedModel& model,
                           std::size_t max_symbols_per_frame = kDefaultMaxSymbolsPerFrame);

// Frame-synchronous beam search. Hypotheses with identical label sequences
// are merged by log-sum-exp. beam == 1 reproduces greedy_decode.
DecodeResult beam_decode(const EncoderOutput& e, const CascadedModel& model, std::size_t beam,
                         std::size_t max_symbols_per_frame = kDefaultMaxSymbolsPerFrame);

// Decodes from e^s (causal) or e^a (noncausal) with the shared decoder.
// beam == 0 selects greedy decoding.
DecodeResult decode_dual(const FeatureSequence& raw, const CascadedModel& model, EncoderMode mode,
                         std::size_t beam,
                         std::size_t max_symbols_per_frame = kDefaultMaxSymbolsPerFrame);

/// Incremental causal decoding, one raw input frame at a time.
///
/// An encoder frame is decoded as soon as every raw frame it depends on has
/// arrived; `finalize` zero-pads the tail exactly like offline decoding, so
/// the result equals greedy_decode over the full causal encoding.
class StreamingSession {
 public:
  struct Emission {
    Token token;
    std::size_t encoder_frame;
    std::size_t input_frames_seen;  // raw frames pushed when the token appeared
  };

  explicit StreamingSession(const CascadedModel& model,
                            std::size_t max_symbols_per_frame = kDefaultMaxSymbolsPerFrame);

  // Returns tokens emitted because of this frame.
  std::vector<Token> push(std::span<const double> frame);
  std::vector<Token> finalize();

  const DecodeResult& result() const { return result_; }
  const std::vector<Emission>& emissions() const { return emissions_; }
  // Hypothesis length after each pushed frame.
  const std::vector<std::size_t>& partial_lengths() const { return partial_lengths_; }
  std::size_t frames_consumed() const { return raw_.num_frames; }
  bool finalized() const { return finalized_; }

 private:
  std::vector<Token> decode_frames(const EncoderOutput& e, std::size_t end);

  const CascadedModel& model_;
  std::size_t max_symbols_;
  FeatureSequence raw_;
  std::size_t frames_decoded_ = 0;
  PredictionNet::State pred_;
  std::vector<double> pred_proj_;
  DecodeResult result_;
  std::vector<Emission> emissions_;
  std::vector<std::size_t> partial_lengths_;
  bool finalized_ = false;
};

}  // namespace casr
