#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casr/decoder.hpp"
#include "casr/frontend.hpp"
#include "casr/transducer.hpp"

namespace casr {

enum class EditOp { kMatch, kSubstitution, kInsertion, kDeletion };

struct AlignedPair {
  EditOp op;
  std::optional<std::size_t> ref_index;  // empty for insertions
  std::optional<std::size_t> hyp_index;  // empty for deletions
};

struct WerBreakdown {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_len = 0;
  double wer = 0.0;
  std::vector<AlignedPair> alignment;  // in sequence order

  std::size_t errors() const { return substitutions + insertions + deletions; }
};

// Unit-cost Levenshtein alignment. Backtrace prefers diagonal, then
// deletion, then insertion, so ties resolve the same way every time.
WerBreakdown edit_distance_align(const TokenSequence& ref, const TokenSequence& hyp);

// wer = errors / max(1, ref_len).
double wer_ratio(std::size_t errors, std::size_t ref_len);

/// Maps encoder frames back to the raw input timebase.
struct FrameMap {
  std::size_t stack = 1;
  std::size_t stride = 1;
  std::size_t reduction = 1;
  std::size_t num_input_frames = 0;

  static FrameMap of(const CascadedModel& model, std::size_t num_input_frames);
  // Last real input frame encoder frame `t` depends on.
  std::size_t input_frame(std::size_t encoder_frame) const;
};

struct LatencyStats {
  std::vector<double> delays_ms;  // one per correctly recognized token
  double p50_ms = 0.0;
  double p90_ms = 0.0;
  // Stabilization delay: last hypothesis change minus last speech frame (p90
  // over utterances). An endpoint-latency proxy, not a real endpointer.
  double ep_proxy_ms = 0.0;
  std::vector<double> ep_delays_ms;
  bool empty = true;  // no correct tokens; p50/p90 are then meaningless zeros
};

// Nearest-rank percentile: the value at 1-based rank ceil(q * n) of the sorted sample.
double nearest_rank(std::vector<double> values, double q);

LatencyStats emission_latency(const DecodeResult& result, const std::vector<std::size_t>& truth_end_frames,
                              const WerBreakdown& alignment, const FrameMap& map,
                              double frame_period_ms);

// Pools delays from several utterances and recomputes the percentiles.
LatencyStats pool_latency(const std::vector<LatencyStats>& parts);

struct CorpusReport {
  WerBreakdown totals;  // alignment left empty
  LatencyStats latency;
  EncoderMode mode = EncoderMode::kCausal;
  std::size_t beam = 0;
  bool streaming = false;
  std::size_t utterances = 0;
  std::size_t skipped = 0;
};

struct EvalOptions {
  EncoderMode mode = EncoderMode::kCausal;
  std::size_t beam = 0;  // 0 = greedy
  std::size_t max_symbols_per_frame = kDefaultMaxSymbolsPerFrame;
  // Decode through StreamingSession (causal greedy only).
  bool streaming = false;
};

CorpusReport evaluate_utterances(const std::vector<Utterance>& utterances, const CascadedModel& model,
                                 const EvalOptions& options);

// Loads the manifest, skipping unreadable records with a warning on stderr.
// Throws IoError if more than 10% of the records are unreadable.
CorpusReport corpus_eval(const std::filesystem::path& manifest, const CascadedModel& model,
                         const EvalOptions& options);

// {wer, substitutions, insertions, deletions, ref_len, latency: {...}, mode, beam}
nlohmann::json report_json(const CorpusReport& report);

}  // namespace casr
