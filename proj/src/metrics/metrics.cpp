#include "casr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "casr/errors.hpp"

namespace casr {

WerBreakdown edit_distance_align(const TokenSequence& ref, const TokenSequence& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  // d[i][j]: cost of aligning ref[0..i) with hyp[0..j).
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto D = [&d, m](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) D(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) D(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = D(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      D(i, j) = std::min({diag, D(i - 1, j) + 1, D(i, j - 1) + 1});
    }
  }

  WerBreakdown out;
  out.ref_len = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (D(i, j) == D(i - 1, j - 1) + (same ? 0 : 1)) {
        out.alignment.push_back({same ? EditOp::kMatch : EditOp::kSubstitution, i - 1, j - 1});
        if (!same) ++out.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && D(i, j) == D(i - 1, j) + 1) {
      out.alignment.push_back({EditOp::kDeletion, i - 1, std::nullopt});
      ++out.deletions;
      --i;
      continue;
    }
    out.alignment.push_back({EditOp::kInsertion, std::nullopt, j - 1});
    ++out.insertions;
    --j;
  }
  std::reverse(out.alignment.begin(), out.alignment.end());
  out.wer = wer_ratio(out.errors(), n);
  return out;
}

double wer_ratio(std::size_t errors, std::size_t ref_len) {
  return static_cast<double>(errors) / static_cast<double>(std::max<std::size_t>(1, ref_len));
}

// ---- latency ---------------------------------------------------------------------------

FrameMap FrameMap::of(const CascadedModel& model, std::size_t num_input_frames) {
  const auto& c = model.config();
  return {c.frontend.stack, c.frontend.stride, c.encoder.time_reduction_factor(), num_input_frames};
}

std::size_t FrameMap::input_frame(std::size_t encoder_frame) const {
  const std::size_t last_stacked = encoder_frame * reduction + reduction - 1;
  const std::size_t frame = last_stacked * stride + stack - 1;
  // Frames past the end exist only as zero padding.
  if (num_input_frames > 0) return std::min(frame, num_input_frames - 1);
  return frame;
}

double nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

namespace {

void summarize(LatencyStats& s) {
  s.empty = s.delays_ms.empty();
  s.p50_ms = nearest_rank(s.delays_ms, 0.5);
  s.p90_ms = nearest_rank(s.delays_ms, 0.9);
  s.ep_proxy_ms = nearest_rank(s.ep_delays_ms, 0.9);
}

double frame_delta_ms(std::size_t emitted, std::size_t truth, double period) {
  return (static_cast<double>(emitted) - static_cast<double>(truth)) * period;
}

}  // namespace

LatencyStats emission_latency(const DecodeResult& result, const std::vector<std::size_t>& truth_end_frames,
                              const WerBreakdown& alignment, const FrameMap& map,
                              double frame_period_ms) {
  if (result.emit_frames.size() != result.tokens.size()) {
    throw DimensionError("emission_latency: emit_frames and tokens differ in length");
  }
  LatencyStats s;
  for (const AlignedPair& p : alignment.alignment) {
    if (p.op != EditOp::kMatch) continue;
    if (*p.ref_index >= truth_end_frames.size() || *p.hyp_index >= result.emit_frames.size()) {
      throw DimensionError("emission_latency: alignment does not match the inputs");
    }
    const std::size_t emitted = map.input_frame(result.emit_frames[*p.hyp_index]);
    s.delays_ms.push_back(frame_delta_ms(emitted, truth_end_frames[*p.ref_index], frame_period_ms));
  }
  if (!result.emit_frames.empty() && !truth_end_frames.empty()) {
    const std::size_t stable = map.input_frame(result.emit_frames.back());
    s.ep_delays_ms.push_back(frame_delta_ms(stable, truth_end_frames.back(), frame_period_ms));
  }
  summarize(s);
  return s;
}

LatencyStats pool_latency(const std::vector<LatencyStats>& parts) {
  LatencyStats s;
  for (const auto& p : parts) {
    s.delays_ms.insert(s.delays_ms.end(), p.delays_ms.begin(), p.delays_ms.end());
    s.ep_delays_ms.insert(s.ep_delays_ms.end(), p.ep_delays_ms.begin(), p.ep_delays_ms.end());
  }
  summarize(s);
  return s;
}

// ---- corpus evaluation ------------------------------------------------------------------

namespace {

DecodeResult decode_one(const Utterance& u, const CascadedModel& model, const EvalOptions& o) {
  if (!o.streaming) return decode_dual(u.features, model, o.mode, o.beam, o.max_symbols_per_frame);
  StreamingSession session(model, o.max_symbols_per_frame);
  for (std::size_t t = 0; t < u.features.num_frames; ++t) {
    session.push({u.features.frame(t), u.features.dim});
  }
  session.finalize();
  return session.result();
}

}  // namespace

CorpusReport evaluate_utterances(const std::vector<Utterance>& utterances, const CascadedModel& model,
                                 const EvalOptions& options) {
  if (options.streaming && (options.mode != EncoderMode::kCausal || options.beam > 1)) {
    throw InputError("evaluate: streaming decoding is causal and greedy only");
  }
  CorpusReport report;
  report.mode = options.mode;
  report.beam = options.beam;
  report.streaming = options.streaming;
  std::vector<LatencyStats> parts;
  parts.reserve(utterances.size());
  for (const Utterance& u : utterances) {
    const DecodeResult r = decode_one(u, model, options);
    const WerBreakdown w = edit_distance_align(u.tokens, r.tokens);
    report.totals.substitutions += w.substitutions;
    report.totals.insertions += w.insertions;
    report.totals.deletions += w.deletions;
    report.totals.ref_len += w.ref_len;
    if (u.end_frames.size() == u.tokens.size()) {
      parts.push_back(emission_latency(r, u.end_frames, w, FrameMap::of(model, u.features.num_frames),
                                       u.features.frame_period_ms));
    }
  }
  report.totals.wer = wer_ratio(report.totals.errors(), report.totals.ref_len);
  report.latency = pool_latency(parts);
  report.utterances = utterances.size();
  return report;
}

CorpusReport corpus_eval(const std::filesystem::path& manifest, const CascadedModel& model,
                         const EvalOptions& options) {
  LoadedDataset data = load_dataset(manifest);
  for (const auto& e : data.errors) std::cerr << "warning: skipping record: " << e << "\n";
  if (data.skipped * 10 > data.total) {
    throw IoError("corpus_eval: " + std::to_string(data.skipped) + " of " + std::to_string(data.total) +
                      " records unreadable (more than 10%)");
  }
  CorpusReport report = evaluate_utterances(data.utterances, model, options);
  report.skipped = data.skipped;
  return report;
}

nlohmann::json report_json(const CorpusReport& r) {
  nlohmann::json latency = {
      {"p50_ms", r.latency.p50_ms},
      {"p90_ms", r.latency.p90_ms},
      {"ep_proxy_ms", r.latency.ep_proxy_ms},
      {"ep_is_proxy", true},
      {"correct_tokens", r.latency.delays_ms.size()},
      {"empty", r.latency.empty},
  };
  return {
      {"wer", r.totals.wer},
      {"substitutions", r.totals.substitutions},
      {"insertions", r.totals.insertions},
      {"deletions", r.totals.deletions},
      {"ref_len", r.totals.ref_len},
      {"latency", latency},
      {"mode", to_string(r.mode)},
      {"beam", r.beam},
      {"decoder", r.beam == 0 ? "greedy" : "beam"},
      {"streaming", r.streaming},
      {"utterances", r.utterances},
      {"skipped", r.skipped},
  };
}

}  // namespace casr
