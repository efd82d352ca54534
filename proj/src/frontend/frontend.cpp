#include "casr/frontend.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "casr/binary_io.hpp"
#include "casr/errors.hpp"

namespace casr {

using json = nlohmann::json;

namespace {

constexpr char kFeatMagic[4] = {'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatVersion = 1;

void append_utterance(Utterance& dst, const Utterance& src) {
  const std::size_t offset = dst.features.num_frames;
  dst.features.data.insert(dst.features.data.end(), src.features.data.begin(),
                           src.features.data.end());
  dst.features.num_frames += src.features.num_frames;
  dst.tokens.insert(dst.tokens.end(), src.tokens.begin(), src.tokens.end());
  for (std::size_t f : src.end_frames) dst.end_frames.push_back(f + offset);
}

}  // namespace

void validate_tokens(const TokenSequence& tokens, std::size_t vocab_size) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 1 || static_cast<std::size_t>(tokens[i]) > vocab_size) {
      throw InputError("token " + std::to_string(tokens[i]) + " at position " + std::to_string(i) +
                       " outside [1, " + std::to_string(vocab_size) + "]");
    }
  }
}

FeatureSequence FeatureSequence::prefix(std::size_t t) const {
  if (t > num_frames) throw ContractError("prefix longer than sequence");
  FeatureSequence out(t, dim, frame_period_ms);
  std::copy_n(data.begin(), t * dim, out.data.begin());
  return out;
}

void SynthTaskSpec::validate() const {
  if (vocab_size < 2) throw InputError("synth: vocab_size must be >= 2");
  if (feature_dim < 1) throw InputError("synth: feature_dim must be >= 1");
  if (frames_per_token < 1) throw InputError("synth: frames_per_token must be >= 1");
  if (!(noise_sigma >= 0.0)) throw InputError("synth: noise_sigma must be >= 0");
}

std::vector<double> token_mean(const SynthTaskSpec& spec, Token v) {
  Rng rng = Rng::stream(spec.seed, "token-mean", static_cast<std::uint64_t>(v));
  std::vector<double> mu(spec.feature_dim);
  for (double& m : mu) m = rng.normal();
  return mu;
}

Utterance synth_utterance(const SynthTaskSpec& spec, std::size_t length_tokens, Rng& rng) {
  spec.validate();
  Utterance u;
  const std::size_t d = spec.feature_dim;
  u.features = FeatureSequence(0, d, kBaseFramePeriodMs);
  if (length_tokens == 0) {
    u.features = FeatureSequence(1, d, kBaseFramePeriodMs);
    return u;
  }
  std::vector<std::vector<double>> means(spec.vocab_size + 1);
  for (std::size_t i = 0; i < length_tokens; ++i) {
    const auto v = static_cast<Token>(rng.below(spec.vocab_size) + 1);
    std::size_t duration = spec.frames_per_token;
    if (spec.duration_jitter > 0) {
      const auto span = 2 * spec.duration_jitter + 1;
      const auto offset = static_cast<std::ptrdiff_t>(rng.below(span)) -
                          static_cast<std::ptrdiff_t>(spec.duration_jitter);
      duration = static_cast<std::size_t>(
          std::max<std::ptrdiff_t>(1, static_cast<std::ptrdiff_t>(duration) + offset));
    }
    if (means[v].empty()) means[v] = token_mean(spec, v);
    for (std::size_t f = 0; f < duration; ++f) {
      for (std::size_t c = 0; c < d; ++c) {
        const double noise = spec.noise_sigma > 0.0 ? spec.noise_sigma * rng.normal() : 0.0;
        u.features.data.push_back(means[v][c] + noise);
      }
    }
    u.features.num_frames += duration;
    u.tokens.push_back(v);
    u.end_frames.push_back(u.features.num_frames - 1);
  }
  return u;
}

Utterance synth_longform(const SynthTaskSpec& spec, std::size_t n_utterances,
                         std::size_t tokens_each, std::size_t silence_frames, Rng& rng) {
  if (n_utterances < 1) throw InputError("synth_longform: n_utterances must be >= 1");
  Utterance out = synth_utterance(spec, tokens_each, rng);
  for (std::size_t i = 1; i < n_utterances; ++i) {
    Utterance silence;
    silence.features = FeatureSequence(silence_frames, spec.feature_dim, kBaseFramePeriodMs);
    append_utterance(out, silence);
    append_utterance(out, synth_utterance(spec, tokens_each, rng));
  }
  return out;
}

FeatureSequence stack_and_subsample(const FeatureSequence& x, std::size_t stack, std::size_t stride) {
  if (stack < 1 || stride < 1) throw InputError("stack_and_subsample: stack and stride must be >= 1");
  const std::size_t T = x.num_frames, d = x.dim;
  const std::size_t out_t = (T + stride - 1) / stride;
  FeatureSequence y(out_t, stack * d, x.frame_period_ms * static_cast<double>(stride));
  for (std::size_t t = 0; t < out_t; ++t) {
    for (std::size_t s = 0; s < stack; ++s) {
      const std::size_t src = t * stride + s;
      if (src >= T) break;
      std::copy_n(x.frame(src), d, y.frame(t) + s * d);
    }
  }
  return y;
}

// ---- on-disk dataset ------------------------------------------------------------

void write_feature_file(const std::filesystem::path& path, const FeatureSequence& features) {
  ByteWriter w;
  w.put_bytes(std::string_view(kFeatMagic, 4));
  w.put<std::uint32_t>(kFeatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(features.num_frames));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(features.dim));
  w.put<double>(features.frame_period_ms);
  for (double v : features.data) w.put<float>(static_cast<float>(v));
  write_file_bytes(path, w.bytes());
}

FeatureSequence read_feature_file(const std::filesystem::path& path) {
  ByteReader r(read_file_bytes(path));
  if (r.get_bytes(4, "magic") != std::string_view(kFeatMagic, 4)) {
    throw IoError(path.string() + ": bad magic", 0);
  }
  const auto version_at = static_cast<std::int64_t>(r.offset());
  if (r.get<std::uint32_t>("version") != kFeatVersion) {
    throw IoError(path.string() + ": unsupported version", version_at);
  }
  const auto T = r.get<std::uint32_t>("frame count");
  const auto d = r.get<std::uint32_t>("dimension");
  const auto period = r.get<double>("frame period");
  if (T < 1 || d < 1 || !(period > 0.0)) {
    throw IoError(path.string() + ": invalid header", static_cast<std::int64_t>(r.offset()));
  }
  FeatureSequence fs(T, d, period);
  for (double& v : fs.data) v = static_cast<double>(r.get<float>("frame data"));
  if (r.remaining() != 0) {
    throw IoError(path.string() + ": trailing bytes", static_cast<std::int64_t>(r.offset()));
  }
  return fs;
}

std::string manifest_line(const ManifestRecord& record) {
  std::ostringstream transcript;
  for (std::size_t i = 0; i < record.transcript.size(); ++i) {
    if (i) transcript << ' ';
    transcript << record.transcript[i];
  }
  json j;
  j["id"] = record.id;
  j["feature_file"] = record.feature_file;
  j["transcript"] = transcript.str();
  j["end_frames"] = record.end_frames;
  return j.dump();
}

ManifestRecord parse_manifest_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("manifest: ") + e.what());
  }
  try {
    ManifestRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.feature_file = j.at("feature_file").get<std::string>();
    std::istringstream ts(j.at("transcript").get<std::string>());
    std::string tok;
    while (ts >> tok) {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size()) throw InputError("manifest: bad token '" + tok + "'");
      rec.transcript.push_back(static_cast<Token>(v));
    }
    rec.end_frames = j.at("end_frames").get<std::vector<std::size_t>>();
    if (rec.end_frames.size() != rec.transcript.size()) {
      throw InputError("manifest: end_frames and transcript lengths differ for " + rec.id);
    }
    return rec;
  } catch (const json::exception& e) {
    throw InputError(std::string("manifest: ") + e.what());
  } catch (const std::logic_error& e) {
    throw InputError(std::string("manifest: ") + e.what());
  }
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  m.path = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++m.total_lines;
    try {
      m.records.push_back(parse_manifest_line(line));
    } catch (const InputError& e) {
      m.errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

LoadedDataset load_dataset(const std::filesystem::path& manifest_path) {
  Manifest m = read_manifest(manifest_path);
  LoadedDataset ds;
  ds.total = m.total_lines;
  ds.skipped = m.errors.size();
  ds.errors = m.errors;
  const auto base = manifest_path.parent_path();
  for (auto& rec : m.records) {
    try {
      Utterance u;
      u.id = rec.id;
      u.features = read_feature_file(base / rec.feature_file);
      u.tokens = std::move(rec.transcript);
      u.end_frames = std::move(rec.end_frames);
      ds.utterances.push_back(std::move(u));
    } catch (const IoError& e) {
      ++ds.skipped;
      ds.errors.push_back(rec.id + ": " + e.what());
    }
  }
  return ds;
}

void write_dataset(const std::filesystem::path& out_dir, const std::vector<Utterance>& utterances) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::ostringstream manifest;
  for (const auto& u : utterances) {
    const std::string file = u.id + ".feat";
    write_feature_file(out_dir / file, u.features);
    manifest << manifest_line({u.id, file, u.tokens, u.end_frames}) << '\n';
  }
  const std::string text = manifest.str();
  write_file_bytes(out_dir / "manifest.jsonl", std::vector<char>(text.begin(), text.end()));
}

}  // namespace casr
