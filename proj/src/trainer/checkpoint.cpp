#include <limits>

#include "casr/binary_io.hpp"
#include "casr/errors.hpp"
#include "casr/trainer.hpp"

namespace casr {

namespace {
constexpr char kMagic[4] = {'C', 'A', 'S', 'R'};
}

std::vector<char> encode_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(c.step);
  if (c.config_json.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw IoError("checkpoint: config too large");
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.config_json.size()));
  w.put_bytes(c.config_json);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw IoError("checkpoint: tensor name too long: " + t.name);
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.put_bytes(t.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.tensor.rank()));
    for (std::size_t d : t.tensor.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : t.tensor.values()) w.put<double>(v);
  }
  for (std::uint64_t s : c.rng) w.put<std::uint64_t>(s);
  return w.bytes();
}

Checkpoint decode_checkpoint(std::vector<char> bytes) {
  ByteReader r(std::move(bytes));
  if (r.get_bytes(4, "magic") != std::string_view(kMagic, 4)) throw IoError("checkpoint: bad magic", 0);
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version),
                  static_cast<std::int64_t>(version_at));
  }
  Checkpoint c;
  c.step = r.get<std::uint64_t>("step");
  const auto config_len = r.get<std::uint32_t>("config length");
  c.config_json = r.get_bytes(config_len, "config");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    t.name = r.get_bytes(name_len, "tensor name");
    const auto rank = r.get<std::uint8_t>("tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>("tensor dim");
    const std::size_t n = shape_numel(shape);
    if (n > r.remaining() / sizeof(double)) {
      throw IoError("checkpoint: tensor " + t.name + " runs past the end of the file",
                    static_cast<std::int64_t>(r.offset()));
    }
    std::vector<double> values(n);
    for (auto& v : values) v = r.get<double>("tensor data");
    t.tensor = Tensor(std::move(shape), std::move(values));
    c.tensors.push_back(std::move(t));
  }
  for (auto& s : c.rng) s = r.get<std::uint64_t>("rng state");
  if (r.remaining() != 0) {
    throw IoError("checkpoint: trailing bytes", static_cast<std::int64_t>(r.offset()));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_bytes(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace casr
