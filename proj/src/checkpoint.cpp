// Checkpoint layout (little-endian):
//   "DBKD" | u16 version | u32 config length | config JSON text
//   | u64 init seed | u32 tensor count
//   | per tensor: u32 rank, u32 dims[rank], f64 data[prod(dims)]

#include <fstream>
#include <iterator>

#include "binary_io.hpp"
#include "dbkd/errors.hpp"
#include "dbkd/model.hpp"

namespace dbkd {

namespace {
constexpr char kMagic[4] = {'D', 'B', 'K', 'D'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::string encode_checkpoint(const Model& model) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put<std::uint16_t>(kVersion);
  const std::string text = model.config.to_text();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text);
  w.put<std::uint64_t>(model.seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.params.size()));
  for (const Tensor& p : model.params) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : p.data) w.put<double>(v);
  }
  return w.take();
}

Model decode_checkpoint(std::span<const char> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.get_bytes(4, "magic") != std::string_view(kMagic, 4)) throw FormatError("checkpoint: bad magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto text_len = r.get<std::uint32_t>("config length");
  const std::string text(r.get_bytes(text_len, "config text"));

  // A structurally valid model skeleton fixes the expected tensor shapes.
  Model model;
  try {
    model = build_model(ModelConfig::from_text(text), 0);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: embedded config invalid: ") + e.what());
  }
  model.seed = r.get<std::uint64_t>("seed");
  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != model.params.size()) {
    throw FormatError("checkpoint: " + std::to_string(count) + " tensors, config implies " +
                      std::to_string(model.params.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    Tensor& p = model.params[i];
    const std::string region = "tensor " + std::to_string(i);
    const auto rank = r.get<std::uint32_t>(region + " rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.get<std::uint32_t>(region + " dims"));
    if (shape != p.shape) {
      throw FormatError("checkpoint: " + region + " has shape " + to_string(shape) + ", expected " +
                        to_string(p.shape));
    }
    r.need(p.size() * sizeof(double), region + " data");
    for (double& v : p.data) v = r.get<double>(region + " data");
    p.grad.reset();
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace dbkd
