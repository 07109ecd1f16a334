#include <algorithm>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "binary_io.hpp"
#include "dbkd/data.hpp"
#include "dbkd/errors.hpp"

namespace dbkd {

namespace {
constexpr char kMagic[4] = {'D', 'B', 'D', 'S'};
// v1 stores payloads as f64 so normalized windows round-trip bit-exactly.
constexpr std::uint16_t kVersion = 1;

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large files.
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}
}  // namespace

std::string encode_dataset(std::span<const WindowedSample> samples) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    if (s.window.size() != s.channels * s.length) throw DimensionError("dataset: window size mismatch");
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.label));
    w.put<std::uint32_t>(s.subject_id);
    w.put<double>(s.start_s);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.channels));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.length));
    for (double v : s.window) w.put<double>(v);
  }
  std::string bytes = w.take();
  const std::uint32_t crc = crc_of(bytes);
  detail::ByteWriter tail;
  tail.put<std::uint32_t>(crc);
  bytes += tail.bytes();
  return bytes;
}

std::vector<WindowedSample> decode_dataset(std::span<const char> bytes) {
  detail::ByteReader r(bytes, "dataset");
  if (r.get_bytes(4, "magic") != std::string_view(kMagic, 4)) throw FormatError("dataset: bad magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion) throw FormatError("dataset: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("record count");
  std::vector<WindowedSample> out;
  out.reserve(std::min<std::size_t>(count, r.remaining() / 21));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string region = "record " + std::to_string(i);
    WindowedSample s;
    const auto label = r.get<std::uint8_t>(region + " label");
    if (label > 1) throw FormatError("dataset: " + region + " has invalid label " + std::to_string(label));
    s.label = static_cast<Label>(label);
    s.subject_id = r.get<std::uint32_t>(region + " subject id");
    s.start_s = r.get<double>(region + " start time");
    s.channels = r.get<std::uint32_t>(region + " channel count");
    s.length = r.get<std::uint32_t>(region + " window length");
    const std::size_t values = s.channels * s.length;
    r.need(values * sizeof(double), region + " payload");
    s.window.resize(values);
    for (double& v : s.window) v = r.get<double>(region + " payload");
    out.push_back(std::move(s));
  }
  const std::size_t body = r.position();
  const auto stored = r.get<std::uint32_t>("trailing CRC32");
  if (r.remaining() != 0) throw FormatError("dataset: " + std::to_string(r.remaining()) + " trailing bytes");
  const std::uint32_t actual = crc_of(std::string_view(bytes.data(), body));
  if (stored != actual) throw FormatError("dataset: CRC32 mismatch");
  return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const WindowedSample> samples) {
  const std::string bytes = encode_dataset(samples);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write dataset " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<WindowedSample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read dataset " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

}  // namespace dbkd
