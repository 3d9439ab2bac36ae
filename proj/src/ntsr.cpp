#include "naturamap/ntsr.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace naturamap {
namespace {

constexpr char kMagic[4] = {'N', 'T', 'S', 'R'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::size_t ntsr_header_size(std::size_t ndim) { return 10 + 4 * ndim; }

std::vector<std::uint8_t> encode_tensor(const TensorArray& t) {
  if (t.rank() == 0 || t.rank() > 255) {
    throw ShapeError("NTSR supports ranks 1..255, got " +
                     std::to_string(t.rank()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(ntsr_header_size(t.rank()) + 4 * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kNtsrVersion);
  out.push_back(kNtsrDtypeFloat32);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  out.insert(out.end(), 3, 0);
  for (std::size_t e : t.shape()) {
    if (e > 0xFFFFFFFFu) throw ShapeError("extent exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(e));
  }
  for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

TensorArray decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 10) throw CorruptFileError("NTSR header truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad NTSR magic");
  }
  if (bytes[4] != kNtsrVersion) {
    throw FormatError("unsupported NTSR version " + std::to_string(bytes[4]));
  }
  if (bytes[5] != kNtsrDtypeFloat32) {
    throw FormatError("unsupported NTSR dtype " + std::to_string(bytes[5]));
  }
  const std::size_t ndim = bytes[6];
  if (ndim == 0) throw FormatError("NTSR rank must be >= 1");
  const std::size_t header = ntsr_header_size(ndim);
  if (bytes.size() < header) throw CorruptFileError("NTSR extents truncated");

  Shape shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i) {
    shape[i] = get_u32(bytes.data() + 10 + 4 * i);
    if (shape[i] == 0) throw FormatError("NTSR extent is zero");
  }
  const std::size_t count = shape_numel(shape);
  if (bytes.size() - header != 4 * count) {
    throw CorruptFileError("NTSR payload has " +
                           std::to_string(bytes.size() - header) +
                           " bytes, expected " + std::to_string(4 * count));
  }
  AlignedVector<float> data(count);
  const std::uint8_t* p = bytes.data() + header;
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(get_u32(p + 4 * i));
  }
  return TensorArray(std::move(shape), std::move(data));
}

void write_tensor(const std::filesystem::path& path, const TensorArray& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

TensorArray read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kFormat) {
      throw FormatError(path.string() + ": " + e.what());
    }
    if (e.kind() == ErrorKind::kCorruptFile) {
      throw CorruptFileError(path.string() + ": " + e.what());
    }
    throw;
  }
}

}  // namespace naturamap
