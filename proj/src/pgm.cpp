#include "naturamap/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace naturamap {

std::vector<std::uint8_t> encode_pgm(const TensorArray& map) {
  if (map.rank() != 2) {
    throw ShapeError("PGM export expects an h x w map, got " + shape_to_string(map.shape()));
  }
  const std::string header =
      "P5\n" + std::to_string(map.dim(1)) + " " + std::to_string(map.dim(0)) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + map.size());
  for (float v : map.values()) {
    const double c = std::isnan(v) ? 0.0 : std::clamp(static_cast<double>(v), 0.0, 1.0);
    out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * c)));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const TensorArray& map) {
  const auto bytes = encode_pgm(map);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

TensorArray side_by_side(const std::vector<TensorArray>& maps, std::size_t gap) {
  if (maps.empty()) throw ShapeError("side_by_side needs at least one map");
  const std::size_t h = maps.front().dim(0);
  std::size_t w = 0;
  for (const auto& m : maps) {
    if (m.rank() != 2 || m.dim(0) != h) {
      throw ShapeError("side_by_side maps must be h x w with equal height");
    }
    w += m.dim(1);
  }
  w += gap * (maps.size() - 1);
  TensorArray out({h, w}, 1.0f);
  std::size_t col = 0;
  for (const auto& m : maps) {
    for (std::size_t r = 0; r < h; ++r) {
      std::copy(m.data() + r * m.dim(1), m.data() + (r + 1) * m.dim(1),
                out.data() + r * w + col);
    }
    col += m.dim(1) + gap;
  }
  return out;
}

}  // namespace naturamap
