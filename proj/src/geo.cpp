#include "naturamap/geo.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace naturamap::geo {

double normalize_longitude(double lon_deg) {
  if (!std::isfinite(lon_deg)) {
    throw InvalidCoordinateError("longitude is not finite");
  }
  double wrapped = std::fmod(lon_deg + 180.0, 360.0);
  if (wrapped < 0.0) wrapped += 360.0;
  wrapped -= 180.0;
  // fmod can land exactly on +180 after rounding.
  if (wrapped >= 180.0) wrapped -= 360.0;
  return wrapped;
}

SinCos encode_longitude(double lon_deg, LonEncoding mode) {
  const double lon = normalize_longitude(lon_deg);
  const double scale = mode == LonEncoding::kFullCircle ? 1.0 : 2.0;
  const double angle = scale * std::numbers::pi * lon / 180.0;
  return {std::sin(angle), std::cos(angle)};
}

double encode_latitude(double lat_deg) {
  if (!std::isfinite(lat_deg) || lat_deg < -90.0 || lat_deg > 90.0) {
    throw InvalidCoordinateError("latitude " + std::to_string(lat_deg) +
                                 " outside [-90, 90]");
  }
  return lat_deg / 90.0;
}

TensorArray build_geo_grid(const GeoPoint& center, std::size_t h,
                           std::size_t w, double pixel_size_deg,
                           LonEncoding mode) {
  if (h == 0 || w == 0) throw ShapeError("geo grid extents must be >= 1");
  if (!(pixel_size_deg >= 0.0)) {
    throw ConfigError("pixel size must be non-negative");
  }
  TensorArray grid({h, w, 3});
  const double row_mid = (static_cast<double>(h) - 1.0) / 2.0;
  const double col_mid = (static_cast<double>(w) - 1.0) / 2.0;

  std::vector<SinCos> lon_codes(w);
  for (std::size_t j = 0; j < w; ++j) {
    const double lon =
        center.lon_deg + (static_cast<double>(j) - col_mid) * pixel_size_deg;
    lon_codes[j] = encode_longitude(lon, mode);
  }
  for (std::size_t i = 0; i < h; ++i) {
    const double lat =
        center.lat_deg + (row_mid - static_cast<double>(i)) * pixel_size_deg;
    const auto lat_code = static_cast<float>(encode_latitude(lat));
    for (std::size_t j = 0; j < w; ++j) {
      grid.at(i, j, 0) = static_cast<float>(lon_codes[j].sin);
      grid.at(i, j, 1) = static_cast<float>(lon_codes[j].cos);
      grid.at(i, j, 2) = lat_code;
    }
  }
  return grid;
}

}  // namespace naturamap::geo
