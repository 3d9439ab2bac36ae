#pragma once

#include <utility>

#include "naturamap/tensor.hpp"

namespace naturamap::geo {

struct GeoPoint {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
};

// full-circle: angle = pi * lon / 180 (period 360 degrees).
// double-angle: angle = 2 * pi * lon / 180 (period 180 degrees), so antipodal
// longitudes share an encoding.
enum class LonEncoding { kFullCircle, kDoubleAngle };

struct SinCos {
  double sin = 0.0;
  double cos = 1.0;
};

// Wraps into [-180, 180). Throws InvalidCoordinateError on non-finite input.
double normalize_longitude(double lon_deg);

SinCos encode_longitude(double lon_deg,
                        LonEncoding mode = LonEncoding::kFullCircle);

// lat / 90, for lat in [-90, 90].
double encode_latitude(double lat_deg);

// h x w x 3 raster with channels (sin-lon, cos-lon, lat / 90). Pixel (i, j)
// encodes its own center; row 0 is the northern edge. pixel_size_deg == 0
// yields constant planes.
TensorArray build_geo_grid(const GeoPoint& center, std::size_t h,
                           std::size_t w, double pixel_size_deg,
                           LonEncoding mode = LonEncoding::kFullCircle);

}  // namespace naturamap::geo
