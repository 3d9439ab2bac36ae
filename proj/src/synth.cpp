#include <algorithm>
#include <cmath>
#include <numbers>

#include "naturamap/data.hpp"

namespace naturamap::data {
namespace {

struct Sinusoid {
  double amplitude;
  int u, v;
  double phase;
};

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t sample_seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(sample_seed),
                    static_cast<std::uint32_t>(sample_seed >> 32)};
  return std::mt19937_64(seq);
}

// Min-max normalized sum of sinusoids over an extent x extent grid.
std::vector<float> synthesize_band(const std::vector<Sinusoid>& waves,
                                   std::size_t extent) {
  const double two_pi = 2.0 * std::numbers::pi;
  const double s = static_cast<double>(extent);
  std::vector<double> field(extent * extent, 0.0);
  for (std::size_t y = 0; y < extent; ++y) {
    for (std::size_t x = 0; x < extent; ++x) {
      double acc = 0.0;
      for (const auto& w : waves) {
        acc += w.amplitude *
               std::sin(two_pi * (w.u * static_cast<double>(x) +
                                  w.v * static_cast<double>(y)) /
                            s +
                        w.phase);
      }
      field[y * extent + x] = acc;
    }
  }
  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  const double min = *lo;
  const double range = *hi - *lo;
  std::vector<float> out(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    out[i] = range > 0.0 ? static_cast<float>((field[i] - min) / range) : 0.0f;
  }
  return out;
}

}  // namespace

void SynthParams::validate() const {
  if (patch_size == 0) throw ConfigError("patch_size must be positive");
  if (context_size != 4 * patch_size) {
    throw ConfigError("context_size must be 4 x patch_size (got " +
                      std::to_string(context_size) + " vs " +
                      std::to_string(patch_size) + ")");
  }
  if (n_sinusoids == 0) throw ConfigError("n_sinusoids must be positive");
  if (water_band >= kPatchBands) throw ConfigError("water_band out of range");
  if (std::abs(w_local + w_ctx + w_geo - 1.0) > 1e-9) {
    throw ConfigError("label weights must sum to 1");
  }
  if (w_local < 0 || w_ctx < 0 || w_geo < 0) {
    throw ConfigError("label weights must be non-negative");
  }
  if (!(lat_min >= -90.0 && lat_max <= 90.0 && lat_min <= lat_max)) {
    throw ConfigError("latitude range must lie in [-90, 90]");
  }
}

double geo_label_term(double lat_deg, double lon_deg) {
  return 0.5 * (1.0 + std::sin(std::numbers::pi * lat_deg / 90.0) *
                          std::cos(std::numbers::pi * lon_deg / 180.0));
}

Sample generate_sample(const SynthParams& params, std::uint64_t sample_seed,
                       std::optional<geo::GeoPoint> center_override) {
  params.validate();
  auto rng = sample_rng(params.seed, sample_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> freq(1, 6);

  geo::GeoPoint center;
  center.lat_deg = params.lat_min + (params.lat_max - params.lat_min) * unit(rng);
  center.lon_deg = -180.0 + 360.0 * unit(rng);
  if (center_override) center = *center_override;

  const std::size_t S = params.context_size;
  const std::size_t h = params.patch_size;
  const std::size_t offset = (S - h) / 2;

  std::vector<std::vector<float>> bands(kPatchBands);
  for (auto& band : bands) {
    std::vector<Sinusoid> waves(params.n_sinusoids);
    for (auto& w : waves) {
      w.amplitude = 1.0 - unit(rng);  // (0, 1]
      w.u = freq(rng);
      w.v = freq(rng);
      w.phase = 2.0 * std::numbers::pi * unit(rng);
    }
    band = synthesize_band(waves, S);
  }

  Sample s;
  s.center = center;
  s.sample_seed = sample_seed;
  s.context = TensorArray({S, S, kContextBands});
  for (std::size_t i = 0; i < S * S; ++i) {
    for (std::size_t c = 0; c < kContextBands; ++c) {
      s.context[i * kContextBands + c] = bands[kContextBandIndex[c]][i];
    }
  }
  s.patch = TensorArray({h, h, kPatchBands});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < h; ++x) {
      const std::size_t src = (y + offset) * S + (x + offset);
      for (std::size_t b = 0; b < kPatchBands; ++b) {
        s.patch.at(y, x, b) = bands[b][src];
      }
    }
  }

  double ctx_sum = 0.0;
  for (float v : bands[kLabelBand]) ctx_sum += v;
  const double ctx_mean = ctx_sum / static_cast<double>(S * S);
  const double geo_term = geo_label_term(center.lat_deg, center.lon_deg);
  const double base = params.w_ctx * ctx_mean + params.w_geo * geo_term;

  s.target = TensorArray({h, h});
  s.water_mask = TensorArray({h, h});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < h; ++x) {
      const double local = s.patch.at(y, x, kLabelBand);
      const double t = params.w_local * local + base;
      s.target.at(y, x) = static_cast<float>(std::clamp(t, 0.0, 1.0));
      s.water_mask.at(y, x) =
          s.patch.at(y, x, params.water_band) > params.water_threshold ? 1.0f
                                                                        : 0.0f;
    }
  }
  s.geo = geo::build_geo_grid(center, h, h, kPixelSizeDeg);
  return s;
}

TensorArray center_crop(const TensorArray& tile, std::size_t size) {
  if (tile.rank() != 2 && tile.rank() != 3) {
    throw ShapeError("center_crop expects a rank-2 or rank-3 tile, got " +
                     shape_to_string(tile.shape()));
  }
  const std::size_t H = tile.dim(0), W = tile.dim(1);
  const std::size_t C = tile.rank() == 3 ? tile.dim(2) : 1;
  if (size == 0 || size > H || size > W) {
    throw ShapeError("crop size " + std::to_string(size) +
                     " exceeds tile extent " + shape_to_string(tile.shape()));
  }
  const std::size_t r0 = (H - size) / 2, c0 = (W - size) / 2;
  Shape shape = tile.rank() == 3 ? Shape{size, size, C} : Shape{size, size};
  TensorArray out(shape);
  for (std::size_t r = 0; r < size; ++r) {
    const float* src = tile.data() + ((r + r0) * W + c0) * C;
    std::copy(src, src + size * C, out.data() + r * size * C);
  }
  return out;
}

}  // namespace naturamap::data
