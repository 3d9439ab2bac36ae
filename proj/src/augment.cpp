#include <algorithm>
#include <cmath>

#include "naturamap/data.hpp"

namespace naturamap::data {

TensorArray flip_horizontal(const TensorArray& t) {
  const std::size_t H = t.dim(0), W = t.dim(1);
  const std::size_t C = t.rank() == 3 ? t.dim(2) : 1;
  TensorArray out(t.shape());
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      const float* src = t.data() + (r * W + c) * C;
      std::copy(src, src + C, out.data() + (r * W + (W - 1 - c)) * C);
    }
  }
  return out;
}

TensorArray flip_vertical(const TensorArray& t) {
  const std::size_t H = t.dim(0);
  const std::size_t row = t.size() / H;
  TensorArray out(t.shape());
  for (std::size_t r = 0; r < H; ++r) {
    std::copy(t.data() + r * row, t.data() + (r + 1) * row,
              out.data() + (H - 1 - r) * row);
  }
  return out;
}

void erase_rectangle(TensorArray& patch, std::size_t row, std::size_t col,
                     std::size_t h, std::size_t w) {
  const std::size_t H = patch.dim(0), W = patch.dim(1), C = patch.dim(2);
  if (row + h > H || col + w > W) {
    throw ShapeError("erase rectangle exceeds the patch");
  }
  std::vector<double> mean(C, 0.0);
  for (std::size_t i = 0; i < H * W; ++i) {
    for (std::size_t c = 0; c < C; ++c) mean[c] += patch[i * C + c];
  }
  for (auto& m : mean) m /= static_cast<double>(H * W);
  for (std::size_t r = row; r < row + h; ++r) {
    for (std::size_t c = col; c < col + w; ++c) {
      for (std::size_t b = 0; b < C; ++b) {
        patch.at(r, c, b) = static_cast<float>(mean[b]);
      }
    }
  }
}

Sample augment(const Sample& sample, std::mt19937_64& rng,
               const AugmentConfig& cfg, AugmentRecord* record) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentRecord rec;
  rec.hflip = unit(rng) < cfg.p_hflip;
  rec.vflip = unit(rng) < cfg.p_vflip;
  rec.erased = unit(rng) < cfg.p_erase;

  Sample out = sample;
  auto apply = [&](auto&& flip) {
    out.patch = flip(out.patch);
    out.context = flip(out.context);
    out.geo = flip(out.geo);
    out.target = flip(out.target);
    out.water_mask = flip(out.water_mask);
  };
  if (rec.hflip) apply(flip_horizontal);
  if (rec.vflip) apply(flip_vertical);

  if (rec.erased) {
    const std::size_t H = out.patch.dim(0), W = out.patch.dim(1);
    const double area = static_cast<double>(H * W) *
                        (cfg.erase_min_area +
                         (cfg.erase_max_area - cfg.erase_min_area) * unit(rng));
    const double aspect = std::exp(std::log(0.5) + std::log(4.0) * unit(rng));
    rec.erase_h = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(std::sqrt(area * aspect))), 1, H);
    rec.erase_w = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(area / rec.erase_h)), 1, W);
    rec.erase_row = std::uniform_int_distribution<std::size_t>(
        0, H - rec.erase_h)(rng);
    rec.erase_col = std::uniform_int_distribution<std::size_t>(
        0, W - rec.erase_w)(rng);
    erase_rectangle(out.patch, rec.erase_row, rec.erase_col, rec.erase_h,
                    rec.erase_w);
  }
  if (record) *record = rec;
  return out;
}

}  // namespace naturamap::data
