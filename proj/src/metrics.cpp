#include "naturamap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "naturamap/kv.hpp"

namespace naturamap::metrics {
namespace {

void check_same(const TensorArray& a, const TensorArray& b,
                const TensorArray& m, const char* who) {
  if (a.size() != b.size() || a.size() != m.size()) {
    throw ShapeError(std::string(who) + ": shape mismatch " +
                     shape_to_string(a.shape()) + " / " +
                     shape_to_string(b.shape()) + " / " +
                     shape_to_string(m.shape()));
  }
}

template <typename Fn>
std::optional<double> masked_mean(const TensorArray& pred,
                                  const TensorArray& target,
                                  const TensorArray& mask, Fn&& fn) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] != 0.0f) continue;
    sum += fn(static_cast<double>(pred[i]) - target[i]);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

std::optional<double> masked_mae(const TensorArray& pred,
                                 const TensorArray& target,
                                 const TensorArray& mask) {
  check_same(pred, target, mask, "masked_mae");
  return masked_mean(pred, target, mask, [](double d) { return std::abs(d); });
}

std::optional<double> masked_mse(const TensorArray& pred,
                                 const TensorArray& target,
                                 const TensorArray& mask) {
  check_same(pred, target, mask, "masked_mse");
  return masked_mean(pred, target, mask, [](double d) { return d * d; });
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double mid = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - mid;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

SsimResult mssim(const TensorArray& pred, const TensorArray& target,
                 const TensorArray& mask, const SsimParams& p) {
  check_same(pred, target, mask, "mssim");
  if (pred.rank() < 2) throw ShapeError("mssim expects h x w images");
  const std::size_t H = pred.dim(0), W = pred.dim(1);
  if (pred.size() != H * W) throw ShapeError("mssim expects single-channel maps");
  if (H < p.window || W < p.window) {
    throw ConfigError("image " + shape_to_string(pred.shape()) +
                      " smaller than SSIM window " + std::to_string(p.window));
  }
  const std::size_t k = p.window;
  const std::size_t Ho = H - k + 1, Wo = W - k + 1;
  const auto g = gaussian_window(k, p.sigma);

  // Separable filtering: horizontal pass then vertical pass.
  auto filter = [&](auto&& value) {
    std::vector<double> rows(H * Wo, 0.0), out(Ho * Wo, 0.0);
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < Wo; ++c) {
        double acc = 0.0;
        for (std::size_t t = 0; t < k; ++t) acc += g[t] * value(r * W + c + t);
        rows[r * Wo + c] = acc;
      }
    }
    for (std::size_t r = 0; r < Ho; ++r) {
      for (std::size_t c = 0; c < Wo; ++c) {
        double acc = 0.0;
        for (std::size_t t = 0; t < k; ++t) acc += g[t] * rows[(r + t) * Wo + c];
        out[r * Wo + c] = acc;
      }
    }
    return out;
  };
  auto x = [&](std::size_t i) { return static_cast<double>(pred[i]); };
  auto y = [&](std::size_t i) { return static_cast<double>(target[i]); };
  const auto mu_x = filter(x);
  const auto mu_y = filter(y);
  const auto xx = filter([&](std::size_t i) { return x(i) * x(i); });
  const auto yy = filter([&](std::size_t i) { return y(i) * y(i); });
  const auto xy = filter([&](std::size_t i) { return x(i) * y(i); });

  // Water count per window via a summed-area table.
  std::vector<std::size_t> sat((H + 1) * (W + 1), 0);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      sat[(r + 1) * (W + 1) + c + 1] = (mask[r * W + c] != 0.0f ? 1 : 0) +
                                       sat[r * (W + 1) + c + 1] +
                                       sat[(r + 1) * (W + 1) + c] -
                                       sat[r * (W + 1) + c];
    }
  }
  auto water_in = [&](std::size_t r, std::size_t c) {
    return sat[(r + k) * (W + 1) + c + k] - sat[r * (W + 1) + c + k] -
           sat[(r + k) * (W + 1) + c] + sat[r * (W + 1) + c];
  };

  const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
  const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
  auto ssim_at = [&](std::size_t i) {
    const double mx = mu_x[i], my = mu_y[i];
    const double vx = xx[i] - mx * mx;
    const double vy = yy[i] - my * my;
    const double cov = xy[i] - mx * my;
    return ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
           ((mx * mx + my * my + c1) * (vx + vy + c2));
  };

  SsimResult res;
  double sum = 0.0;
  for (std::size_t r = 0; r < Ho; ++r) {
    for (std::size_t c = 0; c < Wo; ++c) {
      if (water_in(r, c) != 0) continue;
      sum += ssim_at(r * Wo + c);
      ++res.windows;
    }
  }
  if (res.windows == 0) {
    res.fallback = true;
    for (std::size_t i = 0; i < Ho * Wo; ++i) sum += ssim_at(i);
    res.windows = Ho * Wo;
  }
  res.value = sum / static_cast<double>(res.windows);
  return res;
}

SampleMetrics score_sample(const TensorArray& pred, const data::Sample& s) {
  SampleMetrics m;
  m.sample_id = s.sample_seed;
  m.total_pixels = s.target.size();
  for (float v : s.water_mask.values()) m.land_pixels += v == 0.0f ? 1 : 0;
  const auto mae = masked_mae(pred, s.target, s.water_mask);
  if (!mae) return m;
  m.defined = true;
  m.mae = *mae;
  m.mse = *masked_mse(pred, s.target, s.water_mask);
  const auto ss = mssim(pred, s.target, s.water_mask);
  m.mssim = ss.value;
  m.mssim_fallback = ss.fallback;
  return m;
}

namespace {

EvalReport aggregate(std::vector<SampleMetrics> per_sample) {
  EvalReport r;
  r.samples = std::move(per_sample);
  double abs_sum = 0.0, sq_sum = 0.0, ssim_sum = 0.0;
  std::size_t defined = 0;
  for (const auto& m : r.samples) {
    r.total_pixels += m.total_pixels;
    r.land_pixels += m.land_pixels;
    if (!m.defined) {
      ++r.undefined_samples;
      continue;
    }
    abs_sum += m.mae * static_cast<double>(m.land_pixels);
    sq_sum += m.mse * static_cast<double>(m.land_pixels);
    ssim_sum += m.mssim;
    ++defined;
  }
  if (r.land_pixels > 0) {
    r.mae = abs_sum / static_cast<double>(r.land_pixels);
    r.mse = sq_sum / static_cast<double>(r.land_pixels);
  }
  if (defined > 0) r.mssim = ssim_sum / static_cast<double>(defined);
  if (r.total_pixels > 0) {
    r.mask_coverage = 1.0 - static_cast<double>(r.land_pixels) /
                                static_cast<double>(r.total_pixels);
  }
  return r;
}

}  // namespace

EvalReport evaluate_predictions(const std::vector<TensorArray>& preds,
                                const std::vector<data::Sample>& samples) {
  if (samples.empty()) throw ConfigError("cannot evaluate an empty split");
  if (preds.size() != samples.size()) {
    throw ConfigError("prediction/sample count mismatch");
  }
  std::vector<SampleMetrics> per;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    per.push_back(score_sample(preds[i], samples[i]));
  }
  return aggregate(std::move(per));
}

EvalReport evaluate(model::ModelBundle& bundle,
                    const std::vector<data::Sample>& samples,
                    model::Variant variant, std::size_t batch_size) {
  if (samples.empty()) throw ConfigError("cannot evaluate an empty split");
  std::vector<TensorArray> preds;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    std::vector<const data::Sample*> batch;
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) {
      batch.push_back(&samples[i]);
    }
    auto logits = model::predict_logits(bundle, batch, variant);
    const std::size_t h = logits.dim(1), w = logits.dim(2);
    for (std::size_t n = 0; n < batch.size(); ++n) {
      TensorArray p({h, w});
      for (std::size_t i = 0; i < h * w; ++i) {
        p[i] = std::clamp(logits[n * h * w + i], 0.0f, 1.0f);
      }
      preds.push_back(std::move(p));
    }
  }
  return evaluate_predictions(preds, samples);
}

std::string EvalReport::table() const {
  std::ostringstream out;
  out << "sample_id,defined,land_pixels,mae,mse,mssim,mssim_fallback\n";
  for (const auto& m : samples) {
    out << m.sample_id << "," << (m.defined ? 1 : 0) << "," << m.land_pixels
        << "," << kv::format_double(m.mae) << "," << kv::format_double(m.mse)
        << "," << kv::format_double(m.mssim) << "," << (m.mssim_fallback ? 1 : 0)
        << "\n";
  }
  return out.str();
}

std::string EvalReport::summary() const {
  std::ostringstream out;
  out << "samples=" << samples.size() << "\n"
      << "undefined_samples=" << undefined_samples << "\n"
      << "land_pixels=" << land_pixels << "\n"
      << "total_pixels=" << total_pixels << "\n"
      << "mask_coverage=" << kv::format_double(mask_coverage) << "\n"
      << "mae=" << kv::format_double(mae) << "\n"
      << "mse=" << kv::format_double(mse) << "\n"
      << "mssim=" << kv::format_double(mssim) << "\n";
  return out.str();
}

}  // namespace naturamap::metrics
