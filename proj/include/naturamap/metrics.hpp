#pragma once

#include <optional>
#include <string>
#include <vector>

#include "naturamap/model.hpp"

namespace naturamap::metrics {

// Means over pixels with mask == 0; nullopt when every pixel is masked.
std::optional<double> masked_mae(const TensorArray& pred,
                                 const TensorArray& target,
                                 const TensorArray& mask);
std::optional<double> masked_mse(const TensorArray& pred,
                                 const TensorArray& target,
                                 const TensorArray& mask);

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double data_range = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;
};

struct SsimResult {
  double value = 0.0;
  std::size_t windows = 0;  // SSIM-map positions averaged
  bool fallback = false;    // no water-free window existed; all were used
};

// Normalized 1-D Gaussian taps.
std::vector<double> gaussian_window(std::size_t size, double sigma);

// Mean SSIM over "valid" window positions (no padding) whose window contains
// no masked pixel. Throws ConfigError when the image is smaller than the
// window.
SsimResult mssim(const TensorArray& pred, const TensorArray& target,
                 const TensorArray& mask, const SsimParams& params = {});

struct SampleMetrics {
  std::uint64_t sample_id = 0;
  bool defined = false;  // false for all-water samples
  double mae = 0.0, mse = 0.0, mssim = 0.0;
  bool mssim_fallback = false;
  std::size_t land_pixels = 0, total_pixels = 0;
};

struct EvalReport {
  std::vector<SampleMetrics> samples;
  double mae = 0.0;    // pixel-weighted over land pixels
  double mse = 0.0;    // pixel-weighted over land pixels
  double mssim = 0.0;  // mean over defined samples
  std::size_t land_pixels = 0;
  std::size_t total_pixels = 0;
  std::size_t undefined_samples = 0;
  double mask_coverage = 0.0;  // fraction of pixels excluded as water

  std::string table() const;
  std::string summary() const;
};

SampleMetrics score_sample(const TensorArray& pred, const data::Sample& sample);

// Scores externally produced h x w predictions.
EvalReport evaluate_predictions(const std::vector<TensorArray>& preds,
                                const std::vector<data::Sample>& samples);

// Runs predict per sample. Throws ConfigError on an empty split.
EvalReport evaluate(model::ModelBundle& bundle,
                    const std::vector<data::Sample>& samples,
                    model::Variant variant, std::size_t batch_size = 16);

}  // namespace naturamap::metrics
