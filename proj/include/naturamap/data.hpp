#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "naturamap/geo.hpp"
#include "naturamap/tensor.hpp"

namespace naturamap::data {

inline constexpr std::size_t kPatchBands = 10;
inline constexpr std::size_t kContextBands = 3;
// Context channels are these patch bands, in order.
inline constexpr std::size_t kContextBandIndex[kContextBands] = {3, 2, 1};
// Band driving the local term of the synthetic label.
inline constexpr std::size_t kLabelBand = 3;
// 10 m pixels expressed in degrees.
inline constexpr double kPixelSizeDeg = 10.0 / 111320.0;

struct SynthParams {
  std::size_t patch_size = 64;
  std::size_t context_size = 256;
  std::size_t n_sinusoids = 8;
  std::size_t water_band = 7;
  double water_threshold = 0.85;
  double w_local = 0.5;
  double w_ctx = 0.3;
  double w_geo = 0.2;
  double lat_min = -60.0;
  double lat_max = 70.0;
  std::uint64_t seed = 0;

  // Throws ConfigError when the invariants do not hold.
  void validate() const;
};

struct Sample {
  TensorArray patch;       // h x w x 10, values in [0, 1]
  TensorArray context;     // 4h x 4w x 3, values in [0, 1]
  TensorArray geo;         // h x w x 3
  TensorArray target;      // h x w, naturalness in [0, 1]
  TensorArray water_mask;  // h x w, 1 = water (excluded)
  geo::GeoPoint center;
  std::uint64_t sample_seed = 0;

  std::size_t height() const { return target.dim(0); }
  std::size_t width() const { return target.dim(1); }
};

// Smooth geo term of the synthetic label, in [0, 1].
double geo_label_term(double lat_deg, double lon_deg);

// Deterministic in (params.seed, sample_seed). center_override replaces the
// drawn center (the draws still happen so the band fields are unchanged).
Sample generate_sample(const SynthParams& params, std::uint64_t sample_seed,
                       std::optional<geo::GeoPoint> center_override = {});

// Centered window of a rank-2 or rank-3 tile; the origin rounds down when the
// margin is odd.
TensorArray center_crop(const TensorArray& tile, std::size_t size);

// ---------------------------------------------------------------------------
// Dataset layout on disk.

inline constexpr int kDatasetFormatVersion = 1;
inline const std::vector<std::string> kSplits = {"train", "val", "test"};

struct DatasetManifest {
  std::filesystem::path root;
  std::map<std::string, std::vector<std::uint64_t>> splits;
  SynthParams params;
  int format_version = kDatasetFormatVersion;

  const std::vector<std::uint64_t>& ids(const std::string& split) const;
  std::filesystem::path sample_dir(const std::string& split,
                                   std::uint64_t id) const;
};

std::string sample_dir_name(std::uint64_t id);

DatasetManifest generate_dataset(const SynthParams& params,
                                 std::size_t n_train, std::size_t n_val,
                                 std::size_t n_test,
                                 const std::filesystem::path& root,
                                 bool overwrite = false,
                                 std::size_t workers = 1);

std::string format_manifest(const DatasetManifest& manifest);
void write_manifest(const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& root);

void write_sample(const std::filesystem::path& dir, const Sample& sample);
Sample read_sample(const std::filesystem::path& dir);
std::vector<Sample> load_split(const DatasetManifest& manifest,
                               const std::string& split);

// ---------------------------------------------------------------------------
// Imbalance-aware sampling.

inline constexpr std::size_t kWeightBins = 10;

// Inverse-frequency weights over 10 equal-width bins of each sample's mean
// target, normalized to sum 1.
std::vector<double> compute_sample_weights(
    const std::vector<double>& mean_targets);
std::vector<double> compute_sample_weights(const DatasetManifest& manifest,
                                           const std::string& split);

double mean_target(const Sample& sample);

class WeightedSampler {
 public:
  explicit WeightedSampler(const std::vector<double>& weights);
  // n indices drawn with replacement, proportional to the weights.
  std::vector<std::size_t> draw(std::mt19937_64& rng, std::size_t n);

 private:
  std::discrete_distribution<std::size_t> dist_;
};

// ---------------------------------------------------------------------------
// Augmentation.

struct AugmentConfig {
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double p_erase = 0.5;
  double erase_min_area = 0.02;
  double erase_max_area = 0.20;
};

struct AugmentRecord {
  bool hflip = false;
  bool vflip = false;
  bool erased = false;
  std::size_t erase_row = 0, erase_col = 0, erase_h = 0, erase_w = 0;
};

// Flips act jointly on every spatial array; erasing touches the patch only.
Sample augment(const Sample& sample, std::mt19937_64& rng,
               const AugmentConfig& cfg, AugmentRecord* record = nullptr);

TensorArray flip_horizontal(const TensorArray& t);
TensorArray flip_vertical(const TensorArray& t);

// Fills the rectangle of every band with that band's patch mean.
void erase_rectangle(TensorArray& patch, std::size_t row, std::size_t col,
                     std::size_t h, std::size_t w);

}  // namespace naturamap::data
