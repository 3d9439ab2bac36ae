#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "naturamap/data.hpp"
#include "naturamap/kv.hpp"
#include "naturamap/nn.hpp"

namespace naturamap::model {

using nn::Mode;
using nn::ParamRefs;

enum class Variant { kBaseline, kProposed };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct ArchConfig {
  std::size_t patch_size = 64;
  std::size_t context_size = 256;
  std::size_t in_bands = 10;
  std::size_t context_bands = 3;
  std::size_t geo_bands = 3;
  std::vector<std::size_t> channel_ladder = {8, 16, 32, 64};
  std::size_t geo_latent_channels = 8;
  std::size_t unet_pools = 3;
  std::size_t ae_pools = 5;

  static ArchConfig desk();
  static ArchConfig full_scale();
  // Patch 8, ladder {2, 3, 4, 5}; used by the gradient check.
  static ArchConfig miniature();

  // Throws ConfigError unless the three latent grids coincide.
  void validate() const;

  std::size_t latent_size() const { return patch_size >> unet_pools; }
  std::vector<std::size_t> ae_channels() const;
  std::vector<std::size_t> geo_channels() const;
  std::size_t fused_channels(Variant v) const;

  bool operator==(const ArchConfig&) const = default;
};

inline const std::vector<std::string> kComponents = {
    "unet_enc", "unet_dec", "ae_enc", "ae_dec", "geo_enc"};

// conv3x3 -> BN -> ReLU, twice.
template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const std::string& name, std::size_t in, std::size_t out);

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& dy, bool want_input_grad = true);
  void parameters(ParamRefs<T>& out);
  void buffers(ParamRefs<T>& out);

 private:
  nn::Conv2d<T> conv0_, conv1_;
  nn::BatchNorm2d<T> bn0_, bn1_;
  nn::ReLU<T> relu0_, relu1_;
};

// Stack of conv blocks; block i is followed by a 2x2 max-pool when
// i < pools. Skips are the pre-pool outputs of the pooled blocks.
template <typename T>
class ConvEncoder {
 public:
  struct Output {
    std::vector<Tensor<T>> skips;
    Tensor<T> latent;
  };

  ConvEncoder() = default;
  ConvEncoder(const std::string& name, std::size_t in_channels,
              const std::vector<std::size_t>& channels, std::size_t pools);

  Output forward(const Tensor<T>& x, Mode mode, bool keep_skips);
  // dskips may be empty (no skip gradients). Returns dL/dx.
  Tensor<T> backward(const Tensor<T>& dlatent,
                     const std::vector<Tensor<T>>& dskips,
                     bool want_input_grad = true);
  void parameters(ParamRefs<T>& out);
  void buffers(ParamRefs<T>& out);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return channels_.back(); }

 private:
  std::size_t in_ = 0;
  std::vector<std::size_t> channels_;
  std::vector<ConvBlock<T>> blocks_;
  std::vector<nn::MaxPool2<T>> pools_;
};

// Transposed-conv upsampling, skip concatenation, conv block; 1x1 head to a
// single raw-logit channel.
template <typename T>
class UNetDecoder {
 public:
  UNetDecoder() = default;
  UNetDecoder(const std::string& name, std::size_t in_channels,
              const std::vector<std::size_t>& ladder, std::size_t ups);

  Tensor<T> forward(const Tensor<T>& latent, const std::vector<Tensor<T>>& skips,
                    Mode mode);
  // Returns dL/dlatent; fills dskips (same order as the encoder's skips).
  Tensor<T> backward(const Tensor<T>& dlogits, std::vector<Tensor<T>>& dskips);
  void parameters(ParamRefs<T>& out);
  void buffers(ParamRefs<T>& out);

  std::size_t in_channels() const { return in_; }
  nn::Conv2d<T>& head() { return head_; }

 private:
  std::size_t in_ = 0;
  std::vector<std::size_t> skip_widths_;
  std::vector<nn::ConvTranspose2x2<T>> ups_;
  std::vector<ConvBlock<T>> blocks_;
  nn::Conv2d<T> head_;
};

// Nearest-neighbour upsample + conv-BN-ReLU per level, 1x1 head, sigmoid.
template <typename T>
class AEDecoder {
 public:
  AEDecoder() = default;
  AEDecoder(const std::string& name, std::size_t in_channels,
            const std::vector<std::size_t>& channels, std::size_t out_channels);

  Tensor<T> forward(const Tensor<T>& latent, Mode mode);
  Tensor<T> backward(const Tensor<T>& drecon);
  void parameters(ParamRefs<T>& out);
  void buffers(ParamRefs<T>& out);

 private:
  struct Level {
    nn::Upsample2<T> up;
    nn::Conv2d<T> conv;
    nn::BatchNorm2d<T> bn;
    nn::ReLU<T> relu;
  };
  std::vector<Level> levels_;
  nn::Conv2d<T> head_;
  nn::Sigmoid<T> sigmoid_;
};

// L_P (+) L_C (+) L_T in that order. Accepts rank-3 (s x s x c) or batched
// rank-4 blocks; throws FusionError on spatial mismatch.
template <typename T>
Tensor<T> fuse_latents(const Tensor<T>& lp, const Tensor<T>& lc,
                       const Tensor<T>& lt);

// All five components of the framework plus configuration. Training code
// mutates parameters in place; inference only reads them.
template <typename T>
class Model {
 public:
  Model() = default;
  Model(const ArchConfig& arch, Variant variant);

  const ArchConfig& arch() const { return arch_; }
  Variant variant() const { return variant_; }
  const std::set<std::string>& frozen() const { return frozen_; }
  bool is_frozen(const std::string& component) const {
    return frozen_.contains(component);
  }
  void freeze(const std::string& component);

  // Frozen components always run with evaluation statistics.
  Mode mode_for(const std::string& component, Mode requested) const;

  ConvEncoder<T> unet_enc, geo_enc, ae_enc;
  UNetDecoder<T> unet_dec;
  AEDecoder<T> ae_dec;

  // Regression head. Batched inputs: patch N x h x w x bands,
  // geo N x h x w x 3 and latent_t N x s x s x c (the AE encoding of the
  // context). geo and latent_t are ignored for the baseline variant.
  Tensor<T> regress(const Tensor<T>& patch, const Tensor<T>* geo,
                    const Tensor<T>* latent_t, Mode mode);
  // Backward of the latest regress call. Returns dL/dlatent_t (empty for the
  // baseline). Gradients of frozen components are still accumulated; the
  // optimizer skips them.
  Tensor<T> regress_backward(const Tensor<T>& dlogits);

  Tensor<T> encode_context(const Tensor<T>& tile, Mode mode);
  void encode_context_backward(const Tensor<T>& dlatent);
  Tensor<T> decode_context(const Tensor<T>& latent, Mode mode);
  Tensor<T> decode_context_backward(const Tensor<T>& drecon);

  ParamRefs<T> parameters(const std::string& component);
  ParamRefs<T> buffers(const std::string& component);
  ParamRefs<T> all_parameters();
  void zero_grad();

  // Named tensors: parameters and batch-norm buffers.
  std::map<std::string, Tensor<T>> state(const std::string& component);
  std::map<std::string, Tensor<T>> state();
  void load_state(const std::map<std::string, Tensor<T>>& state,
                  bool require_all = true);

  template <typename U>
  Model<U> cast() const;

 private:
  ArchConfig arch_;
  Variant variant_ = Variant::kProposed;
  std::set<std::string> frozen_;
  std::vector<std::size_t> fused_widths_;
  std::vector<Tensor<T>> skip_cache_;
};

using ModelBundle = Model<float>;

// Kaiming fan-in normal init for weights, zero biases, unit BN scale.
ModelBundle init_parameters(const ArchConfig& arch, std::uint64_t seed,
                            Variant variant = Variant::kProposed);

// Marks a component frozen: no parameter updates, no BN statistic updates.
ModelBundle& freeze(ModelBundle& bundle, const std::string& component);

// Single-sample inference in evaluation mode: logits clamped to [0, 1],
// shape h x w.
TensorArray predict(ModelBundle& bundle, const data::Sample& sample,
                    Variant variant);

// Batched raw logits (N x h x w x 1) in evaluation mode.
TensorArray predict_logits(ModelBundle& bundle,
                           const std::vector<const data::Sample*>& batch,
                           Variant variant);

// FNV-1a over the raw bytes of a component's parameters and buffers.
std::uint64_t checksum(ModelBundle& bundle, const std::string& component);

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_checkpoint(const std::filesystem::path& dir);

kv::Entries arch_entries(const ArchConfig& arch);
// Applies one arch key; returns false when the key is not an arch key.
bool apply_arch_entry(ArchConfig& arch, const std::string& key,
                      const std::string& value);

}  // namespace naturamap::model
