#include "naturamap/model.hpp"

#include <algorithm>
#include <cstring>
#include <random>
#include <sstream>

#include "naturamap/kv.hpp"
#include "naturamap/ntsr.hpp"

namespace naturamap::model {
namespace fs = std::filesystem;

std::string to_string(Variant v) {
  return v == Variant::kBaseline ? "baseline" : "proposed";
}

Variant parse_variant(const std::string& s) {
  if (s == "baseline") return Variant::kBaseline;
  if (s == "proposed") return Variant::kProposed;
  throw ConfigError("unknown variant '" + s + "' (baseline|proposed)");
}

// ---------------------------------------------------------------------------
// ArchConfig

ArchConfig ArchConfig::desk() { return ArchConfig{}; }

ArchConfig ArchConfig::full_scale() {
  ArchConfig a;
  a.patch_size = 256;
  a.context_size = 1024;
  a.channel_ladder = {64, 128, 256, 512};
  a.geo_latent_channels = 64;
  return a;
}

ArchConfig ArchConfig::miniature() {
  ArchConfig a;
  a.patch_size = 8;
  a.context_size = 32;
  a.channel_ladder = {2, 3, 4, 5};
  a.geo_latent_channels = 2;
  return a;
}

void ArchConfig::validate() const {
  if (channel_ladder.empty()) throw ConfigError("channel ladder is empty");
  for (auto c : channel_ladder) {
    if (c == 0) throw ConfigError("channel ladder entries must be positive");
  }
  if (in_bands == 0 || context_bands == 0 || geo_bands == 0 ||
      geo_latent_channels == 0) {
    throw ConfigError("band and latent widths must be positive");
  }
  if (context_size != 4 * patch_size) {
    throw ConfigError("context_size must be 4 x patch_size");
  }
  if (unet_pools + 1 != channel_ladder.size()) {
    throw ConfigError("unet_pools must equal ladder length - 1");
  }
  if (ae_pools != channel_ladder.size() + 1) {
    throw ConfigError("ae_pools must equal ladder length + 1");
  }
  if (unet_pools >= 32 || ae_pools >= 32 ||
      patch_size % (std::size_t{1} << unet_pools) != 0 ||
      context_size % (std::size_t{1} << ae_pools) != 0) {
    throw ConfigError("patch/context sizes must be divisible by 2^pools");
  }
  if ((patch_size >> unet_pools) != (context_size >> ae_pools) ||
      latent_size() == 0) {
    throw ConfigError(
        "latent grids do not coincide: patch " + std::to_string(patch_size) +
        "/2^" + std::to_string(unet_pools) + " vs context " +
        std::to_string(context_size) + "/2^" + std::to_string(ae_pools));
  }
}

std::vector<std::size_t> ArchConfig::ae_channels() const {
  std::vector<std::size_t> c{(channel_ladder.front() + 1) / 2};
  c.insert(c.end(), channel_ladder.begin(), channel_ladder.end());
  return c;
}

std::vector<std::size_t> ArchConfig::geo_channels() const {
  std::vector<std::size_t> c(channel_ladder.size(), geo_latent_channels);
  c.front() = std::max<std::size_t>(1, geo_latent_channels / 2);
  return c;
}

std::size_t ArchConfig::fused_channels(Variant v) const {
  const std::size_t p = channel_ladder.back();
  return v == Variant::kBaseline ? p : p + geo_latent_channels + p;
}

kv::Entries arch_entries(const ArchConfig& a) {
  std::string ladder;
  for (std::size_t i = 0; i < a.channel_ladder.size(); ++i) {
    if (i) ladder += ",";
    ladder += std::to_string(a.channel_ladder[i]);
  }
  return {{"patch_size", std::to_string(a.patch_size)},
          {"context_size", std::to_string(a.context_size)},
          {"in_bands", std::to_string(a.in_bands)},
          {"context_bands", std::to_string(a.context_bands)},
          {"geo_bands", std::to_string(a.geo_bands)},
          {"channel_ladder", ladder},
          {"geo_latent_channels", std::to_string(a.geo_latent_channels)},
          {"unet_pools", std::to_string(a.unet_pools)},
          {"ae_pools", std::to_string(a.ae_pools)}};
}

bool apply_arch_entry(ArchConfig& a, const std::string& k,
                      const std::string& v) {
  if (k == "patch_size") a.patch_size = kv::to_uint(k, v);
  else if (k == "context_size") a.context_size = kv::to_uint(k, v);
  else if (k == "in_bands") a.in_bands = kv::to_uint(k, v);
  else if (k == "context_bands") a.context_bands = kv::to_uint(k, v);
  else if (k == "geo_bands") a.geo_bands = kv::to_uint(k, v);
  else if (k == "geo_latent_channels") a.geo_latent_channels = kv::to_uint(k, v);
  else if (k == "unet_pools") a.unet_pools = kv::to_uint(k, v);
  else if (k == "ae_pools") a.ae_pools = kv::to_uint(k, v);
  else if (k == "channel_ladder") {
    a.channel_ladder.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      a.channel_ladder.push_back(kv::to_uint(k, item));
    }
  } else {
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// ConvBlock

template <typename T>
ConvBlock<T>::ConvBlock(const std::string& name, std::size_t in,
                        std::size_t out)
    : conv0_(name + ".conv0", in, out, 3),
      conv1_(name + ".conv1", out, out, 3),
      bn0_(name + ".bn0", out),
      bn1_(name + ".bn1", out) {}

template <typename T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x, Mode mode) {
  auto h = relu0_.forward(bn0_.forward(conv0_.forward(x), mode));
  return relu1_.forward(bn1_.forward(conv1_.forward(h), mode));
}

template <typename T>
Tensor<T> ConvBlock<T>::backward(const Tensor<T>& dy, bool want_input_grad) {
  auto g = conv1_.backward(bn1_.backward(relu1_.backward(dy)));
  return conv0_.backward(bn0_.backward(relu0_.backward(g)), want_input_grad);
}

template <typename T>
void ConvBlock<T>::parameters(ParamRefs<T>& out) {
  conv0_.parameters(out);
  bn0_.parameters(out);
  conv1_.parameters(out);
  bn1_.parameters(out);
}

template <typename T>
void ConvBlock<T>::buffers(ParamRefs<T>& out) {
  bn0_.buffers(out);
  bn1_.buffers(out);
}

// ---------------------------------------------------------------------------
// ConvEncoder

template <typename T>
ConvEncoder<T>::ConvEncoder(const std::string& name, std::size_t in_channels,
                            const std::vector<std::size_t>& channels,
                            std::size_t pools)
    : in_(in_channels), channels_(channels), pools_(pools) {
  if (pools > channels.size()) throw ConfigError("more pools than blocks");
  std::size_t prev = in_channels;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    blocks_.emplace_back(name + ".b" + std::to_string(i), prev, channels[i]);
    prev = channels[i];
  }
}

template <typename T>
typename ConvEncoder<T>::Output ConvEncoder<T>::forward(const Tensor<T>& x,
                                                        Mode mode,
                                                        bool keep_skips) {
  if (x.rank() != 4 || x.dim(3) != in_) {
    throw ShapeError("encoder expects N x H x W x " + std::to_string(in_) +
                     ", got " + shape_to_string(x.shape()));
  }
  Output out;
  Tensor<T> h = x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = blocks_[i].forward(h, mode);
    if (i < pools_.size()) {
      if (keep_skips) out.skips.push_back(h);
      h = pools_[i].forward(h);
    }
  }
  out.latent = std::move(h);
  return out;
}

template <typename T>
Tensor<T> ConvEncoder<T>::backward(const Tensor<T>& dlatent,
                                   const std::vector<Tensor<T>>& dskips,
                                   bool want_input_grad) {
  Tensor<T> g = dlatent;
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    if (i < pools_.size()) {
      g = pools_[i].backward(g);
      if (i < dskips.size()) {
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += dskips[i][k];
      }
    }
    g = blocks_[i].backward(g, want_input_grad || i > 0);
  }
  return g;
}

template <typename T>
void ConvEncoder<T>::parameters(ParamRefs<T>& out) {
  for (auto& b : blocks_) b.parameters(out);
}

template <typename T>
void ConvEncoder<T>::buffers(ParamRefs<T>& out) {
  for (auto& b : blocks_) b.buffers(out);
}

// ---------------------------------------------------------------------------
// UNetDecoder

template <typename T>
UNetDecoder<T>::UNetDecoder(const std::string& name, std::size_t in_channels,
                            const std::vector<std::size_t>& ladder,
                            std::size_t ups)
    : in_(in_channels),
      skip_widths_(ladder.begin(), ladder.begin() + static_cast<long>(ups)),
      head_(name + ".head", ladder.front(), 1, 1) {
  std::size_t prev = in_channels;
  for (std::size_t level = ups; level-- > 0;) {
    const std::size_t c = ladder[level];
    const std::string tag = name + ".u" + std::to_string(level);
    ups_.emplace_back(tag + ".up", prev, c);
    blocks_.emplace_back(tag, 2 * c, c);
    prev = c;
  }
}

template <typename T>
Tensor<T> UNetDecoder<T>::forward(const Tensor<T>& latent,
                                  const std::vector<Tensor<T>>& skips,
                                  Mode mode) {
  if (latent.rank() != 4 || latent.dim(3) != in_) {
    throw ShapeError("decoder expects " + std::to_string(in_) +
                     " latent channels, got " + shape_to_string(latent.shape()));
  }
  if (skips.size() != skip_widths_.size()) {
    throw ShapeError("decoder expects " + std::to_string(skip_widths_.size()) +
                     " skips, got " + std::to_string(skips.size()));
  }
  Tensor<T> h = latent;
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    const std::size_t level = ups_.size() - 1 - i;
    auto up = ups_[i].forward(h);
    if (skips[level].shape() != up.shape()) {
      throw ShapeError("skip " + std::to_string(level) + " has shape " +
                       shape_to_string(skips[level].shape()) + ", expected " +
                       shape_to_string(up.shape()));
    }
    h = blocks_[i].forward(nn::concat_channels<T>({&up, &skips[level]}), mode);
  }
  return head_.forward(h);
}

template <typename T>
Tensor<T> UNetDecoder<T>::backward(const Tensor<T>& dlogits,
                                   std::vector<Tensor<T>>& dskips) {
  dskips.assign(skip_widths_.size(), {});
  Tensor<T> g = head_.backward(dlogits);
  for (std::size_t i = ups_.size(); i-- > 0;) {
    const std::size_t level = ups_.size() - 1 - i;
    g = blocks_[i].backward(g);
    auto parts = nn::split_channels(g, {skip_widths_[level], skip_widths_[level]});
    dskips[level] = std::move(parts[1]);
    g = ups_[i].backward(parts[0]);
  }
  return g;
}

template <typename T>
void UNetDecoder<T>::parameters(ParamRefs<T>& out) {
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    ups_[i].parameters(out);
    blocks_[i].parameters(out);
  }
  head_.parameters(out);
}

template <typename T>
void UNetDecoder<T>::buffers(ParamRefs<T>& out) {
  for (auto& b : blocks_) b.buffers(out);
}

// ---------------------------------------------------------------------------
// AEDecoder

template <typename T>
AEDecoder<T>::AEDecoder(const std::string& name, std::size_t in_channels,
                        const std::vector<std::size_t>& channels,
                        std::size_t out_channels)
    : head_(name + ".head", channels.back(), out_channels, 1) {
  std::size_t prev = in_channels;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const std::string tag = name + ".l" + std::to_string(i);
    levels_.push_back(Level{{},
                            nn::Conv2d<T>(tag + ".conv", prev, channels[i], 3),
                            nn::BatchNorm2d<T>(tag + ".bn", channels[i]),
                            {}});
    prev = channels[i];
  }
}

template <typename T>
Tensor<T> AEDecoder<T>::forward(const Tensor<T>& latent, Mode mode) {
  Tensor<T> h = latent;
  for (auto& l : levels_) {
    h = l.relu.forward(l.bn.forward(l.conv.forward(l.up.forward(h)), mode));
  }
  return sigmoid_.forward(head_.forward(h));
}

template <typename T>
Tensor<T> AEDecoder<T>::backward(const Tensor<T>& drecon) {
  Tensor<T> g = head_.backward(sigmoid_.backward(drecon));
  for (std::size_t i = levels_.size(); i-- > 0;) {
    auto& l = levels_[i];
    g = l.up.backward(l.conv.backward(l.bn.backward(l.relu.backward(g))));
  }
  return g;
}

template <typename T>
void AEDecoder<T>::parameters(ParamRefs<T>& out) {
  for (auto& l : levels_) {
    l.conv.parameters(out);
    l.bn.parameters(out);
  }
  head_.parameters(out);
}

template <typename T>
void AEDecoder<T>::buffers(ParamRefs<T>& out) {
  for (auto& l : levels_) l.bn.buffers(out);
}

// ---------------------------------------------------------------------------
// Fusion

template <typename T>
Tensor<T> fuse_latents(const Tensor<T>& lp, const Tensor<T>& lc,
                       const Tensor<T>& lt) {
  auto batched = [](const Tensor<T>& t) {
    if (t.rank() == 3) return t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
    if (t.rank() == 4) return t;
    throw FusionError("latent blocks must be rank 3 or 4, got " +
                      shape_to_string(t.shape()));
  };
  const auto p = batched(lp), c = batched(lc), t = batched(lt);
  for (const auto* other : {&c, &t}) {
    if (other->dim(0) != p.dim(0) || other->dim(1) != p.dim(1) ||
        other->dim(2) != p.dim(2)) {
      throw FusionError("latent spatial mismatch: " + shape_to_string(lp.shape()) +
                        " vs " + shape_to_string(other == &c ? lc.shape()
                                                             : lt.shape()));
    }
  }
  auto fused = nn::concat_channels<T>({&p, &c, &t});
  if (lp.rank() == 3) {
    return fused.reshaped({p.dim(1), p.dim(2), fused.dim(3)});
  }
  return fused;
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
Model<T>::Model(const ArchConfig& arch, Variant variant)
    : arch_(arch), variant_(variant) {
  arch_.validate();
  const auto& ladder = arch_.channel_ladder;
  unet_enc = ConvEncoder<T>("unet_enc", arch_.in_bands, ladder, arch_.unet_pools);
  geo_enc = ConvEncoder<T>("geo_enc", arch_.geo_bands, arch_.geo_channels(),
                           arch_.unet_pools);
  const auto ae_ch = arch_.ae_channels();
  ae_enc = ConvEncoder<T>("ae_enc", arch_.context_bands, ae_ch, arch_.ae_pools);
  std::vector<std::size_t> dec_ch(ae_ch.rbegin() + 1, ae_ch.rend());
  dec_ch.push_back(ae_ch.front());
  ae_dec = AEDecoder<T>("ae_dec", ae_ch.back(), dec_ch, arch_.context_bands);
  unet_dec = UNetDecoder<T>("unet_dec", arch_.fused_channels(variant), ladder,
                            arch_.unet_pools);
  if (variant == Variant::kBaseline) {
    fused_widths_ = {ladder.back()};
  } else {
    fused_widths_ = {ladder.back(), arch_.geo_latent_channels, ae_ch.back()};
  }
}

template <typename T>
void Model<T>::freeze(const std::string& component) {
  if (std::find(kComponents.begin(), kComponents.end(), component) ==
      kComponents.end()) {
    throw ConfigError("unknown component '" + component + "'");
  }
  frozen_.insert(component);
}

template <typename T>
Mode Model<T>::mode_for(const std::string& component, Mode requested) const {
  return is_frozen(component) ? Mode::kEval : requested;
}

template <typename T>
Tensor<T> Model<T>::regress(const Tensor<T>& patch, const Tensor<T>* geo,
                            const Tensor<T>* latent_t, Mode mode) {
  auto enc = unet_enc.forward(patch, mode_for("unet_enc", mode), true);
  Tensor<T> fused;
  if (variant_ == Variant::kProposed) {
    if (!geo || !latent_t) {
      throw ConfigError("proposed variant needs geo grid and context latent");
    }
    auto lc = geo_enc.forward(*geo, mode_for("geo_enc", mode), false).latent;
    fused = fuse_latents(enc.latent, lc, *latent_t);
  } else {
    fused = std::move(enc.latent);
  }
  return unet_dec.forward(fused, enc.skips, mode_for("unet_dec", mode));
}

template <typename T>
Tensor<T> Model<T>::regress_backward(const Tensor<T>& dlogits) {
  std::vector<Tensor<T>> dskips;
  auto dl = unet_dec.backward(dlogits, dskips);
  if (variant_ == Variant::kBaseline) {
    unet_enc.backward(dl, dskips, false);
    return {};
  }
  auto parts = nn::split_channels(dl, fused_widths_);
  unet_enc.backward(parts[0], dskips, false);
  geo_enc.backward(parts[1], {}, false);
  return std::move(parts[2]);
}

template <typename T>
Tensor<T> Model<T>::encode_context(const Tensor<T>& tile, Mode mode) {
  return ae_enc.forward(tile, mode_for("ae_enc", mode), false).latent;
}

template <typename T>
void Model<T>::encode_context_backward(const Tensor<T>& dlatent) {
  ae_enc.backward(dlatent, {}, false);
}

template <typename T>
Tensor<T> Model<T>::decode_context(const Tensor<T>& latent, Mode mode) {
  return ae_dec.forward(latent, mode_for("ae_dec", mode));
}

template <typename T>
Tensor<T> Model<T>::decode_context_backward(const Tensor<T>& drecon) {
  return ae_dec.backward(drecon);
}

template <typename T>
ParamRefs<T> Model<T>::parameters(const std::string& component) {
  ParamRefs<T> out;
  if (component == "unet_enc") unet_enc.parameters(out);
  else if (component == "unet_dec") unet_dec.parameters(out);
  else if (component == "ae_enc") ae_enc.parameters(out);
  else if (component == "ae_dec") ae_dec.parameters(out);
  else if (component == "geo_enc") geo_enc.parameters(out);
  else throw ConfigError("unknown component '" + component + "'");
  return out;
}

template <typename T>
ParamRefs<T> Model<T>::buffers(const std::string& component) {
  ParamRefs<T> out;
  if (component == "unet_enc") unet_enc.buffers(out);
  else if (component == "unet_dec") unet_dec.buffers(out);
  else if (component == "ae_enc") ae_enc.buffers(out);
  else if (component == "ae_dec") ae_dec.buffers(out);
  else if (component == "geo_enc") geo_enc.buffers(out);
  else throw ConfigError("unknown component '" + component + "'");
  return out;
}

template <typename T>
ParamRefs<T> Model<T>::all_parameters() {
  ParamRefs<T> out;
  for (const auto& c : kComponents) {
    auto p = parameters(c);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto* p : all_parameters()) p->grad.fill(T{0});
}

template <typename T>
std::map<std::string, Tensor<T>> Model<T>::state(const std::string& component) {
  std::map<std::string, Tensor<T>> out;
  for (auto* p : parameters(component)) out[p->name] = p->value;
  for (auto* p : buffers(component)) out[p->name] = p->value;
  return out;
}

template <typename T>
std::map<std::string, Tensor<T>> Model<T>::state() {
  std::map<std::string, Tensor<T>> out;
  for (const auto& c : kComponents) out.merge(state(c));
  return out;
}

template <typename T>
void Model<T>::load_state(const std::map<std::string, Tensor<T>>& state,
                          bool require_all) {
  for (const auto& c : kComponents) {
    auto refs = parameters(c);
    auto bufs = buffers(c);
    refs.insert(refs.end(), bufs.begin(), bufs.end());
    for (auto* p : refs) {
      auto it = state.find(p->name);
      if (it == state.end()) {
        if (require_all) throw ConfigError("missing tensor '" + p->name + "'");
        continue;
      }
      if (it->second.shape() != p->value.shape()) {
        throw ConfigError("tensor '" + p->name + "' has shape " +
                          shape_to_string(it->second.shape()) + ", expected " +
                          shape_to_string(p->value.shape()));
      }
      p->value = it->second;
    }
  }
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out(arch_, variant_);
  for (const auto& c : frozen_) out.freeze(c);
  std::map<std::string, Tensor<U>> converted;
  for (auto& [name, t] : const_cast<Model<T>*>(this)->state()) {
    converted[name] = t.template cast<U>();
  }
  out.load_state(converted);
  return out;
}

template class ConvBlock<float>;
template class ConvBlock<double>;
template class ConvEncoder<float>;
template class ConvEncoder<double>;
template class UNetDecoder<float>;
template class UNetDecoder<double>;
template class AEDecoder<float>;
template class AEDecoder<double>;
template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Tensor<float> fuse_latents(const Tensor<float>&, const Tensor<float>&,
                                    const Tensor<float>&);
template Tensor<double> fuse_latents(const Tensor<double>&,
                                     const Tensor<double>&,
                                     const Tensor<double>&);

// ---------------------------------------------------------------------------
// Bundle-level operations

ModelBundle init_parameters(const ArchConfig& arch, std::uint64_t seed,
                            Variant variant) {
  ModelBundle bundle(arch, variant);
  std::mt19937_64 rng(seed);
  for (auto* p : bundle.all_parameters()) {
    const auto& n = p->name;
    if (n.size() < 7 || n.compare(n.size() - 7, 7, ".weight") != 0) continue;
    const double fan_in = static_cast<double>(p->value.dim(0));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : p->value.values()) v = static_cast<float>(dist(rng));
  }
  return bundle;
}

ModelBundle& freeze(ModelBundle& bundle, const std::string& component) {
  bundle.freeze(component);
  return bundle;
}

namespace {

TensorArray stack(const std::vector<const TensorArray*>& items) {
  Shape shape = items.front()->shape();
  if (shape.size() == 2) shape.push_back(1);
  Shape batched{items.size()};
  batched.insert(batched.end(), shape.begin(), shape.end());
  TensorArray out(batched);
  const std::size_t stride = items.front()->size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->size() != stride) throw ShapeError("ragged batch");
    std::copy(items[i]->data(), items[i]->data() + stride,
              out.data() + i * stride);
  }
  return out;
}

}  // namespace

TensorArray predict_logits(ModelBundle& bundle,
                           const std::vector<const data::Sample*>& batch,
                           Variant variant) {
  if (variant != bundle.variant()) {
    throw ConfigError("bundle was built for the " + to_string(bundle.variant()) +
                      " variant, asked to predict " + to_string(variant));
  }
  std::vector<const TensorArray*> patches;
  for (const auto* s : batch) patches.push_back(&s->patch);
  const auto patch = stack(patches);
  if (variant == Variant::kBaseline) {
    return bundle.regress(patch, nullptr, nullptr, Mode::kEval);
  }
  std::vector<const TensorArray*> geos, contexts;
  for (const auto* s : batch) {
    if (s->geo.empty() || s->context.empty()) {
      throw ConfigError("proposed variant needs geo and context arrays");
    }
    geos.push_back(&s->geo);
    contexts.push_back(&s->context);
  }
  const auto geo = stack(geos);
  // One context at a time keeps the latent independent of batch composition.
  std::vector<TensorArray> latents;
  std::vector<const TensorArray*> latent_refs;
  for (const auto* c : contexts) {
    latents.push_back(bundle.encode_context(stack({c}), Mode::kEval));
  }
  for (const auto& l : latents) latent_refs.push_back(&l);
  Shape lshape = latents.front().shape();
  lshape[0] = latents.size();
  TensorArray latent(lshape);
  for (std::size_t i = 0; i < latents.size(); ++i) {
    std::copy(latents[i].data(), latents[i].data() + latents[i].size(),
              latent.data() + i * latents[i].size());
  }
  return bundle.regress(patch, &geo, &latent, Mode::kEval);
}

TensorArray predict(ModelBundle& bundle, const data::Sample& sample,
                    Variant variant) {
  auto logits = predict_logits(bundle, {&sample}, variant);
  TensorArray out({logits.dim(1), logits.dim(2)});
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(logits[i], 0.0f, 1.0f);
  }
  return out;
}

std::uint64_t checksum(ModelBundle& bundle, const std::string& component) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [name, t] : bundle.state(component)) {
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.size() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoints: a directory of NTSR files plus manifest.txt.

namespace {
constexpr const char* kCheckpointFormat = "naturamap-checkpoint";
}

void save_checkpoint(ModelBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  std::ostringstream m;
  m << "format=" << kCheckpointFormat << "\n";
  m << "version=" << kCheckpointVersion << "\n";
  m << "variant=" << to_string(bundle.variant()) << "\n";
  for (const auto& [k, v] : arch_entries(bundle.arch())) m << k << "=" << v << "\n";
  std::string frozen;
  for (const auto& c : bundle.frozen()) frozen += (frozen.empty() ? "" : ",") + c;
  m << "frozen=" << frozen << "\n";
  for (const auto& [name, t] : bundle.state()) {
    const std::string file = name + ".ntsr";
    write_tensor(dir / file, t);
    m << "param." << name << "=" << file << "\n";
  }
  kv::write_file(dir / "manifest.txt", m.str());
}

ModelBundle load_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.txt")) {
    throw IoError("no checkpoint manifest in " + dir.string());
  }
  const auto entries = kv::read_file(dir / "manifest.txt");
  ArchConfig arch;
  Variant variant = Variant::kProposed;
  std::vector<std::string> frozen;
  std::map<std::string, std::string> files;
  bool format_seen = false;
  for (const auto& [k, v] : entries) {
    if (k == "format") {
      if (v != kCheckpointFormat) throw FormatError("not a checkpoint: " + dir.string());
      format_seen = true;
    } else if (k == "version") {
      if (kv::to_int(k, v) != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + v);
      }
    } else if (k == "variant") {
      variant = parse_variant(v);
    } else if (k == "frozen") {
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) frozen.push_back(item);
      }
    } else if (k.rfind("param.", 0) == 0) {
      files[k.substr(6)] = v;
    } else if (!apply_arch_entry(arch, k, v)) {
      throw FormatError("unknown checkpoint key '" + k + "'");
    }
  }
  if (!format_seen) throw FormatError("checkpoint manifest lacks format line");
  ModelBundle bundle(arch, variant);
  for (const auto& c : frozen) bundle.freeze(c);
  std::map<std::string, TensorArray> state;
  for (const auto& [name, file] : files) state[name] = read_tensor(dir / file);
  bundle.load_state(state);
  return bundle;
}

}  // namespace naturamap::model
