#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "naturamap/model.hpp"
#include "naturamap/optim.hpp"

using namespace naturamap;
using namespace naturamap::model;
namespace fs = std::filesystem;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                        double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

bool all_finite(const TensorArray& t) {
  for (float v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

data::Sample mini_sample(std::uint64_t id) {
  data::SynthParams p;
  p.patch_size = 8;
  p.context_size = 32;
  return data::generate_sample(p, id);
}

}  // namespace

TEST_CASE("arch config arithmetic") {
  auto desk = ArchConfig::desk();
  CHECK_NOTHROW(desk.validate());
  CHECK(desk.latent_size() == 8);
  CHECK(desk.ae_channels() == std::vector<std::size_t>{4, 8, 16, 32, 64});
  CHECK(desk.geo_channels() == std::vector<std::size_t>{4, 8, 8, 8});
  CHECK(desk.fused_channels(Variant::kProposed) == 136);
  CHECK(desk.fused_channels(Variant::kBaseline) == 64);

  auto full = ArchConfig::full_scale();
  CHECK_NOTHROW(full.validate());
  CHECK(full.latent_size() == 32);
  CHECK((full.context_size >> full.ae_pools) == 32);
  CHECK(full.ae_channels().back() == 512);
  CHECK(full.geo_channels().back() == 64);
  CHECK(full.fused_channels(Variant::kProposed) == 1088);

  auto mini = ArchConfig::miniature();
  CHECK_NOTHROW(mini.validate());
  CHECK(mini.ae_channels().front() == 1);

  auto bad = desk;
  bad.context_size = 128;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = desk;
  bad.ae_pools = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = desk;
  bad.channel_ladder = {8, 16, 32};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  CHECK(parse_variant("baseline") == Variant::kBaseline);
  CHECK(parse_variant("proposed") == Variant::kProposed);
  CHECK_THROWS_AS(parse_variant("fancy"), ConfigError);
}

TEST_CASE("desk encoder and decoder shapes") {
  std::mt19937_64 rng(1);
  auto bundle = init_parameters(ArchConfig::desk(), 7);
  auto patch = random_tensor<float>({1, 64, 64, 10}, rng, 0, 1);
  auto out = bundle.unet_enc.forward(patch, Mode::kEval, true);
  CHECK(out.latent.shape() == Shape{1, 8, 8, 64});
  REQUIRE(out.skips.size() == 3);
  CHECK(out.skips[0].shape() == Shape{1, 64, 64, 8});
  CHECK(out.skips[1].shape() == Shape{1, 32, 32, 16});
  CHECK(out.skips[2].shape() == Shape{1, 16, 16, 32});

  auto geo = random_tensor<float>({1, 64, 64, 3}, rng);
  CHECK(bundle.geo_enc.forward(geo, Mode::kEval, false).latent.shape() ==
        Shape{1, 8, 8, 8});

  auto tile = random_tensor<float>({1, 256, 256, 3}, rng, 0, 1);
  auto lt = bundle.encode_context(tile, Mode::kEval);
  CHECK(lt.shape() == Shape{1, 8, 8, 64});
  auto recon = bundle.decode_context(lt, Mode::kEval);
  CHECK(recon.shape() == tile.shape());
  for (float v : recon.values()) CHECK((v >= 0.0f && v <= 1.0f));

  auto logits = bundle.regress(patch, &geo, &lt, Mode::kEval);
  CHECK(logits.shape() == Shape{1, 64, 64, 1});

  auto base = init_parameters(ArchConfig::desk(), 7, Variant::kBaseline);
  CHECK(base.unet_dec.in_channels() == 64);
  CHECK(base.regress(patch, nullptr, nullptr, Mode::kEval).shape() ==
        Shape{1, 64, 64, 1});
  CHECK_THROWS_AS(bundle.regress(random_tensor<float>({1, 64, 64, 9}, rng),
                                 &geo, &lt, Mode::kEval),
                  ShapeError);
}

TEST_CASE("full-scale encoder shapes") {
  // The UNet encoder runs at full scale; the 1024-pixel autoencoder and the
  // decoder are covered by config arithmetic and fusion on latent blocks.
  std::mt19937_64 rng(2);
  Model<float> m(ArchConfig::full_scale(), Variant::kProposed);
  auto patch = random_tensor<float>({1, 256, 256, 10}, rng, 0, 1);
  auto out = m.unet_enc.forward(patch, Mode::kEval, false);
  CHECK(out.latent.shape() == Shape{1, 32, 32, 512});
  auto geo = random_tensor<float>({1, 256, 256, 3}, rng);
  CHECK(m.geo_enc.forward(geo, Mode::kEval, false).latent.shape() ==
        Shape{1, 32, 32, 64});
  CHECK(m.unet_dec.in_channels() == 1088);
}

TEST_CASE("zero input stays finite") {
  auto bundle = init_parameters(ArchConfig::desk(), 3);
  TensorArray patch({2, 64, 64, 10});
  auto out = bundle.unet_enc.forward(patch, Mode::kTrain, true);
  CHECK(all_finite(out.latent));
  out = bundle.unet_enc.forward(patch, Mode::kEval, true);
  CHECK(all_finite(out.latent));
}

TEST_CASE("constant geo plane gives constant interior pre-BN activations") {
  auto bundle = init_parameters(ArchConfig::desk(), 3);
  TensorArray grid({1, 16, 16, 3});
  for (std::size_t i = 0; i < 256; ++i) {
    grid[i * 3] = 0.3f;
    grid[i * 3 + 1] = -0.8f;
    grid[i * 3 + 2] = 0.5f;
  }
  nn::Conv2d<float> conv("c", 3, 4, 3);
  std::mt19937_64 rng(4);
  conv.weight.value = random_tensor<float>(conv.weight.value.shape(), rng);
  auto y = conv.forward(grid);
  for (std::size_t r = 1; r < 15; ++r)
    for (std::size_t c = 1; c < 15; ++c)
      for (std::size_t k = 0; k < 4; ++k)
        CHECK(y[(r * 16 + c) * 4 + k] == y[(1 * 16 + 1) * 4 + k]);
}

TEST_CASE("fusion order, widths and errors") {
  std::mt19937_64 rng(5);
  auto lp = random_tensor<float>({8, 8, 64}, rng);
  auto lc = random_tensor<float>({8, 8, 8}, rng);
  auto lt = random_tensor<float>({8, 8, 64}, rng);
  auto fused = fuse_latents(lp, lc, lt);
  CHECK(fused.shape() == Shape{8, 8, 136});
  CHECK(fused.at(3, 4, 0) == lp.at(3, 4, 0));
  CHECK(fused.at(3, 4, 64) == lc.at(3, 4, 0));
  CHECK(fused.at(3, 4, 72) == lt.at(3, 4, 0));
  CHECK(fused.at(3, 4, 135) == lt.at(3, 4, 63));

  TensorArray p32({32, 32, 512}), c32({32, 32, 64}), t32({32, 32, 512});
  CHECK(fuse_latents(p32, c32, t32).shape() == Shape{32, 32, 1088});

  auto big = random_tensor<float>({16, 16, 64}, rng);
  try {
    fuse_latents(lp, lc, big);
    FAIL("expected a fusion error");
  } catch (const FusionError& e) {
    const std::string what = e.what();
    CHECK(what.find("8x8") != std::string::npos);
    CHECK(what.find("16x16") != std::string::npos);
  }
}

TEST_CASE("zero head gives zero logits") {
  auto bundle = init_parameters(ArchConfig::miniature(), 1);
  bundle.unet_dec.head().weight.value.fill(0.0f);
  bundle.unet_dec.head().bias.value.fill(0.0f);
  auto s = mini_sample(0);
  auto logits = predict_logits(bundle, {&s}, Variant::kProposed);
  for (float v : logits.values()) CHECK(v == 0.0f);
}

TEST_CASE("predict range, variant mismatch and determinism") {
  auto proposed = init_parameters(ArchConfig::miniature(), 11);
  auto baseline = init_parameters(ArchConfig::miniature(), 11, Variant::kBaseline);
  auto s = mini_sample(3);
  auto a = predict(proposed, s, Variant::kProposed);
  CHECK(a.shape() == Shape{8, 8});
  for (float v : a.values()) CHECK((v >= 0.0f && v <= 1.0f));
  auto b = predict(proposed, s, Variant::kProposed);
  CHECK(a == b);
  CHECK_THROWS_AS(predict(proposed, s, Variant::kBaseline), ConfigError);
  CHECK_THROWS_AS(predict(baseline, s, Variant::kProposed), ConfigError);
  auto la = predict_logits(proposed, {&s}, Variant::kProposed);
  auto lb = predict_logits(baseline, {&s}, Variant::kBaseline);
  CHECK(!(la == lb));

  // Batched logits equal per-sample logits.
  auto s2 = mini_sample(4);
  auto batched = predict_logits(proposed, {&s, &s2}, Variant::kProposed);
  auto single = predict_logits(proposed, {&s2}, Variant::kProposed);
  for (std::size_t i = 0; i < 64; ++i) CHECK(batched[64 + i] == single[i]);

  data::Sample no_context = s;
  no_context.context = TensorArray();
  CHECK_THROWS_AS(predict(proposed, no_context, Variant::kProposed), ConfigError);
  CHECK_NOTHROW(predict(baseline, no_context, Variant::kBaseline));
}

TEST_CASE("init determinism and freeze semantics") {
  auto a = init_parameters(ArchConfig::miniature(), 42);
  auto b = init_parameters(ArchConfig::miniature(), 42);
  auto c = init_parameters(ArchConfig::miniature(), 43);
  for (const auto& comp : kComponents) {
    CHECK(checksum(a, comp) == checksum(b, comp));
    CHECK(checksum(a, comp) != checksum(c, comp));
  }
  CHECK(a.state() == b.state());
  for (auto* p : a.all_parameters()) {
    if (p->name.ends_with(".bias") || p->name.ends_with(".beta")) {
      for (float v : p->value.values()) CHECK(v == 0.0f);
    }
    if (p->name.ends_with(".gamma")) {
      for (float v : p->value.values()) CHECK(v == 1.0f);
    }
  }
  CHECK_THROWS_AS(freeze(a, "decoder"), ConfigError);
  freeze(a, "ae_enc");
  CHECK(a.is_frozen("ae_enc"));
  CHECK(a.mode_for("ae_enc", Mode::kTrain) == Mode::kEval);
  CHECK(a.mode_for("unet_enc", Mode::kTrain) == Mode::kTrain);

  // A frozen encoder in a training-mode forward keeps its BN statistics.
  const auto before = checksum(a, "ae_enc");
  std::mt19937_64 rng(9);
  auto tile = random_tensor<float>({2, 32, 32, 3}, rng, 0, 1);
  a.encode_context(tile, Mode::kTrain);
  CHECK(checksum(a, "ae_enc") == before);
}

TEST_CASE("checkpoint round trip") {
  auto dir = fs::temp_directory_path() / "naturamap_model_test_ckpt";
  fs::remove_all(dir);
  auto a = init_parameters(ArchConfig::miniature(), 5);
  freeze(a, "ae_enc");
  save_checkpoint(a, dir);
  auto b = load_checkpoint(dir);
  CHECK(b.arch() == a.arch());
  CHECK(b.variant() == a.variant());
  CHECK(b.frozen() == a.frozen());
  CHECK(b.state() == a.state());
  auto s = mini_sample(1);
  CHECK(predict(a, s, Variant::kProposed) == predict(b, s, Variant::kProposed));

  kv::write_file(dir / "manifest.txt",
                 kv::read_text(dir / "manifest.txt") + "mystery=1\n");
  CHECK_THROWS_AS(load_checkpoint(dir), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), IoError);
}

TEST_CASE("layer gradients match finite differences, batch norm in train mode") {
  std::mt19937_64 rng(13);
  ConvBlock<double> block("blk", 3, 4);
  ParamRefs<double> params;
  block.parameters(params);
  for (auto* p : params) {
    if (p->name.ends_with("weight")) {
      p->value = random_tensor<double>(p->value.shape(), rng, -0.5, 0.5);
    } else {
      p->value = random_tensor<double>(p->value.shape(), rng, 0.5, 1.5);
    }
  }
  auto x = random_tensor<double>({2, 6, 6, 3}, rng);
  auto w = random_tensor<double>({2, 6, 6, 4}, rng);
  auto loss = [&] {
    auto y = block.forward(x, Mode::kTrain);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  };
  for (auto* p : params) p->grad.fill(0.0);
  loss();
  auto dx = block.backward(w);
  for (auto* p : params) {
    // A per-channel shift ahead of a train-mode batch norm cancels out.
    if (p->name.ends_with("conv0.bias") || p->name.ends_with("conv1.bias")) {
      for (double g : p->grad.values()) CHECK(std::abs(g) < 1e-10);
    }
  }
  auto r = gradcheck::check(params, loss);
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-6);

  // Input gradient, through the same probe.
  nn::Parameter<double> xp{"x", x, dx};
  auto rx = gradcheck::check({&xp}, [&] {
    auto y = block.forward(xp.value, Mode::kTrain);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  });
  CHECK(rx.max_rel_error < 1e-6);
}

TEST_CASE("transposed conv, pooling and upsampling gradients") {
  std::mt19937_64 rng(17);
  nn::ConvTranspose2x2<double> up("up", 3, 2);
  up.weight.value = random_tensor<double>(up.weight.value.shape(), rng);
  up.bias.value = random_tensor<double>(up.bias.value.shape(), rng);
  nn::MaxPool2<double> pool;
  nn::Upsample2<double> ups;
  auto x = random_tensor<double>({1, 4, 4, 3}, rng);
  auto w = random_tensor<double>({1, 8, 8, 2}, rng);
  auto loss = [&] {
    auto y = ups.forward(pool.forward(up.forward(x)));
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  };
  up.weight.grad.fill(0.0);
  up.bias.grad.fill(0.0);
  loss();
  up.backward(pool.backward(ups.backward(w)));
  auto r = gradcheck::check({&up.weight, &up.bias}, loss);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("frozen encoder survives optimizer steps") {
  auto bundle = init_parameters(ArchConfig::miniature(), 8);
  freeze(bundle, "ae_enc");
  const auto before = checksum(bundle, "ae_enc");
  optim::TrainConfig cfg;
  optim::Adam<float> adam(cfg);
  std::vector<data::Sample> samples{mini_sample(0), mini_sample(1)};
  for (int step = 0; step < 5; ++step) {
    bundle.zero_grad();
    std::vector<const data::Sample*> batch{&samples[0], &samples[1]};
    TensorArray ctx({2, 32, 32, 3});
    std::copy(samples[0].context.data(), samples[0].context.data() + 3072, ctx.data());
    std::copy(samples[1].context.data(), samples[1].context.data() + 3072,
              ctx.data() + 3072);
    TensorArray patch({2, 8, 8, 10}), geo({2, 8, 8, 3}), target({2, 8, 8}),
        mask({2, 8, 8});
    for (int i = 0; i < 2; ++i) {
      std::copy(samples[i].patch.data(), samples[i].patch.data() + 640, patch.data() + i * 640);
      std::copy(samples[i].geo.data(), samples[i].geo.data() + 192, geo.data() + i * 192);
      std::copy(samples[i].target.data(), samples[i].target.data() + 64, target.data() + i * 64);
      std::copy(samples[i].water_mask.data(), samples[i].water_mask.data() + 64,
                mask.data() + i * 64);
    }
    auto lt = bundle.encode_context(ctx, Mode::kTrain);
    auto logits = bundle.regress(patch, &geo, &lt, Mode::kTrain);
    auto loss = optim::masked_mae_batch<float>(logits, target, mask);
    auto dlt = bundle.regress_backward(loss.grad);
    bundle.encode_context_backward(dlt);
    ParamRefs<float> trainable;
    for (const auto& comp : {"unet_enc", "unet_dec", "geo_enc"}) {
      for (auto* p : bundle.parameters(comp)) trainable.push_back(p);
    }
    adam.step(trainable, 1e-3);
  }
  CHECK(checksum(bundle, "ae_enc") == before);
}
