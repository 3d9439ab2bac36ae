// Acceptance suite: one PASS/FAIL line per criterion. Every tolerance and
// run setting used for a verdict is pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "naturamap/geo.hpp"
#include "naturamap/metrics.hpp"
#include "naturamap/ntsr.hpp"
#include "naturamap/train.hpp"
#include "oracles.hpp"

using namespace naturamap;
namespace fs = std::filesystem;

namespace {

// Criterion 1
constexpr double kWrapTol = 1e-9;
constexpr double kDatelineSlope = 0.07;
constexpr double kPythagorasTol = 1e-6;
// Criterion 2
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-3;
// Criterion 4
constexpr double kScheduleTol = 1e-12;
// Criterion 5
constexpr double kSsimOracleTol = 1e-6;
constexpr int kSsimPairs = 20;
// Criterion 7
constexpr double kOverfitMae = 0.02;
constexpr std::size_t kOverfitSamples = 8;
constexpr std::size_t kOverfitEpochs = 500;
constexpr double kOverfitLr = 3e-3;
constexpr std::size_t kOverfitBatch = 2;
constexpr std::size_t kOverfitAeEpochs = 60;
constexpr double kOverfitAeLr = 1e-3;
// Criterion 8
constexpr std::size_t kDirTrain = 512;
constexpr std::size_t kDirVal = 128;
constexpr std::uint64_t kDirSeeds[] = {1, 2, 3};
constexpr double kDirMaeReduction = 0.10;
constexpr std::size_t kDirAeTiles = 128;
constexpr std::size_t kDirAeEpochs = 20;
constexpr double kDirAeLr = 1e-3;
constexpr std::size_t kDirEpochs = 60;
constexpr double kDirLr = 1e-3;
constexpr std::size_t kDirBatch = 16;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream o;
  o << std::setprecision(precision) << v;
  return o.str();
}

bool verbose = false;

train::TrainOptions progress(const std::string& tag) {
  train::TrainOptions o;
  if (verbose) {
    o.on_epoch = [tag](const train::EpochRecord& r) {
      std::cerr << "  [" << tag << "] epoch " << r.epoch << " lr=" << r.lr
                << " train=" << r.train_loss << " val=" << r.val_loss
                << " mae=" << r.val_mae << " mssim=" << r.val_mssim << "\n";
    };
  }
  return o;
}

template <typename T>
Tensor<T> stack(const std::vector<const TensorArray*>& items) {
  Shape s = items.front()->shape();
  s.insert(s.begin(), items.size());
  Tensor<T> out(s);
  std::size_t off = 0;
  for (const auto* t : items) {
    for (float v : t->values()) out[off++] = static_cast<T>(v);
  }
  return out;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  using namespace geo;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> lon_dist(-720.0, 720.0);
  double wrap = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double lon = lon_dist(rng);
    for (auto mode : {LonEncoding::kFullCircle, LonEncoding::kDoubleAngle}) {
      const auto a = encode_longitude(lon, mode), b = encode_longitude(lon + 360.0, mode);
      wrap = std::max({wrap, std::abs(a.sin - b.sin), std::abs(a.cos - b.cos)});
    }
  }
  double slope = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const double eps = 0.1 * i / 1000.0;
    const auto a = encode_longitude(180.0 - eps), b = encode_longitude(-180.0 + eps);
    slope = std::max(slope, std::hypot(a.sin - b.sin, a.cos - b.cos) / eps);
  }
  double pyth = 0.0;
  std::uniform_real_distribution<double> lat_dist(-89.0, 89.0), lon_any(-180.0, 180.0);
  for (int g = 0; g < 50; ++g) {
    const GeoPoint c{lat_dist(rng), lon_any(rng)};
    for (auto mode : {LonEncoding::kFullCircle, LonEncoding::kDoubleAngle}) {
      const auto grid = build_geo_grid(c, 16, 16, 0.05, mode);
      for (std::size_t i = 0; i < 256; ++i) {
        const double s = grid[i * 3], co = grid[i * 3 + 1];
        pyth = std::max(pyth, std::abs(s * s + co * co - 1.0));
      }
    }
  }
  // Injectivity: the encoding has a left inverse on [-180, 180) and no two
  // points of a fine lattice collide.
  std::set<std::pair<double, double>> seen;
  double inverse = 0.0;
  std::size_t lattice = 0;
  for (long k = -1800000; k < 1800000; k += 7) {
    const double lon = k * 1e-4;
    const auto e = encode_longitude(lon);
    seen.insert({e.sin, e.cos});
    ++lattice;
    inverse = std::max(inverse, std::abs(std::atan2(e.sin, e.cos) * 180.0 / std::numbers::pi - lon));
  }
  const auto m180 = encode_longitude(-180.0);
  const double back = std::atan2(m180.sin, m180.cos) * 180.0 / std::numbers::pi;
  const bool injective = seen.size() == lattice && inverse < 1e-9 &&
                         std::abs(std::abs(back) - 180.0) < 1e-9;
  Outcome o;
  o.pass = wrap <= kWrapTol && slope <= kDatelineSlope && pyth <= kPythagorasTol && injective;
  o.detail = "wrap " + fmt(wrap, 3) + ", dateline C " + fmt(slope, 4) + ", |sin2+cos2-1| " +
             fmt(pyth, 3) + ", " + std::to_string(seen.size()) + "/" +
             std::to_string(lattice) + " distinct";
  return o;
}

// ---------------------------------------------------------------------------

struct GradCase {
  model::Model<double> model;
  Tensor<double> patch, geo, context, target, mask;
};

GradCase grad_case(std::uint64_t seed) {
  const auto arch = model::ArchConfig::miniature();
  auto bundle = model::init_parameters(arch, seed);
  GradCase g{bundle.cast<double>(), {}, {}, {}, {}, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Nontrivial affine batch-norm maps and biases so no term vanishes.
  for (const auto& comp : model::kComponents) {
    for (auto* p : g.model.parameters(comp)) {
      if (p->name.ends_with(".gamma")) {
        for (auto& v : p->value.values()) v = 0.5 + u(rng);
      } else if (p->name.ends_with(".beta") || p->name.ends_with(".bias")) {
        for (auto& v : p->value.values()) v = 0.2 * (u(rng) - 0.5);
      }
    }
    for (auto* b : g.model.buffers(comp)) {
      const bool var = b->name.ends_with("running_var");
      for (auto& v : b->value.values()) v = var ? 0.5 + u(rng) : 0.4 * (u(rng) - 0.5);
    }
  }
  data::SynthParams sp;
  sp.patch_size = arch.patch_size;
  sp.context_size = arch.context_size;
  sp.seed = seed;
  std::vector<data::Sample> samples{data::generate_sample(sp, 0), data::generate_sample(sp, 1)};
  samples[0].water_mask.fill(0.0f);
  samples[0].water_mask.at(2, 5) = 1.0f;
  samples[1].water_mask.at(0, 0) = 1.0f;
  samples[1].water_mask.at(7, 3) = 1.0f;
  auto refs = [&](auto member) {
    std::vector<const TensorArray*> r;
    for (const auto& s : samples) r.push_back(&(s.*member));
    return r;
  };
  g.patch = stack<double>(refs(&data::Sample::patch));
  g.geo = stack<double>(refs(&data::Sample::geo));
  g.context = stack<double>(refs(&data::Sample::context));
  g.target = stack<double>(refs(&data::Sample::target));
  g.mask = stack<double>(refs(&data::Sample::water_mask));
  return g;
}

Outcome criterion2() {
  Outcome o;
  o.pass = false;
  for (auto mode : {nn::Mode::kEval, nn::Mode::kTrain}) {
    auto g = grad_case(202);
    auto& m = g.model;
    auto forward = [&] {
      auto lt = m.encode_context(g.context, mode);
      auto logits = m.regress(g.patch, &g.geo, &lt, mode);
      return optim::masked_mae_batch<double>(logits, g.target, g.mask);
    };
    m.zero_grad();
    auto res = forward();
    auto dlt = m.regress_backward(res.grad);
    m.encode_context_backward(dlt);
    bool water_zero = true;
    for (std::size_t i = 0; i < g.mask.size(); ++i) {
      if (g.mask[i] != 0.0 && res.grad[i] != 0.0) water_zero = false;
    }
    nn::ParamRefs<double> params;
    for (const auto& comp : {"unet_enc", "geo_enc", "ae_enc", "unet_dec"}) {
      for (auto* p : m.parameters(comp)) params.push_back(p);
    }
    auto r = gradcheck::check(params, [&] { return forward().value; }, kGradStep);
    // The verdict uses frozen (running) statistics. With batch statistics the
    // 1x1 bottleneck normalizes two values per channel, which makes upstream
    // gradients nearly vanish and the quotient mostly rounding noise; that run
    // is reported for information and train-mode BN is checked per layer in
    // the unit tests.
    if (mode == nn::Mode::kEval) o.pass = water_zero && r.max_rel_error < kGradRelTol;
    o.detail += std::string(o.detail.empty() ? "" : "; ") +
                (mode == nn::Mode::kEval ? "running-stats BN" : "batch-stats BN (info)") +
                ": max rel err " + fmt(r.max_rel_error, 3) + " (" + r.worst + ") over " +
                std::to_string(r.elements) + " params, " + std::to_string(r.refined) +
                " kink re-probes";
  }
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion3() {
  data::SynthParams sp;
  sp.seed = 303;
  auto bundle = model::init_parameters(model::ArchConfig::desk(), 303);
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::size_t checked = 0, water_pixels = 0;
  bool ok = true;
  for (std::uint64_t id = 0; checked < 8 && id < 200; ++id) {
    auto s = data::generate_sample(sp, id);
    std::size_t water = 0;
    for (float v : s.water_mask.values()) water += v != 0.0f;
    if (water == 0 || water == s.water_mask.size()) continue;
    ++checked;
    water_pixels += water;
    auto pred = model::predict(bundle, s, model::Variant::kProposed);
    auto logits = model::predict_logits(bundle, {&s}, model::Variant::kProposed);
    auto p2 = pred, t2 = s.target, l2 = logits;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (s.water_mask[i] == 0.0f) continue;
      p2[i] = static_cast<float>(u(rng));
      t2[i] = static_cast<float>(u(rng));
      l2[i] = static_cast<float>(u(rng));
    }
    auto mask4 = s.water_mask.reshaped({1, pred.dim(0), pred.dim(1), 1});
    auto a = optim::masked_mae_batch<float>(logits, s.target.reshaped(mask4.shape()), mask4);
    auto b = optim::masked_mae_batch<float>(l2, t2.reshaped(mask4.shape()), mask4);
    ok = ok && a.value == b.value && a.grad == b.grad;
    ok = ok && *optim::masked_mae_loss(pred, s.target, s.water_mask) ==
                   *optim::masked_mae_loss(p2, t2, s.water_mask);
    ok = ok && *metrics::masked_mae(pred, s.target, s.water_mask) ==
                   *metrics::masked_mae(p2, t2, s.water_mask);
    ok = ok && *metrics::masked_mse(pred, s.target, s.water_mask) ==
                   *metrics::masked_mse(p2, t2, s.water_mask);
    auto ss1 = metrics::mssim(pred, s.target, s.water_mask);
    auto ss2 = metrics::mssim(p2, t2, s.water_mask);
    ok = ok && (ss1.fallback || ss1.value == ss2.value);
    for (std::size_t i = 0; i < a.grad.size(); ++i) {
      if (mask4[i] != 0.0f && a.grad[i] != 0.0f) ok = false;
    }
  }
  Outcome o;
  o.pass = ok && checked == 8;
  o.detail = std::to_string(checked) + " samples, " + std::to_string(water_pixels) +
             " water pixels perturbed; loss, gradient, MAE, MSE, MSSIM unchanged";
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion4() {
  optim::TrainConfig cfg;
  auto closed_form = [&](double e) {
    // Cycle starts S_i = T0 (Tmult^i - 1) / (Tmult - 1) for Tmult = 2.
    double i = std::floor(std::log2(e / cfg.t0 + 1.0));
    const double start = cfg.t0 * (std::pow(2.0, i) - 1.0);
    const double len = cfg.t0 * std::pow(2.0, i);
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) *
                            (1.0 + std::cos(std::numbers::pi * (e - start) / len));
  };
  const std::map<double, double> literal = {{0, 1e-4}, {5, 5e-5}, {10, 1e-4}, {30, 1e-4}, {70, 1e-4}};
  double worst = 0.0;
  for (double e : {0.0, 5.0, 10.0, 29.0, 30.0, 70.0}) {
    const double got = optim::lr_at(e, cfg);
    worst = std::max(worst, std::abs(got - closed_form(e)));
    if (literal.contains(e)) worst = std::max(worst, std::abs(got - literal.at(e)));
  }
  Outcome o;
  o.pass = worst <= kScheduleTol;
  o.detail = "max |lr - oracle| " + fmt(worst, 3) + "; lr(29) = " + fmt(optim::lr_at(29, cfg), 10);
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion5() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  bool identical_one = true;
  for (int t = 0; t < kSsimPairs; ++t) {
    TensorArray x({32, 32}), y({32, 32}), mask({32, 32});
    for (auto& v : x.values()) v = static_cast<float>(u(rng));
    for (std::size_t i = 0; i < y.size(); ++i) {
      // Correlated pairs cover the high-SSIM range as well.
      y[i] = static_cast<float>(t % 2 ? u(rng) : std::clamp(x[i] + 0.1 * (u(rng) - 0.5), 0.0, 1.0));
    }
    if (t % 4 == 3) {
      for (std::size_t r = 10; r < 13; ++r) mask.at(r, (7 * t) % 30) = 1.0f;
    }
    worst = std::max(worst, std::abs(metrics::mssim(x, y, mask).value -
                                     oracle::brute_force_mssim(x, y, mask)));
    identical_one = identical_one && metrics::mssim(x, x, mask).value == 1.0;
  }
  Outcome o;
  o.pass = worst < kSsimOracleTol && identical_one;
  o.detail = "max |fast - brute force| " + fmt(worst, 3) + " over " + std::to_string(kSsimPairs) +
             " pairs; identical images " + (identical_one ? "exactly 1.0" : "NOT 1.0");
  return o;
}

// ---------------------------------------------------------------------------

std::vector<data::Sample> make_samples(const data::SynthParams& p, std::uint64_t first,
                                       std::size_t n) {
  std::vector<data::Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(data::generate_sample(p, first + i));
  return out;
}

Outcome criterion7() {
  data::SynthParams sp;
  sp.seed = 707;
  const auto samples = make_samples(sp, 0, kOverfitSamples);
  const auto arch = model::ArchConfig::desk();

  optim::TrainConfig ae_cfg;
  ae_cfg.seed = 707;
  ae_cfg.lr_max = kOverfitAeLr;
  ae_cfg.batch_size = kOverfitBatch;
  ae_cfg.max_epochs = kOverfitAeEpochs;
  ae_cfg.patience = kOverfitAeEpochs;
  ae_cfg.augment = false;
  auto ae = train::train_autoencoder(samples, {}, arch, ae_cfg, progress("overfit-ae"));

  optim::TrainConfig cfg = ae_cfg;
  cfg.lr_max = kOverfitLr;
  cfg.max_epochs = kOverfitEpochs;
  cfg.patience = kOverfitEpochs;
  auto run = train::train_model(samples, samples, arch, cfg, model::Variant::kProposed,
                                &ae.bundle, progress("overfit"));
  auto report = metrics::evaluate(run.bundle, samples, model::Variant::kProposed);
  std::size_t first_below = 0;
  for (const auto& e : run.report.epochs) {
    if (e.val_mae < kOverfitMae) {
      first_below = e.epoch + 1;
      break;
    }
  }
  Outcome o;
  o.pass = report.mae < kOverfitMae && run.report.epochs.size() <= kOverfitEpochs;
  o.detail = "train masked MAE " + fmt(report.mae, 4) + " after " +
             std::to_string(run.report.epochs.size()) + " epochs (best epoch " +
             std::to_string(run.report.best_epoch) + ", first below " + fmt(kOverfitMae) +
             " at epoch " + (first_below ? std::to_string(first_below) : "never") + ")";
  return o;
}

// ---------------------------------------------------------------------------

struct SeedResult {
  std::uint64_t seed = 0;
  metrics::EvalReport baseline, proposed;
  std::uint64_t ae_checkpoint_sum = 0, ae_after_sum = 0;
  bool ae_frozen = false;
};

std::vector<SeedResult> directional_study(const fs::path& workdir) {
  std::vector<SeedResult> results;
  const auto arch = model::ArchConfig::desk();
  for (auto seed : kDirSeeds) {
    SeedResult r;
    r.seed = seed;
    data::SynthParams sp;
    sp.seed = seed;
    const auto tr = make_samples(sp, 0, kDirTrain);
    const auto va = make_samples(sp, kDirTrain, kDirVal);

    optim::TrainConfig ae_cfg;
    ae_cfg.seed = seed;
    ae_cfg.lr_max = kDirAeLr;
    ae_cfg.max_epochs = kDirAeEpochs;
    ae_cfg.batch_size = kDirBatch;
    const std::vector<data::Sample> ae_tiles(tr.begin(), tr.begin() + kDirAeTiles);
    auto ae = train::train_autoencoder(ae_tiles, {}, arch, ae_cfg,
                                       progress("ae seed " + std::to_string(seed)));
    const auto ckpt = workdir / ("ae_seed" + std::to_string(seed));
    fs::remove_all(ckpt);
    model::save_checkpoint(ae.bundle, ckpt);
    auto ae_loaded = model::load_checkpoint(ckpt);
    r.ae_checkpoint_sum = model::checksum(ae_loaded, "ae_enc");

    optim::TrainConfig cfg;
    cfg.seed = seed;
    cfg.lr_max = kDirLr;
    cfg.max_epochs = kDirEpochs;
    cfg.batch_size = kDirBatch;
    auto base = train::train_model(tr, va, arch, cfg, model::Variant::kBaseline, nullptr,
                                   progress("baseline seed " + std::to_string(seed)));
    auto prop = train::train_model(tr, va, arch, cfg, model::Variant::kProposed, &ae_loaded,
                                   progress("proposed seed " + std::to_string(seed)));
    r.ae_after_sum = model::checksum(prop.bundle, "ae_enc");
    r.ae_frozen = prop.bundle.is_frozen("ae_enc");
    r.baseline = metrics::evaluate(base.bundle, va, model::Variant::kBaseline);
    r.proposed = metrics::evaluate(prop.bundle, va, model::Variant::kProposed);
    std::cerr << "  seed " << seed << ": baseline MAE " << r.baseline.mae << " MSSIM "
              << r.baseline.mssim << " | proposed MAE " << r.proposed.mae << " MSSIM "
              << r.proposed.mssim << "\n";
    results.push_back(r);
  }
  return results;
}

Outcome criterion6(const std::vector<SeedResult>& study) {
  Outcome o;
  o.pass = !study.empty();
  for (const auto& r : study) {
    const bool same = r.ae_checkpoint_sum == r.ae_after_sum && r.ae_frozen;
    o.pass = o.pass && same;
    std::ostringstream s;
    s << "seed " << r.seed << " ae_enc " << std::hex << r.ae_after_sum
      << (same ? " == checkpoint" : " != checkpoint");
    o.detail += (o.detail.empty() ? "" : "; ") + s.str();
  }
  return o;
}

Outcome criterion8(const std::vector<SeedResult>& study) {
  Outcome o;
  o.pass = study.size() == std::size(kDirSeeds);
  for (const auto& r : study) {
    const double reduction = 1.0 - r.proposed.mae / r.baseline.mae;
    const bool ok = reduction >= kDirMaeReduction && r.proposed.mssim > r.baseline.mssim;
    o.pass = o.pass && ok;
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("seed ") +
                std::to_string(r.seed) + " MAE " + fmt(r.baseline.mae, 4) + " -> " +
                fmt(r.proposed.mae, 4) + " (" + fmt(100.0 * reduction, 3) + "% lower), MSSIM " +
                fmt(r.baseline.mssim, 4) + " -> " + fmt(r.proposed.mssim, 4);
  }
  return o;
}

// ---------------------------------------------------------------------------

std::map<std::string, std::vector<char>> tree_bytes(const fs::path& root) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] =
        std::vector<char>(std::istreambuf_iterator<char>(in), {});
  }
  return out;
}

Outcome criterion9(const fs::path& workdir) {
  std::mt19937_64 rng(909);
  bool ntsr_ok = true;
  std::size_t tensors = 0;
  const float specials[] = {0.0f, -0.0f, std::numeric_limits<float>::infinity(),
                            -std::numeric_limits<float>::infinity(),
                            std::numeric_limits<float>::denorm_min(),
                            std::numeric_limits<float>::max(),
                            std::numeric_limits<float>::quiet_NaN()};
  for (int t = 0; t < 200; ++t) {
    Shape shape;
    const std::size_t rank = 1 + rng() % 4;
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(1 + rng() % 7);
    TensorArray x(shape);
    for (auto& v : x.values()) {
      const auto bits = static_cast<std::uint32_t>(rng());
      std::memcpy(&v, &bits, 4);
    }
    for (std::size_t i = 0; i < std::min<std::size_t>(x.size(), 7); ++i) x[i] = specials[i];
    const auto file = workdir / "roundtrip.ntsr";
    write_tensor(file, x);
    const auto y = read_tensor(file);
    ntsr_ok = ntsr_ok && y.shape() == x.shape() &&
              std::memcmp(x.data(), y.data(), 4 * x.size()) == 0 &&
              fs::file_size(file) == ntsr_header_size(rank) + 4 * x.size();
    ++tensors;
  }

  data::SynthParams sp;
  sp.seed = 909;
  const auto d1 = workdir / "regen_a", d2 = workdir / "regen_b";
  fs::remove_all(d1);
  fs::remove_all(d2);
  data::generate_dataset(sp, 4, 2, 2, d1, false, 1);
  data::generate_dataset(sp, 4, 2, 2, d2, false, 1);
  const auto bytes_a = tree_bytes(d1);
  const bool regen_ok = bytes_a == tree_bytes(d2) && bytes_a.size() == 8 * 6 + 1;

  const auto manifest = data::read_manifest(d1);
  const auto tr = data::load_split(manifest, "train");
  const auto va = data::load_split(manifest, "val");
  optim::TrainConfig cfg;
  cfg.seed = 909;
  cfg.max_epochs = 2;
  cfg.batch_size = 2;
  cfg.lr_max = 1e-3;
  auto run = [&] {
    auto ae = train::train_autoencoder(tr, va, model::ArchConfig::desk(), cfg);
    return train::train_model(tr, va, model::ArchConfig::desk(), cfg, model::Variant::kProposed,
                              &ae.bundle);
  };
  auto r1 = run();
  auto r2 = run();
  bool train_ok = r1.report.table() == r2.report.table() && r1.bundle.state() == r2.bundle.state();
  for (const auto& comp : model::kComponents) {
    train_ok = train_ok && model::checksum(r1.bundle, comp) == model::checksum(r2.bundle, comp);
  }

  Outcome o;
  o.pass = ntsr_ok && regen_ok && train_ok;
  o.detail = std::to_string(tensors) + " NTSR round trips " + (ntsr_ok ? "bit-exact" : "DIFFER") +
             "; regenerated dataset (" + std::to_string(bytes_a.size()) + " files) " +
             (regen_ok ? "identical" : "DIFFERS") + "; training rerun " +
             (train_ok ? "bitwise identical" : "DIFFERS");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"naturamap acceptance suite"};
  std::vector<int> only;
  std::string workdir = (fs::temp_directory_path() / "naturamap_acceptance").string();
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 9));
  app.add_option("--workdir", workdir, "Scratch directory");
  std::string results;
  app.add_option("--results", results, "Also write the result lines to this file");
  app.add_flag("-v,--verbose", verbose, "Per-epoch progress on stderr");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  std::set<int> selected(only.begin(), only.end());
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const std::map<int, std::string> names = {
      {1, "encoding suite"},          {2, "gradient check"},
      {3, "masked invariance"},       {4, "schedule oracle"},
      {5, "MSSIM oracle"},            {6, "freeze invariance"},
      {7, "overfit sanity"},          {8, "baseline vs proposed"},
      {9, "round trip + determinism"}};

  std::ofstream results_file;
  if (!results.empty()) results_file.open(results);
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    if (results_file) results_file << line << std::endl;
  };

  std::optional<std::vector<SeedResult>> study;
  int failures = 0;
  for (int c : selected) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      switch (c) {
        case 1: o = criterion1(); break;
        case 2: o = criterion2(); break;
        case 3: o = criterion3(); break;
        case 4: o = criterion4(); break;
        case 5: o = criterion5(); break;
        case 6:
        case 8:
          if (!study) study = directional_study(workdir);
          o = c == 6 ? criterion6(*study) : criterion8(*study);
          break;
        case 7: o = criterion7(); break;
        case 9: o = criterion9(workdir); break;
      }
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << " criterion " << c << " (" << names.at(c) << ", "
         << std::fixed << std::setprecision(1) << secs << " s): " << std::defaultfloat
         << o.detail;
    emit(line.str());
  }
  emit(failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED");
  return failures == 0 ? 0 : 1;
}
