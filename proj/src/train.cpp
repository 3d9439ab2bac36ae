#include "naturamap/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "naturamap/kv.hpp"

namespace naturamap::train {
namespace {

using model::ModelBundle;
using model::Variant;
using nn::Mode;

TensorArray stack(const std::vector<const TensorArray*>& items) {
  Shape shape = items.front()->shape();
  if (shape.size() == 2) shape.push_back(1);
  Shape batched{items.size()};
  batched.insert(batched.end(), shape.begin(), shape.end());
  TensorArray out(batched);
  const std::size_t stride = items.front()->size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(items[i]->data(), items[i]->data() + stride,
              out.data() + i * stride);
  }
  return out;
}

TensorArray stack_values(const std::vector<TensorArray>& items) {
  std::vector<const TensorArray*> refs;
  for (const auto& t : items) refs.push_back(&t);
  return stack(refs);
}

nn::ParamRefs<float> trainable(ModelBundle& bundle,
                               const std::vector<std::string>& components) {
  nn::ParamRefs<float> out;
  for (const auto& c : components) {
    if (bundle.is_frozen(c)) continue;
    auto p = bundle.parameters(c);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void zero(const nn::ParamRefs<float>& params) {
  for (auto* p : params) p->grad.fill(0.0f);
}

// Per-sample masked MAE means of raw logits, averaged over defined samples.
struct ValStats {
  double loss = 0.0;
  metrics::EvalReport report;
};

struct Batches {
  std::vector<std::vector<std::size_t>> groups;
};

Batches make_batches(const std::vector<std::size_t>& order, std::size_t size) {
  Batches b;
  for (std::size_t i = 0; i < order.size(); i += size) {
    b.groups.emplace_back(order.begin() + static_cast<long>(i),
                          order.begin() + static_cast<long>(std::min(order.size(), i + size)));
  }
  return b;
}

class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience) : patience_(patience) {}
  bool update(double val_loss) {
    history_.push_back(val_loss);
    decision_ = optim::early_stop(history_, patience_);
    return decision_.stop;
  }
  bool improved() const { return decision_.best_epoch + 1 == history_.size(); }
  std::size_t best_epoch() const { return decision_.best_epoch; }
  double best_value() const { return history_[decision_.best_epoch]; }

 private:
  std::size_t patience_;
  std::vector<double> history_;
  optim::EarlyStopDecision decision_;
};

std::vector<std::size_t> draw_order(std::mt19937_64& rng,
                                    std::optional<data::WeightedSampler>& sampler,
                                    std::size_t n) {
  if (sampler) return sampler->draw(rng, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

void require_finite_losses(const EpochRecord& rec) {
  if (!std::isfinite(rec.train_loss) || std::isnan(rec.val_loss)) {
    throw NumericalError("non-finite loss at epoch " + std::to_string(rec.epoch) +
                         " (train " + kv::format_double(rec.train_loss) + ", val " +
                         kv::format_double(rec.val_loss) + ")");
  }
}

void finish_report(TrainReport& report, const EarlyStopper& stopper,
                   bool stopped_early) {
  report.best_epoch = stopper.best_epoch();
  report.best_val_loss = stopper.best_value();
  report.stop_reason = stopped_early ? "early_stop" : "max_epochs";
}

}  // namespace

// ---------------------------------------------------------------------------

std::string TrainReport::table() const {
  std::ostringstream out;
  out << "epoch,lr,train_loss,val_loss,val_mae,val_mse,val_mssim\n";
  for (const auto& e : epochs) {
    out << e.epoch << "," << kv::format_double(e.lr) << ","
        << kv::format_double(e.train_loss) << ","
        << kv::format_double(e.val_loss) << "," << kv::format_double(e.val_mae)
        << "," << kv::format_double(e.val_mse) << ","
        << kv::format_double(e.val_mssim) << "\n";
  }
  return out.str();
}

std::string TrainReport::summary() const {
  std::ostringstream out;
  out << "stage=" << stage << "\n"
      << "epochs=" << epochs.size() << "\n"
      << "best_epoch=" << best_epoch << "\n"
      << "best_val_loss=" << kv::format_double(best_val_loss) << "\n"
      << "stop_reason=" << stop_reason << "\n"
      << "skipped_samples=" << skipped_samples << "\n"
      << "validated_on_train=" << (validated_on_train ? 1 : 0) << "\n";
  if (!epochs.empty()) {
    const auto& last = epochs.back();
    out << "final_train_loss=" << kv::format_double(last.train_loss) << "\n";
    const auto& best = epochs[std::min(best_epoch, epochs.size() - 1)];
    out << "best_val_mae=" << kv::format_double(best.val_mae) << "\n"
        << "best_val_mse=" << kv::format_double(best.val_mse) << "\n"
        << "best_val_mssim=" << kv::format_double(best.val_mssim) << "\n";
  }
  return out.str();
}

void TrainReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  kv::write_file(dir / "report.csv", table());
  kv::write_file(dir / "summary.txt", summary());
}

// ---------------------------------------------------------------------------

TrainResult train_autoencoder(const std::vector<data::Sample>& train,
                              const std::vector<data::Sample>& val_in,
                              const model::ArchConfig& arch,
                              const optim::TrainConfig& cfg,
                              const TrainOptions& options) {
  cfg.validate();
  if (train.empty()) throw ConfigError("autoencoder training needs samples");
  const auto& val = val_in.empty() ? train : val_in;

  TrainResult result{model::init_parameters(arch, cfg.seed, Variant::kProposed), {}};
  auto& bundle = result.bundle;
  auto& report = result.report;
  report.stage = "autoencoder";
  report.validated_on_train = val_in.empty();

  const auto params = trainable(bundle, {"ae_enc", "ae_dec"});
  optim::Adam<float> adam(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x5eed0aeULL);
  std::optional<data::WeightedSampler> no_sampler;
  data::AugmentConfig aug;
  aug.p_erase = 0.0;
  EarlyStopper stopper(cfg.patience);
  std::map<std::string, TensorArray> best_state;
  bool stopped = false;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = optim::lr_at(static_cast<double>(epoch), cfg);
    const auto order = draw_order(rng, no_sampler, train.size());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (const auto& group : make_batches(order, cfg.batch_size).groups) {
      std::vector<TensorArray> tiles;
      for (auto idx : group) {
        if (cfg.augment) {
          data::Sample view;
          view.patch = train[idx].patch;
          view.context = train[idx].context;
          view.geo = train[idx].geo;
          view.target = train[idx].target;
          view.water_mask = train[idx].water_mask;
          tiles.push_back(data::augment(view, rng, aug).context);
        } else {
          tiles.push_back(train[idx].context);
        }
      }
      const auto tile = stack_values(tiles);
      zero(params);
      auto recon = bundle.decode_context(bundle.encode_context(tile, Mode::kTrain),
                                         Mode::kTrain);
      auto loss = optim::mse_batch(recon, tile);
      bundle.encode_context_backward(bundle.decode_context_backward(loss.grad));
      adam.step(params, lr);
      loss_sum += loss.value;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    double val_sum = 0.0;
    for (std::size_t i = 0; i < val.size(); i += cfg.batch_size) {
      std::vector<const TensorArray*> refs;
      for (std::size_t k = i; k < std::min(val.size(), i + cfg.batch_size); ++k) {
        refs.push_back(&val[k].context);
      }
      const auto tile = stack(refs);
      auto recon = bundle.decode_context(bundle.encode_context(tile, Mode::kEval),
                                         Mode::kEval);
      val_sum += optim::mse_batch(recon, tile).value * static_cast<double>(refs.size());
    }
    rec.val_loss = val_sum / static_cast<double>(val.size());
    rec.val_mse = rec.val_loss;
    report.epochs.push_back(rec);
    require_finite_losses(rec);
    if (options.on_epoch) options.on_epoch(rec);

    stopped = stopper.update(rec.val_loss);
    if (stopper.improved() && options.restore_best) {
      best_state = bundle.state("ae_enc");
      best_state.merge(bundle.state("ae_dec"));
    }
    if (stopped) break;
  }
  if (options.restore_best && !best_state.empty()) {
    bundle.load_state(best_state, false);
  }
  finish_report(report, stopper, stopped);
  return result;
}

// ---------------------------------------------------------------------------

TrainResult train_model(const std::vector<data::Sample>& train,
                        const std::vector<data::Sample>& val_in,
                        const model::ArchConfig& arch,
                        const optim::TrainConfig& cfg, Variant variant,
                        const ModelBundle* autoencoder,
                        const TrainOptions& options) {
  cfg.validate();
  if (train.empty()) throw ConfigError("training needs samples");
  if (variant == Variant::kProposed && !autoencoder) {
    throw ConfigError("the proposed variant needs a trained autoencoder");
  }
  if (variant == Variant::kBaseline && autoencoder) {
    throw ConfigError("the baseline variant does not use an autoencoder");
  }
  if (autoencoder && !(autoencoder->arch() == arch)) {
    throw ConfigError("autoencoder architecture does not match the model "
                      "configuration (fused width " +
                      std::to_string(autoencoder->arch().fused_channels(variant)) +
                      " vs " + std::to_string(arch.fused_channels(variant)) + ")");
  }
  const auto& val = val_in.empty() ? train : val_in;

  TrainResult result{model::init_parameters(arch, cfg.seed, variant), {}};
  auto& bundle = result.bundle;
  auto& report = result.report;
  report.stage = model::to_string(variant);
  report.validated_on_train = val_in.empty();

  std::vector<std::string> components = {"unet_enc", "unet_dec"};
  if (variant == Variant::kProposed) {
    auto& source = const_cast<ModelBundle&>(*autoencoder);
    bundle.load_state(source.state("ae_enc"), false);
    bundle.load_state(source.state("ae_dec"), false);
    model::freeze(bundle, "ae_enc");
    model::freeze(bundle, "ae_dec");
    components.push_back("geo_enc");
  }
  const auto params = trainable(bundle, components);

  // The frozen encoder runs in evaluation mode, so each (sample, flip) pair
  // has a fixed context latent.
  std::map<std::tuple<const data::Sample*, bool, bool>, TensorArray> latent_cache;
  auto context_latent = [&](const data::Sample* s, const TensorArray& ctx,
                            bool hflip, bool vflip) -> const TensorArray& {
    auto key = std::make_tuple(s, hflip, vflip);
    auto it = latent_cache.find(key);
    if (it != latent_cache.end()) return it->second;
    auto latent = bundle.encode_context(stack({&ctx}), Mode::kEval);
    latent = latent.reshaped({latent.dim(1), latent.dim(2), latent.dim(3)});
    return latent_cache.emplace(key, std::move(latent)).first->second;
  };

  std::vector<double> means;
  for (const auto& s : train) means.push_back(data::mean_target(s));
  std::optional<data::WeightedSampler> sampler;
  if (cfg.weighted_sampling) sampler.emplace(data::compute_sample_weights(means));

  optim::Adam<float> adam(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x7a11ULL);
  data::AugmentConfig aug;
  EarlyStopper stopper(cfg.patience);
  std::map<std::string, TensorArray> best_state;
  bool stopped = false;
  const bool proposed = variant == Variant::kProposed;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = optim::lr_at(static_cast<double>(epoch), cfg);
    const auto order = draw_order(rng, sampler, train.size());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (const auto& group : make_batches(order, cfg.batch_size).groups) {
      std::vector<data::Sample> items;
      std::vector<const TensorArray*> latents;
      for (auto idx : group) {
        const data::Sample& src = train[idx];
        data::AugmentRecord rec;
        if (cfg.augment) {
          items.push_back(data::augment(src, rng, aug, &rec));
        } else {
          items.push_back(src);
        }
        if (proposed) {
          latents.push_back(
              &context_latent(&src, items.back().context, rec.hflip, rec.vflip));
        }
      }
      std::vector<const TensorArray*> patches, geos, targets, masks;
      for (const auto& s : items) {
        patches.push_back(&s.patch);
        geos.push_back(&s.geo);
        targets.push_back(&s.target);
        masks.push_back(&s.water_mask);
      }
      const auto patch = stack(patches);
      const auto target = stack(targets);
      const auto mask = stack(masks);
      TensorArray geo, latent;
      if (proposed) {
        geo = stack(geos);
        latent = stack(latents);
      }
      zero(params);
      auto logits = bundle.regress(patch, proposed ? &geo : nullptr,
                                   proposed ? &latent : nullptr, Mode::kTrain);
      auto loss = optim::masked_mae_batch(logits, target, mask);
      if (loss.excluded > 0) {
        report.skipped_samples += loss.excluded;
        if (options.on_warning) {
          options.on_warning("skipped " + std::to_string(loss.excluded) +
                             " all-water sample(s) in epoch " +
                             std::to_string(epoch));
        }
      }
      if (loss.included == 0) continue;
      bundle.regress_backward(loss.grad);
      adam.step(params, lr);
      loss_sum += loss.value;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;

    // Validation: raw-logit masked MAE as the early-stopping loss, clamped
    // predictions for the reported metrics.
    std::vector<TensorArray> preds;
    double val_sum = 0.0;
    std::size_t val_defined = 0;
    for (std::size_t i = 0; i < val.size(); i += cfg.batch_size) {
      std::vector<const TensorArray*> patches, geos, latents;
      const std::size_t end = std::min(val.size(), i + cfg.batch_size);
      for (std::size_t k = i; k < end; ++k) {
        patches.push_back(&val[k].patch);
        geos.push_back(&val[k].geo);
        if (proposed) {
          latents.push_back(&context_latent(&val[k], val[k].context, false, false));
        }
      }
      const auto patch = stack(patches);
      TensorArray geo, latent;
      if (proposed) {
        geo = stack(geos);
        latent = stack(latents);
      }
      auto logits = bundle.regress(patch, proposed ? &geo : nullptr,
                                   proposed ? &latent : nullptr, Mode::kEval);
      const std::size_t h = logits.dim(1), w = logits.dim(2);
      for (std::size_t k = i; k < end; ++k) {
        TensorArray raw({h, w}, AlignedVector<float>(
                                    logits.data() + (k - i) * h * w,
                                    logits.data() + (k - i + 1) * h * w));
        if (auto l = optim::masked_mae_loss(raw, val[k].target, val[k].water_mask)) {
          val_sum += *l;
          ++val_defined;
        }
        for (auto& v : raw.values()) v = std::clamp(v, 0.0f, 1.0f);
        preds.push_back(std::move(raw));
      }
    }
    rec.val_loss = val_defined ? val_sum / static_cast<double>(val_defined)
                               : std::numeric_limits<double>::infinity();
    const auto eval = metrics::evaluate_predictions(preds, val);
    rec.val_mae = eval.mae;
    rec.val_mse = eval.mse;
    rec.val_mssim = eval.mssim;
    report.epochs.push_back(rec);
    require_finite_losses(rec);
    if (options.on_epoch) options.on_epoch(rec);

    stopped = stopper.update(rec.val_loss);
    if (stopper.improved() && options.restore_best) {
      best_state.clear();
      for (const auto& c : components) best_state.merge(bundle.state(c));
    }
    if (stopped) break;
  }
  if (options.restore_best && !best_state.empty()) {
    bundle.load_state(best_state, false);
  }
  finish_report(report, stopper, stopped);
  return result;
}

}  // namespace naturamap::train
