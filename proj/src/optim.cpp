#include "naturamap/optim.hpp"

#include <cmath>
#include <numbers>

namespace naturamap::optim {

void TrainConfig::validate() const {
  if (!(lr_max > lr_min && lr_min >= 0.0)) {
    throw ConfigError("need lr_max > lr_min >= 0");
  }
  if (t0 < 1) throw ConfigError("T0 must be >= 1");
  if (t_mult < 1) throw ConfigError("Tmult must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (precision != 32) {
    throw ConfigError("only 32-bit precision is implemented (got " +
                      std::to_string(precision) + ")");
  }
}

std::optional<double> masked_mae_loss(const TensorArray& pred,
                                      const TensorArray& target,
                                      const TensorArray& water_mask) {
  if (pred.size() != target.size() || pred.size() != water_mask.size()) {
    throw ShapeError("masked_mae_loss: shape mismatch " +
                     shape_to_string(pred.shape()) + " / " +
                     shape_to_string(target.shape()) + " / " +
                     shape_to_string(water_mask.shape()));
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (water_mask[i] != 0.0f) continue;
    sum += std::abs(static_cast<double>(pred[i]) - target[i]);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

double reconstruction_loss(const TensorArray& recon, const TensorArray& tile) {
  if (recon.shape() != tile.shape()) {
    throw ShapeError("reconstruction_loss: shape mismatch " +
                     shape_to_string(recon.shape()) + " vs " +
                     shape_to_string(tile.shape()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const double d = static_cast<double>(recon[i]) - tile[i];
    sum += d * d;
  }
  return sum / static_cast<double>(recon.size());
}

template <typename T>
LossResult<T> masked_mae_batch(const Tensor<T>& pred, const Tensor<T>& target,
                               const Tensor<T>& mask) {
  if (pred.size() != target.size() || pred.size() != mask.size()) {
    throw ShapeError("masked_mae_batch: shape mismatch");
  }
  const std::size_t N = pred.dim(0);
  const std::size_t P = pred.size() / N;
  LossResult<T> out;
  out.grad = Tensor<T>(pred.shape());
  std::vector<std::size_t> counts(N, 0);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = n * P; i < (n + 1) * P; ++i) {
      if (mask[i] == T{0}) ++counts[n];
    }
    if (counts[n] == 0) ++out.excluded; else ++out.included;
  }
  if (out.included == 0) return out;
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    if (counts[n] == 0) continue;
    const double scale = 1.0 / (static_cast<double>(counts[n]) *
                                static_cast<double>(out.included));
    double sum = 0.0;
    for (std::size_t i = n * P; i < (n + 1) * P; ++i) {
      if (mask[i] != T{0}) continue;
      const double d = static_cast<double>(pred[i]) - target[i];
      sum += std::abs(d);
      out.grad[i] = static_cast<T>(d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0));
    }
    total += sum / static_cast<double>(counts[n]);
  }
  out.value = total / static_cast<double>(out.included);
  return out;
}

template <typename T>
LossResult<T> mse_batch(const Tensor<T>& recon, const Tensor<T>& tile) {
  if (recon.shape() != tile.shape()) {
    throw ShapeError("mse_batch: shape mismatch " +
                     shape_to_string(recon.shape()) + " vs " +
                     shape_to_string(tile.shape()));
  }
  LossResult<T> out;
  out.grad = Tensor<T>(recon.shape());
  const double inv = 1.0 / static_cast<double>(recon.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const double d = static_cast<double>(recon[i]) - tile[i];
    sum += d * d;
    out.grad[i] = static_cast<T>(2.0 * d * inv);
  }
  out.value = sum * inv;
  out.included = recon.dim(0);
  return out;
}

template LossResult<float> masked_mae_batch(const Tensor<float>&,
                                            const Tensor<float>&,
                                            const Tensor<float>&);
template LossResult<double> masked_mae_batch(const Tensor<double>&,
                                             const Tensor<double>&,
                                             const Tensor<double>&);
template LossResult<float> mse_batch(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> mse_batch(const Tensor<double>&,
                                      const Tensor<double>&);

CycleInfo cycle_at(double epoch, const TrainConfig& cfg) {
  if (!(epoch >= 0.0)) throw ConfigError("epoch must be non-negative");
  CycleInfo c{0, 0.0, static_cast<double>(cfg.t0)};
  if (cfg.t_mult == 1) {
    c.index = static_cast<std::size_t>(std::floor(epoch / c.length));
    c.start = static_cast<double>(c.index) * c.length;
    return c;
  }
  while (epoch >= c.start + c.length) {
    c.start += c.length;
    c.length *= static_cast<double>(cfg.t_mult);
    ++c.index;
  }
  return c;
}

double lr_at(double epoch, const TrainConfig& cfg) {
  const auto c = cycle_at(epoch, cfg);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) *
                          (1.0 + std::cos(std::numbers::pi *
                                          (epoch - c.start) / c.length));
}

template <typename T>
void Adam<T>::step(const nn::ParamRefs<T>& params, double lr) {
  for (const auto* p : params) {
    for (T g : p->grad.values()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericalError("non-finite gradient in parameter '" + p->name +
                             "'");
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto* p : params) {
    auto& mom = moments_[p->name];
    if (mom.m.size() != p->value.size()) {
      mom.m.assign(p->value.size(), 0.0);
      mom.v.assign(p->value.size(), 0.0);
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      double w = p->value[i];
      w -= lr * cfg_.weight_decay * w;
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g;
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      w -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      p->value[i] = static_cast<T>(w);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

EarlyStopDecision early_stop(const std::vector<double>& history,
                             std::size_t patience) {
  EarlyStopDecision d;
  if (history.empty()) return d;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] < history[d.best_epoch]) d.best_epoch = i;
  }
  d.stop = history.size() - 1 - d.best_epoch >= patience;
  return d;
}

}  // namespace naturamap::optim
