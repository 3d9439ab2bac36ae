#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "naturamap/nn.hpp"

namespace naturamap::optim {

struct TrainConfig {
  double lr_max = 1e-4;
  double lr_min = 0.0;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 16;
  std::size_t t0 = 10;
  std::size_t t_mult = 2;
  std::size_t patience = 15;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;
  int precision = 32;
  bool augment = true;
  bool weighted_sampling = true;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Losses.

// Mean |pred - target| over pixels with water_mask == 0. Returns nullopt for
// an all-water sample.
std::optional<double> masked_mae_loss(const TensorArray& pred,
                                      const TensorArray& target,
                                      const TensorArray& water_mask);

// Mean squared error over all elements.
double reconstruction_loss(const TensorArray& recon, const TensorArray& tile);

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor<T> grad;
  std::size_t included = 0;  // samples contributing to the mean
  std::size_t excluded = 0;  // all-water samples skipped
};

// Batched masked MAE over N x h x w x 1 (or N x h x w) pred/target/mask.
// The loss is the mean of per-sample masked means; the subgradient of |x| at
// 0 is taken as 0 and the gradient is exactly zero at water pixels.
template <typename T>
LossResult<T> masked_mae_batch(const Tensor<T>& pred, const Tensor<T>& target,
                               const Tensor<T>& mask);

template <typename T>
LossResult<T> mse_batch(const Tensor<T>& recon, const Tensor<T>& tile);

// ---------------------------------------------------------------------------
// Schedule: cosine annealing with warm restarts, stepped per epoch.

struct CycleInfo {
  std::size_t index = 0;
  double start = 0.0;   // cumulative epoch of the restart
  double length = 0.0;  // T_i = T0 * Tmult^i
};

CycleInfo cycle_at(double epoch, const TrainConfig& cfg);
double lr_at(double epoch, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay.

template <typename T>
class Adam {
 public:
  explicit Adam(const TrainConfig& cfg) : cfg_(cfg) {}

  // p <- p - lr * wd * p, then the bias-corrected Adam update. Throws
  // NumericalError naming the first parameter with a non-finite gradient
  // before anything is modified.
  void step(const nn::ParamRefs<T>& params, double lr);

  std::int64_t steps() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  TrainConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

// ---------------------------------------------------------------------------
// Early stopping on validation loss.

struct EarlyStopDecision {
  bool stop = false;
  std::size_t best_epoch = 0;
};

// history[i] is the validation loss of epoch i. Stops once `patience`
// consecutive epochs fail to beat the best value.
EarlyStopDecision early_stop(const std::vector<double>& history,
                             std::size_t patience);

}  // namespace naturamap::optim
