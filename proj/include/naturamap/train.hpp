#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "naturamap/metrics.hpp"
#include "naturamap/model.hpp"
#include "naturamap/optim.hpp"

namespace naturamap::train {

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_mae = 0.0;
  double val_mse = 0.0;
  double val_mssim = 0.0;
};

struct TrainReport {
  std::string stage;  // "autoencoder" | "baseline" | "proposed"
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::string stop_reason;  // "early_stop" | "max_epochs"
  std::size_t skipped_samples = 0;  // all-water samples excluded from the loss
  bool validated_on_train = false;  // no validation split was supplied

  std::string table() const;
  std::string summary() const;
  // report.csv + summary.txt
  void write(const std::filesystem::path& dir) const;
};

struct TrainOptions {
  // Called after every epoch; useful for progress output.
  std::function<void(const EpochRecord&)> on_epoch;
  // Receives warnings (e.g. skipped all-water samples).
  std::function<void(const std::string&)> on_warning;
  // Restore the parameters of the best validation epoch before returning.
  bool restore_best = true;
};

struct TrainResult {
  model::ModelBundle bundle;
  TrainReport report;
};

// Stage 1: ae_enc + ae_dec reconstruct context tiles under MSE. An empty
// validation set falls back to the training tiles.
TrainResult train_autoencoder(const std::vector<data::Sample>& train,
                              const std::vector<data::Sample>& val,
                              const model::ArchConfig& arch,
                              const optim::TrainConfig& cfg,
                              const TrainOptions& options = {});

// Stage 2: masked-MAE regression. The proposed variant requires the stage-1
// bundle, whose AE encoder is copied and frozen; the baseline forbids it.
TrainResult train_model(const std::vector<data::Sample>& train,
                        const std::vector<data::Sample>& val,
                        const model::ArchConfig& arch,
                        const optim::TrainConfig& cfg, model::Variant variant,
                        const model::ModelBundle* autoencoder,
                        const TrainOptions& options = {});

}  // namespace naturamap::train
