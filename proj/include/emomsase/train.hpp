#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emomsase/graph.hpp"
#include "emomsase/model.hpp"

namespace emomsase::train {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 16;
  int max_epochs = 50;
  int early_stop_patience = 10;
  AdamWConfig adamw;
  std::uint64_t seed = 0;

  void validate() const;
};

/// -log(probs[y] + 1e-12) for a single prediction.
double cross_entropy(const Eigen::VectorXd& probs, int y);

struct AdamWState {
  std::vector<graph::Matrix> m;
  std::vector<graph::Matrix> v;
  std::int64_t step = 0;
};

/// One decoupled-decay Adam update over every non-frozen param, using Param::grad.
void adamw_step(std::span<graph::Param* const> params, AdamWState& state, const TrainConfig& config);

/// Tracks the best validation loss. should_stop() turns true once the number of
/// consecutive non-improving epochs exceeds the patience.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Returns true when val_loss is a new best.
  bool update(int epoch, double val_loss);
  bool should_stop() const { return wait_ > patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int wait_ = 0;
  int best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int stopped_epoch = 0;
  int best_epoch = 0;

  std::string to_csv() const;
  std::string to_json() const;
};

void write_log_csv(const std::filesystem::path& path, const TrainLog& log);

struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean cross-entropy and argmax accuracy over a dataset, evaluated in chunks.
LossAccuracy evaluate_loss(const model::Model& model, std::span<const model::Example> data,
                           std::size_t chunk = 64);

/// Mini-batch AdamW with early stopping on validation loss. On return the model holds
/// the parameters of the best epoch.
TrainLog fit(model::Model& model, std::span<const model::Example> train_set,
             std::span<const model::Example> val_set, const TrainConfig& config);

}  // namespace emomsase::train
