#include "emomsase/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "emomsase/error.hpp"

namespace emomsase::train {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning_rate must be positive");
  if (batch_size == 0) throw Error(ErrorKind::InvalidArgument, "batch_size must be positive");
  if (max_epochs <= 0) throw Error(ErrorKind::InvalidArgument, "max_epochs must be positive");
  if (early_stop_patience <= 0 || early_stop_patience > max_epochs) {
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("early_stop_patience must lie in [1, {}], got {}", max_epochs, early_stop_patience));
  }
  if (!(adamw.beta1 > 0.0 && adamw.beta1 < 1.0) || !(adamw.beta2 > 0.0 && adamw.beta2 < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "AdamW betas must lie in (0, 1)");
  }
  if (!(adamw.epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "AdamW epsilon must be positive");
  if (adamw.weight_decay < 0.0) throw Error(ErrorKind::InvalidArgument, "weight_decay must be non-negative");
}

double cross_entropy(const Eigen::VectorXd& probs, int y) {
  if (y < 0 || y >= probs.size()) {
    throw Error(ErrorKind::InvalidClass, fmt::format("class {} outside [0, {})", y, probs.size()));
  }
  return -std::log(probs(y) + graph::kProbEpsilon);
}

void adamw_step(std::span<graph::Param* const> params, AdamWState& state, const TrainConfig& config) {
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(graph::Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(graph::Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "optimizer state does not match the parameter list");
  }
  for (const auto* p : params) {
    if (!p->frozen && !p->grad.allFinite()) {
      throw Error(ErrorKind::NonFiniteGradient, fmt::format("gradient of {} is not finite", p->name));
    }
  }

  ++state.step;
  const auto& o = config.adamw;
  const double lr = config.learning_rate;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (p.frozen) continue;
    auto& m = state.m[i];
    auto& v = state.v[i];
    p.value *= 1.0 - lr * o.weight_decay;
    m = o.beta1 * m + (1.0 - o.beta1) * p.grad;
    v = o.beta2 * v + (1.0 - o.beta2) * p.grad.cwiseProduct(p.grad);
    const double step_size = lr / bc1;
    const double sqrt_bc2 = std::sqrt(bc2);
    p.value.array() -= step_size * m.array() / (v.array().sqrt() / sqrt_bc2 + o.epsilon);
  }
}

bool EarlyStopping::update(int epoch, double val_loss) {
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    wait_ = 0;
    return true;
  }
  ++wait_;
  return false;
}

std::string TrainLog::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_accuracy\n";
  for (const auto& e : epochs) {
    out += fmt::format("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.val_accuracy);
  }
  return out;
}

std::string TrainLog::to_json() const {
  nlohmann::ordered_json j;
  j["stopped_epoch"] = stopped_epoch;
  j["best_epoch"] = best_epoch;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    rows.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
                    {"val_accuracy", e.val_accuracy}});
  }
  j["epochs"] = std::move(rows);
  return j.dump(2);
}

void write_log_csv(const std::filesystem::path& path, const TrainLog& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, fmt::format("cannot write {}", path.string()));
  out << log.to_csv();
}

LossAccuracy evaluate_loss(const model::Model& model, std::span<const model::Example> data, std::size_t chunk) {
  if (data.empty()) throw Error(ErrorKind::EmptySplit, "cannot evaluate an empty set");
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const auto n = std::min(chunk, data.size() - start);
    const auto batch = model::make_batch(data.subspan(start, n));
    const auto probs = model.predict(batch);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd row = probs.row(static_cast<Eigen::Index>(i)).transpose();
      loss += cross_entropy(row, batch.labels[i]);
      Eigen::Index pred = 0;
      row.maxCoeff(&pred);
      if (pred == batch.labels[i]) ++correct;
    }
  }
  const auto n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

TrainLog fit(model::Model& model, std::span<const model::Example> train_set,
             std::span<const model::Example> val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw Error(ErrorKind::EmptySplit, "training set is empty");
  if (val_set.empty()) throw Error(ErrorKind::EmptySplit, "validation set is empty");

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const auto params = model.params();
  AdamWState state;
  EarlyStopping stopper(config.early_stop_patience);
  std::vector<graph::Matrix> best = model.snapshot();
  TrainLog log;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto n = std::min(config.batch_size, order.size() - start);
      const auto batch = model::make_batch(train_set, std::span(order).subspan(start, n));
      model.zero_grad();
      graph::Tape tape;
      const auto trace = model.forward(tape, batch);
      const auto loss = graph::cross_entropy(tape, trace.head.probs, batch.labels);
      const double value = tape.value(loss)(0, 0);
      if (!std::isfinite(value)) {
        throw Error(ErrorKind::DivergedLoss, fmt::format("training loss became {} at epoch {}", value, epoch));
      }
      tape.backward(loss);
      adamw_step(params, state, config);
      loss_sum += value * static_cast<double>(n);
    }

    const auto val = evaluate_loss(model, val_set);
    if (!std::isfinite(val.loss)) {
      throw Error(ErrorKind::DivergedLoss, fmt::format("validation loss became {} at epoch {}", val.loss, epoch));
    }
    log.epochs.push_back({epoch, loss_sum / static_cast<double>(train_set.size()), val.loss, val.accuracy});
    log.stopped_epoch = epoch;
    if (stopper.update(epoch, val.loss)) best = model.snapshot();
    if (stopper.should_stop()) break;
  }

  log.best_epoch = stopper.best_epoch();
  model.restore(best);
  return log;
}

}  // namespace emomsase::train
