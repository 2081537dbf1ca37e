#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "emomsase/graph.hpp"
#include "emomsase/model.hpp"

namespace emomsase::gradcheck {

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
  bool frozen = false;
};

struct Report {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;  // every param strictly below tolerance
};

struct Options {
  double epsilon = 1e-4;
  // Denominator floor for |a - n| / max(|a|, |n|, floor).
  double floor = 1e-8;
};

using LossBuilder = std::function<graph::Var(graph::Tape&)>;

/// Compares tape gradients against central differences for every entry of every
/// param. Frozen params are treated as constants: both gradients are reported as zero.
Report grad_check(std::span<graph::Param* const> params, const LossBuilder& loss, double tolerance,
                  const Options& options = {});

/// Two domains with two modalities each, H = 4, F = 3, SE reduction 4.
model::ModelConfig micro_config(std::uint64_t seed, model::Variant variant = model::Variant::EMO_MSASE);

struct MicroRun {
  std::size_t batch = 3;
  std::size_t timesteps = 6;
  std::uint64_t data_seed = 0;
  std::vector<std::string> frozen;  // param names held fixed
};

/// Random inputs and labels shaped for `config`.
model::Batch random_batch(const model::ModelConfig& config, std::size_t batch, std::size_t timesteps,
                          std::uint64_t seed);

/// Builds the model, draws a random batch and checks mean cross-entropy gradients.
Report grad_check(const model::ModelConfig& config, double tolerance, const MicroRun& run = {},
                  const Options& options = {});

}  // namespace emomsase::gradcheck
