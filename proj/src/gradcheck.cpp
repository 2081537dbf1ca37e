#include "emomsase/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "emomsase/error.hpp"

namespace emomsase::gradcheck {

using graph::Param;
using graph::Tape;

Report grad_check(std::span<Param* const> params, const LossBuilder& loss, double tolerance, const Options& options) {
  for (auto* p : params) p->zero_grad();
  {
    Tape t;
    t.backward(loss(t));
  }
  auto evaluate = [&]() {
    Tape t;
    return t.value(loss(t))(0, 0);
  };

  Report report;
  report.tolerance = tolerance;
  for (auto* p : params) {
    ParamCheck check;
    check.name = p->name;
    check.frozen = p->frozen;
    if (!p->frozen) {
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        double& x = p->value.data()[i];
        const double saved = x;
        x = saved + options.epsilon;
        const double up = evaluate();
        x = saved - options.epsilon;
        const double down = evaluate();
        x = saved;
        const double numeric = (up - down) / (2.0 * options.epsilon);
        const double analytic = p->grad.data()[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
        check.max_rel_error = std::max(check.max_rel_error, std::abs(analytic - numeric) / denom);
        check.max_abs_analytic = std::max(check.max_abs_analytic, std::abs(analytic));
        check.max_abs_numeric = std::max(check.max_abs_numeric, std::abs(numeric));
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.params.push_back(std::move(check));
  }
  report.passed = std::all_of(report.params.begin(), report.params.end(),
                              [&](const ParamCheck& c) { return c.max_rel_error < tolerance; });
  return report;
}

model::ModelConfig micro_config(std::uint64_t seed, model::Variant variant) {
  model::ModelConfig config;
  config.domains = {
      {dataio::Domain::Peripheral, {{"p0", 3}, {"p1", 3}}},
      {dataio::Domain::Head, {{"h0", 3}, {"h1", 3}}},
  };
  config.hidden = 4;
  config.reduction = 4;
  config.variant = variant;
  config.seed = seed;
  return config;
}

model::Batch random_batch(const model::ModelConfig& config, std::size_t batch, std::size_t timesteps,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, static_cast<int>(config.classes) - 1);
  model::Batch out;
  const auto rows = static_cast<Eigen::Index>(batch);
  for (const auto& dom : config.domains) {
    for (const auto& mod : dom.modalities) {
      std::vector<graph::Matrix> steps;
      for (std::size_t t = 0; t < timesteps; ++t) {
        graph::Matrix x(rows, static_cast<Eigen::Index>(mod.features));
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
          for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = normal(rng);
        }
        steps.push_back(std::move(x));
      }
      out.inputs.push_back(std::move(steps));
    }
  }
  for (std::size_t b = 0; b < batch; ++b) out.labels.push_back(label(rng));
  return out;
}

Report grad_check(const model::ModelConfig& config, double tolerance, const MicroRun& run, const Options& options) {
  model::Model m(config);
  for (const auto& name : run.frozen) m.param(name).frozen = true;
  const auto batch = random_batch(m.config(), run.batch, run.timesteps, run.data_seed);
  const auto params = m.params();
  return grad_check(
      params,
      [&](Tape& t) {
        const auto trace = m.forward(t, batch);
        return graph::cross_entropy(t, trace.head.probs, batch.labels);
      },
      tolerance, options);
}

}  // namespace emomsase::gradcheck
