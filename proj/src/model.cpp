#include "emomsase/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "emomsase/error.hpp"

namespace emomsase::model {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::LSTMSA: return "lstmsa";
    case Variant::LSTMMSA: return "lstmmsa";
    case Variant::EMO_MSASE: return "emomsase";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  if (s == "lstmsa") return Variant::LSTMSA;
  if (s == "lstmmsa") return Variant::LSTMMSA;
  if (s == "emomsase") return Variant::EMO_MSASE;
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown variant '{}'", s));
}

void ModelConfig::validate() const {
  if (domains.empty()) throw Error(ErrorKind::InvalidArgument, "model needs at least one domain");
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (domains[i].modalities.empty()) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("domain {} has no modalities", dataio::to_string(domains[i].domain)));
    }
    if (i > 0 && !(domains[i - 1].domain < domains[i].domain)) {
      throw Error(ErrorKind::InvalidArgument, "domains must be distinct and ordered Peripheral, Trunk, Head");
    }
    for (const auto& m : domains[i].modalities) {
      if (m.features == 0) throw Error(ErrorKind::InvalidArgument, fmt::format("modality {} has no features", m.channel));
    }
  }
  if (hidden == 0 || layers == 0 || reduction == 0 || classes < 2) {
    throw Error(ErrorKind::InvalidArgument, "hidden, layers and reduction must be positive, classes >= 2");
  }
}

std::size_t ModelConfig::modality_count() const {
  std::size_t n = 0;
  for (const auto& d : domains) n += d.modalities.size();
  return n;
}

ModelConfig ModelConfig::restricted_to(dataio::Domain d) const {
  ModelConfig out = *this;
  out.domains.clear();
  for (const auto& dom : domains) {
    if (dom.domain == d) out.domains.push_back(dom);
  }
  if (out.domains.empty()) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("domain {} is not configured", dataio::to_string(d)));
  }
  return out;
}

Matrix uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  // Fill row-major so the draw order does not depend on storage order.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
  }
  return m;
}

// ---- building blocks -------------------------------------------------------

std::vector<Var> lstm_features(Tape& t, std::span<const Var> steps, const LstmStack& stack) {
  if (steps.empty()) throw Error(ErrorKind::SequenceTooShort, "LSTM needs at least one timestep");
  const auto batch = t.value(steps[0]).rows();
  const auto hidden = static_cast<Eigen::Index>(stack.hidden);
  std::vector<Var> seq(steps.begin(), steps.end());
  for (const auto& layer : stack.layers) {
    const Var w = t.param(*layer.w);
    const Var u = t.param(*layer.u);
    const Var b = t.param(*layer.b);
    if (t.value(w).cols() != t.value(seq[0]).cols()) {
      throw Error(ErrorKind::ShapeMismatch, fmt::format("LSTM layer expects {} inputs, got {}", t.value(w).cols(),
                                                        t.value(seq[0]).cols()));
    }
    Var state = t.constant(Matrix::Zero(batch, 2 * hidden));
    std::vector<Var> out;
    out.reserve(seq.size());
    for (const auto& x : seq) {
      state = graph::lstm_cell(t, x, state, w, u, b);
      out.push_back(graph::slice_cols(t, state, 0, hidden));
    }
    seq = std::move(out);
  }
  return seq;
}

AttentionPool scale_attention(Tape& t, std::span<const Var> hidden, Var u) {
  if (hidden.empty()) throw Error(ErrorKind::SequenceTooShort, "attention over an empty sequence");
  std::vector<Var> scores;
  scores.reserve(hidden.size());
  for (const auto& h : hidden) scores.push_back(graph::matmul_nt(t, h, u));
  const Var weights = graph::softmax_rows(t, graph::concat_cols(t, scores));
  std::vector<Var> terms;
  terms.reserve(hidden.size());
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const Var a = graph::slice_cols(t, weights, static_cast<Eigen::Index>(i), 1);
    terms.push_back(graph::mul_col(t, hidden[i], a));
  }
  return {weights, graph::sum(t, terms)};
}

std::vector<Var> merge_timesteps(Tape& t, std::span<const Var> hidden, std::size_t factor) {
  if (factor == 0) throw Error(ErrorKind::InvalidArgument, "merge factor must be positive");
  if (hidden.size() < factor) {
    throw Error(ErrorKind::SequenceTooShort, fmt::format("{} timesteps cannot merge by {}", hidden.size(), factor));
  }
  std::vector<Var> merged;
  for (std::size_t j = 0; j + factor <= hidden.size(); j += factor) {
    merged.push_back(graph::mean(t, hidden.subspan(j, factor)));
  }
  return merged;
}

CavTrace msa(Tape& t, std::span<const Var> hidden, const MsaParams& params, bool multi_scale) {
  CavTrace out;
  out.short_term = scale_attention(t, hidden, t.param(*params.u_short));
  if (!multi_scale) {
    out.cav = out.short_term.pooled;
    return out;
  }
  if (hidden.size() < 3) {
    throw Error(ErrorKind::SequenceTooShort, fmt::format("multi-scale attention needs T >= 3, got {}", hidden.size()));
  }
  out.medium_rows = merge_timesteps(t, hidden, 2);
  out.long_rows = merge_timesteps(t, hidden, 3);
  out.medium_term = scale_attention(t, out.medium_rows, t.param(*params.u_medium));
  out.long_term = scale_attention(t, out.long_rows, t.param(*params.u_long));
  const Var parts[] = {out.short_term.pooled, out.medium_term->pooled, out.long_term->pooled};
  out.cav = graph::concat_cols(t, parts);
  return out;
}

SeTrace se_recalibrate(Tape& t, std::span<const Var> cavs, const SeBlock& se) {
  if (cavs.empty()) throw Error(ErrorKind::ShapeMismatch, "SE block over zero modalities");
  SeTrace out;
  out.z = graph::mean(t, cavs);
  const Var excited = graph::relu(t, graph::matmul_nt(t, out.z, t.param(*se.w1)));
  out.s = graph::sigmoid(t, graph::matmul_nt(t, excited, t.param(*se.w2)));
  for (const auto& cav : cavs) out.calibrated.push_back(graph::mul(t, cav, out.s));
  return out;
}

HeadTrace fuse_and_classify(Tape& t, std::span<const Var> features, const ClassifierHead& head) {
  HeadTrace out;
  out.global = graph::concat_cols(t, features);
  const Var w = t.param(*head.w);
  if (t.value(w).cols() != t.value(out.global).cols()) {
    throw Error(ErrorKind::DimensionMismatch, fmt::format("head expects {} features, global vector has {}",
                                                          t.value(w).cols(), t.value(out.global).cols()));
  }
  out.logits = graph::dense(t, out.global, w, t.param(*head.b));
  out.probs = graph::softmax_rows(t, out.logits);
  return out;
}

// ---- eager helpers ---------------------------------------------------------

namespace {

std::vector<Var> rows_as_steps(Tape& t, const Matrix& x) {
  std::vector<Var> steps;
  for (Eigen::Index r = 0; r < x.rows(); ++r) steps.push_back(t.constant(x.row(r)));
  return steps;
}

Matrix stack_rows(const Tape& t, std::span<const Var> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), t.value(rows[0]).cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = t.value(rows[i]).row(0);
  return out;
}

}  // namespace

Matrix lstm_features(const Matrix& x, const LstmStack& stack) {
  Tape t;
  const auto steps = rows_as_steps(t, x);
  return stack_rows(t, lstm_features(t, steps, stack));
}

AttentionResult scale_attention(const Matrix& hidden, const Eigen::VectorXd& u) {
  Tape t;
  const auto steps = rows_as_steps(t, hidden);
  const auto pool = scale_attention(t, steps, t.constant(u.transpose()));
  return {t.value(pool.weights).row(0).transpose(), t.value(pool.pooled).row(0).transpose()};
}

Matrix merge_timesteps(const Matrix& hidden, std::size_t factor) {
  Tape t;
  const auto steps = rows_as_steps(t, hidden);
  return stack_rows(t, merge_timesteps(t, steps, factor));
}

Cav msa(const Matrix& hidden, const MsaParams& params) {
  Tape t;
  const auto steps = rows_as_steps(t, hidden);
  const bool multi = params.u_medium != nullptr && params.u_long != nullptr;
  const auto trace = msa(t, steps, params, multi);
  Cav out;
  out.v_short = t.value(trace.short_term.pooled).row(0).transpose();
  if (multi) {
    out.v_medium = t.value(trace.medium_term->pooled).row(0).transpose();
    out.v_long = t.value(trace.long_term->pooled).row(0).transpose();
  }
  out.concatenated = t.value(trace.cav).row(0).transpose();
  return out;
}

Matrix se_recalibrate(const Matrix& stacked, const SeBlock& se) {
  Tape t;
  const auto cavs = rows_as_steps(t, stacked);
  const auto trace = se_recalibrate(t, cavs, se);
  return stack_rows(t, trace.calibrated);
}

Eigen::VectorXd fuse_and_classify(std::span<const Matrix> domains, const ClassifierHead& head) {
  Tape t;
  std::vector<Var> features;
  for (const auto& d : domains) {
    for (Eigen::Index r = 0; r < d.rows(); ++r) features.push_back(t.constant(d.row(r)));
  }
  const auto trace = fuse_and_classify(t, features, head);
  return t.value(trace.probs).row(0).transpose();
}

// ---- data ------------------------------------------------------------------

Batch make_batch(std::span<const Example> data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error(ErrorKind::EmptySplit, "empty batch");
  const auto& first = data[indices[0]];
  Batch batch;
  const auto n = static_cast<Eigen::Index>(indices.size());
  batch.inputs.resize(first.inputs.size());
  for (std::size_t m = 0; m < first.inputs.size(); ++m) {
    const auto steps = first.inputs[m].rows();
    const auto feats = first.inputs[m].cols();
    batch.inputs[m].assign(static_cast<std::size_t>(steps), Matrix(n, feats));
    for (Eigen::Index b = 0; b < n; ++b) {
      const auto& x = data[indices[static_cast<std::size_t>(b)]].inputs.at(m);
      if (x.rows() != steps || x.cols() != feats) {
        throw Error(ErrorKind::ShapeMismatch, fmt::format("modality {}: {}x{} vs {}x{}", m, x.rows(), x.cols(), steps, feats));
      }
      for (Eigen::Index s = 0; s < steps; ++s) batch.inputs[m][static_cast<std::size_t>(s)].row(b) = x.row(s);
    }
  }
  for (auto i : indices) batch.labels.push_back(data[i].label);
  return batch;
}

Batch make_batch(std::span<const Example> data) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch(data, all);
}

// ---- model -----------------------------------------------------------------

Param& Model::add_param(std::string name, Matrix value) {
  params_.emplace_back(std::move(name), std::move(value));
  return params_.back();
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  std::stable_sort(config_.domains.begin(), config_.domains.end(),
                   [](const DomainSpec& a, const DomainSpec& b) { return a.domain < b.domain; });
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const std::size_t h = config_.hidden;

  for (const auto& dom : config_.domains) {
    for (const auto& mod : dom.modalities) {
      LstmStack stack;
      stack.hidden = h;
      std::size_t in = mod.features;
      for (std::size_t l = 0; l < config_.layers; ++l) {
        const auto prefix = fmt::format("{}.lstm{}", mod.channel, l);
        Matrix bias = Matrix::Zero(static_cast<Eigen::Index>(4 * h), 1);
        bias.middleRows(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(h)).setOnes();
        LstmLayer layer;
        layer.w = &add_param(prefix + ".W", uniform_init(4 * h, in, in, rng));
        layer.u = &add_param(prefix + ".U", uniform_init(4 * h, h, h, rng));
        layer.b = &add_param(prefix + ".b", std::move(bias));
        stack.layers.push_back(layer);
        in = h;
      }
      lstm_.push_back(std::move(stack));

      MsaParams attn;
      attn.u_short = &add_param(mod.channel + ".u_short", uniform_init(1, h, h, rng));
      if (config_.multi_scale()) {
        attn.u_medium = &add_param(mod.channel + ".u_medium", uniform_init(1, h, h, rng));
        attn.u_long = &add_param(mod.channel + ".u_long", uniform_init(1, h, h, rng));
      }
      msa_.push_back(attn);
    }
    if (config_.uses_se()) {
      const std::size_t wide = config_.cav_size();
      const std::size_t narrow = config_.se_bottleneck();
      const auto prefix = fmt::format("{}.se", dataio::to_string(dom.domain));
      SeBlock se;
      se.w1 = &add_param(prefix + ".W1", uniform_init(narrow, wide, wide, rng));
      se.w2 = &add_param(prefix + ".W2", uniform_init(wide, narrow, narrow, rng));
      se_.push_back(se);
    }
  }
  const std::size_t global = config_.global_size();
  head_.w = &add_param("head.W", uniform_init(config_.classes, global, global, rng));
  head_.b = &add_param("head.b", Matrix::Zero(static_cast<Eigen::Index>(config_.classes), 1));
}

ForwardTrace Model::forward(Tape& t, const Batch& batch) const {
  if (batch.inputs.size() != lstm_.size()) {
    throw Error(ErrorKind::ShapeMismatch, fmt::format("batch has {} modalities, model {}", batch.inputs.size(), lstm_.size()));
  }
  ForwardTrace trace;
  std::vector<Var> features;
  std::size_t m = 0;
  for (const auto& dom : config_.domains) {
    std::vector<Var> cavs;
    for (std::size_t k = 0; k < dom.modalities.size(); ++k, ++m) {
      const auto& steps_in = batch.inputs[m];
      if (steps_in.empty() || static_cast<std::size_t>(steps_in[0].cols()) != dom.modalities[k].features) {
        throw Error(ErrorKind::ShapeMismatch, fmt::format("modality {} expects F = {}", dom.modalities[k].channel,
                                                          dom.modalities[k].features));
      }
      std::vector<Var> steps;
      steps.reserve(steps_in.size());
      for (const auto& x : steps_in) steps.push_back(t.constant(x));
      ModalityTrace mt;
      mt.hidden = lstm_features(t, steps, lstm_[m]);
      mt.cav = msa(t, mt.hidden, msa_[m], config_.multi_scale());
      cavs.push_back(mt.cav.cav);
      trace.modalities.push_back(std::move(mt));
    }
    if (config_.uses_se()) {
      auto se = se_recalibrate(t, cavs, se_[trace.domains.size()]);
      features.insert(features.end(), se.calibrated.begin(), se.calibrated.end());
      trace.domains.push_back(std::move(se));
    } else {
      features.insert(features.end(), cavs.begin(), cavs.end());
    }
  }
  trace.head = fuse_and_classify(t, features, head_);
  return trace;
}

Matrix Model::predict(const Batch& batch) const {
  Tape t;
  const auto trace = forward(t, batch);
  return t.value(trace.head.probs);
}

std::vector<Param*> Model::params() {
  std::vector<Param*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

Param& Model::param(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw Error(ErrorKind::InvalidArgument, fmt::format("no parameter named '{}'", name));
}

void Model::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<Matrix> Model::snapshot() const {
  std::vector<Matrix> out;
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

void Model::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw Error(ErrorKind::ShapeMismatch, "snapshot does not match model");
  for (std::size_t i = 0; i < values.size(); ++i) params_[i].value = values[i];
}

}  // namespace emomsase::model
