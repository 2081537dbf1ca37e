#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emomsase/dataio.hpp"
#include "emomsase/graph.hpp"

namespace emomsase::model {

using graph::Matrix;
using graph::Param;
using graph::Tape;
using graph::Var;

/// Ablation ladder: single-scale attention, three-scale attention, three-scale + SE.
enum class Variant { LSTMSA, LSTMMSA, EMO_MSASE };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

struct ModalitySpec {
  std::string channel;
  std::size_t features = 0;  // F, samples per window
};

struct DomainSpec {
  dataio::Domain domain = dataio::Domain::Peripheral;
  std::vector<ModalitySpec> modalities;
};

struct ModelConfig {
  std::vector<DomainSpec> domains;  // kept in Peripheral, Trunk, Head order
  std::size_t hidden = 128;
  std::size_t layers = 2;
  std::size_t reduction = 4;
  std::size_t classes = 2;
  Variant variant = Variant::EMO_MSASE;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t modality_count() const;
  std::size_t cav_size() const { return variant == Variant::LSTMSA ? hidden : 3 * hidden; }
  std::size_t se_bottleneck() const { return std::max<std::size_t>(1, cav_size() / reduction); }
  std::size_t global_size() const { return modality_count() * cav_size(); }
  bool uses_se() const { return variant == Variant::EMO_MSASE; }
  bool multi_scale() const { return variant != Variant::LSTMSA; }
  /// Same hyperparameters restricted to one domain.
  ModelConfig restricted_to(dataio::Domain d) const;
};

struct LstmLayer {
  Param* w = nullptr;  // 4H x in
  Param* u = nullptr;  // 4H x H
  Param* b = nullptr;  // 4H x 1
};

struct LstmStack {
  std::vector<LstmLayer> layers;
  std::size_t hidden = 0;
};

/// Context vectors, one per temporal scale; medium/long are absent for LSTMSA.
struct MsaParams {
  Param* u_short = nullptr;
  Param* u_medium = nullptr;
  Param* u_long = nullptr;
};

struct SeBlock {
  Param* w1 = nullptr;  // (3H/r) x 3H
  Param* w2 = nullptr;  // 3H x (3H/r)
};

struct ClassifierHead {
  Param* w = nullptr;  // C x D
  Param* b = nullptr;  // C x 1
};

// ---- graph building blocks -------------------------------------------------

/// Hidden states of the top layer, one B x H node per timestep.
std::vector<Var> lstm_features(Tape& t, std::span<const Var> steps, const LstmStack& stack);

struct AttentionPool {
  Var weights;  // B x T'
  Var pooled;   // B x H
};

AttentionPool scale_attention(Tape& t, std::span<const Var> hidden, Var u);

/// Mean of each run of `factor` adjacent timesteps; the trailing remainder is dropped.
std::vector<Var> merge_timesteps(Tape& t, std::span<const Var> hidden, std::size_t factor);

struct CavTrace {
  AttentionPool short_term;
  std::optional<AttentionPool> medium_term;
  std::optional<AttentionPool> long_term;
  std::vector<Var> medium_rows;
  std::vector<Var> long_rows;
  Var cav;  // B x 3H (B x H without multi-scale)
};

CavTrace msa(Tape& t, std::span<const Var> hidden, const MsaParams& params, bool multi_scale = true);

struct SeTrace {
  Var z;                       // B x 3H squeeze
  Var s;                       // B x 3H gate
  std::vector<Var> calibrated; // one per modality, B x 3H
};

SeTrace se_recalibrate(Tape& t, std::span<const Var> cavs, const SeBlock& se);

struct HeadTrace {
  Var global;
  Var logits;
  Var probs;
};

HeadTrace fuse_and_classify(Tape& t, std::span<const Var> features, const ClassifierHead& head);

// ---- eager single-sample helpers -------------------------------------------

Matrix lstm_features(const Matrix& x, const LstmStack& stack);

struct AttentionResult {
  Eigen::VectorXd weights;
  Eigen::VectorXd pooled;
};

AttentionResult scale_attention(const Matrix& hidden, const Eigen::VectorXd& u);
Matrix merge_timesteps(const Matrix& hidden, std::size_t factor);

struct Cav {
  Eigen::VectorXd v_short;
  Eigen::VectorXd v_medium;
  Eigen::VectorXd v_long;
  Eigen::VectorXd concatenated;
};

Cav msa(const Matrix& hidden, const MsaParams& params);
/// stacked is M x 3H; returns the recalibrated M x 3H.
Matrix se_recalibrate(const Matrix& stacked, const SeBlock& se);
Eigen::VectorXd fuse_and_classify(std::span<const Matrix> domains, const ClassifierHead& head);

// ---- data ------------------------------------------------------------------

/// One (participant, video) instance: a T x F matrix per configured modality, in
/// config order.
struct Example {
  std::string participant_id;
  std::string video_id;
  std::vector<Matrix> inputs;
  int label = 0;
};

/// inputs[m][t] is the B x F slice of modality m at timestep t.
struct Batch {
  std::vector<std::vector<Matrix>> inputs;
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
};

Batch make_batch(std::span<const Example> data, std::span<const std::size_t> indices);
Batch make_batch(std::span<const Example> data);

// ---- model -----------------------------------------------------------------

struct ModalityTrace {
  std::vector<Var> hidden;
  CavTrace cav;
};

struct ForwardTrace {
  std::vector<ModalityTrace> modalities;
  std::vector<SeTrace> domains;  // empty without SE
  HeadTrace head;
};

class Model {
 public:
  explicit Model(ModelConfig config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }

  ForwardTrace forward(Tape& t, const Batch& batch) const;
  /// Class probabilities, B x C.
  Matrix predict(const Batch& batch) const;

  std::vector<Param*> params();
  Param& param(std::string_view name);
  void zero_grad();

  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

  const LstmStack& lstm(std::size_t modality) const { return lstm_[modality]; }
  const MsaParams& attention(std::size_t modality) const { return msa_[modality]; }
  const SeBlock& se(std::size_t domain) const { return se_[domain]; }
  const ClassifierHead& head() const { return head_; }

 private:
  Param& add_param(std::string name, Matrix value);

  ModelConfig config_;
  std::deque<Param> params_;
  std::vector<LstmStack> lstm_;
  std::vector<MsaParams> msa_;
  std::vector<SeBlock> se_;
  ClassifierHead head_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) matrix drawn from the given engine.
Matrix uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace emomsase::model
