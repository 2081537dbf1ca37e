#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emomsase/dataio.hpp"
#include "emomsase/model.hpp"
#include "emomsase/train.hpp"

namespace emomsase::evaluate {

// ---- splits ----------------------------------------------------------------

enum class Scheme { GroupKFold, LOSO };

struct Fold {
  std::vector<std::string> train;
  std::vector<std::string> val;  // early-stopping group, carved from the training side
  std::vector<std::string> test;
};

struct SplitPlan {
  Scheme scheme = Scheme::GroupKFold;
  int k = 5;
  std::vector<Fold> folds;
};

/// Participants are shuffled by seed and dealt round-robin into k groups. Fold i tests
/// group i, validates on group (i + 1) mod k and trains on the others.
SplitPlan group_kfold(std::vector<std::string> participants, int k, std::uint64_t seed);

/// One fold per participant. The validation side is the next ceil((N - 1) / 5)
/// participants in sorted order, wrapping around.
SplitPlan loso(std::vector<std::string> participants);

/// Number of participants found on more than one side of the fold, plus the number
/// missing from all sides.
std::size_t leakage_violations(const Fold& fold, std::span<const std::string> participants);
std::size_t leakage_violations(const SplitPlan& plan, std::span<const std::string> participants);

// ---- metrics and fusion ----------------------------------------------------

struct Prediction {
  Eigen::VectorXd probs;
  int label = 0;
};

struct FoldResult {
  int fold_index = 0;
  double accuracy = 0.0;
  double recall = 0.0;  // positive class High = 1
  std::size_t n_test_samples = 0;
  std::array<std::array<std::size_t, 2>, 2> confusion{};  // [true][predicted]
  std::size_t fusion_ties = 0;
};

FoldResult metrics(std::span<const Prediction> predictions, int fold_index = 0);

enum class Rule { Sum, Max };

struct FusedDecision {
  int label = 0;
  bool tie = false;
};

inline constexpr double kTieTolerance = 1e-12;

/// Sum: argmax of per-class probability sums. Max: the class holding the single
/// largest probability. Ties go to the lower class index and are flagged.
FusedDecision decision_fuse(std::span<const Eigen::VectorXd> probs, Rule rule);

enum class Fusion { ModalityLevel, DecisionSum, DecisionMax };

std::string_view to_string(Fusion f);
Fusion parse_fusion(std::string_view s);

// ---- data ------------------------------------------------------------------

/// Preprocessed tensors of one (participant, video) instance keyed by channel.
struct Sample {
  std::string participant_id;
  std::string video_id;
  std::map<std::string, Eigen::MatrixXd> channels;
  int label = -1;
};

/// Copies samples that have a label under the given assignments; unlabeled samples
/// (for example female participants under MalesOnly) are dropped.
std::vector<Sample> attach_labels(std::span<const Sample> samples,
                                  std::span<const dataio::LabelAssignment> assignments, dataio::Dimension dim);

/// Selects the configured channels in config order.
std::vector<model::Example> to_examples(std::span<const Sample> samples, const model::ModelConfig& config);

std::vector<std::string> participants_of(std::span<const Sample> samples);

// ---- experiment ------------------------------------------------------------

struct ExperimentConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  Fusion fusion = Fusion::ModalityLevel;
  std::size_t max_parallel = 1;
};

struct FoldRecord {
  FoldResult result;
  Fold split;
  std::vector<train::TrainLog> logs;  // one per trained model
};

struct ExperimentResult {
  std::string combination;
  std::vector<FoldRecord> folds;
  double mean_accuracy = 0.0;
  double mean_recall = 0.0;
};

/// Combination label of the form "Peripheral+Trunk/emomsase/modality".
std::string combination_name(const model::ModelConfig& config, Fusion fusion);

/// Trains and tests one model (modality-level) or one model per domain (decision
/// fusion) for every fold. Model and training seeds are offset by the fold index.
ExperimentResult run_experiment(std::span<const Sample> samples, const SplitPlan& plan, const ExperimentConfig& config);

/// `combination,label_case,metric,value` rows for the fold means.
std::string results_csv(std::span<const ExperimentResult> results, dataio::LabelCase label_case);
std::string results_json(std::span<const ExperimentResult> results, dataio::LabelCase label_case);

}  // namespace emomsase::evaluate
