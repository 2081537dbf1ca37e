#include "emomsase/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "emomsase/error.hpp"

namespace emomsase::evaluate {

namespace {

std::vector<std::string> unique_sorted(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace

SplitPlan group_kfold(std::vector<std::string> participants, int k, std::uint64_t seed) {
  participants = unique_sorted(std::move(participants));
  if (k < 3) throw Error(ErrorKind::InvalidArgument, fmt::format("k must be at least 3, got {}", k));
  if (static_cast<std::size_t>(k) > participants.size()) {
    throw Error(ErrorKind::TooFewParticipants,
                fmt::format("{} participants cannot fill {} folds", participants.size(), k));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(participants.begin(), participants.end(), rng);

  std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < participants.size(); ++i) groups[i % groups.size()].push_back(participants[i]);

  SplitPlan plan{Scheme::GroupKFold, k, {}};
  for (std::size_t i = 0; i < groups.size(); ++i) {
    Fold fold;
    fold.test = groups[i];
    const auto val_group = (i + 1) % groups.size();
    fold.val = groups[val_group];
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (g == i || g == val_group) continue;
      fold.train.insert(fold.train.end(), groups[g].begin(), groups[g].end());
    }
    std::sort(fold.train.begin(), fold.train.end());
    std::sort(fold.val.begin(), fold.val.end());
    std::sort(fold.test.begin(), fold.test.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

SplitPlan loso(std::vector<std::string> participants) {
  participants = unique_sorted(std::move(participants));
  const auto n = participants.size();
  if (n < 3) throw Error(ErrorKind::TooFewParticipants, fmt::format("LOSO needs at least 3 participants, got {}", n));
  const auto n_val = (n - 1 + 4) / 5;

  SplitPlan plan{Scheme::LOSO, static_cast<int>(n), {}};
  for (std::size_t i = 0; i < n; ++i) {
    Fold fold;
    fold.test = {participants[i]};
    std::set<std::size_t> val;
    for (std::size_t j = 1; j <= n_val; ++j) val.insert((i + j) % n);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      (val.count(j) ? fold.val : fold.train).push_back(participants[j]);
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

std::size_t leakage_violations(const Fold& fold, std::span<const std::string> participants) {
  std::map<std::string, int> sides;
  for (const auto* side : {&fold.train, &fold.val, &fold.test}) {
    for (const auto& p : *side) ++sides[p];
  }
  std::size_t violations = 0;
  for (const auto& [p, count] : sides) {
    if (count > 1) ++violations;
  }
  for (const auto& p : participants) {
    if (!sides.count(p)) ++violations;
  }
  return violations;
}

std::size_t leakage_violations(const SplitPlan& plan, std::span<const std::string> participants) {
  std::size_t total = 0;
  for (const auto& fold : plan.folds) total += leakage_violations(fold, participants);
  return total;
}

FoldResult metrics(std::span<const Prediction> predictions, int fold_index) {
  if (predictions.empty()) throw Error(ErrorKind::EmptyPredictions, "no predictions to score");
  FoldResult r;
  r.fold_index = fold_index;
  r.n_test_samples = predictions.size();
  for (const auto& p : predictions) {
    if (p.probs.size() != 2) {
      throw Error(ErrorKind::DimensionMismatch, fmt::format("expected 2 class probabilities, got {}", p.probs.size()));
    }
    if (p.label < 0 || p.label > 1) throw Error(ErrorKind::InvalidClass, fmt::format("label {} is not binary", p.label));
    Eigen::Index pred = 0;
    p.probs.maxCoeff(&pred);
    ++r.confusion[static_cast<std::size_t>(p.label)][static_cast<std::size_t>(pred)];
  }
  const auto tp = r.confusion[1][1];
  const auto tn = r.confusion[0][0];
  const auto fn = r.confusion[1][0];
  r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(r.n_test_samples);
  r.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return r;
}

FusedDecision decision_fuse(std::span<const Eigen::VectorXd> probs, Rule rule) {
  if (probs.empty()) throw Error(ErrorKind::NoClassifiers, "decision fusion needs at least one classifier");
  const auto classes = probs.front().size();
  for (const auto& p : probs) {
    if (p.size() != classes) throw Error(ErrorKind::DimensionMismatch, "classifiers disagree on the class count");
  }

  Eigen::VectorXd score = Eigen::VectorXd::Constant(classes, rule == Rule::Sum ? 0.0 : -1.0);
  for (const auto& p : probs) {
    score = rule == Rule::Sum ? Eigen::VectorXd(score + p) : Eigen::VectorXd(score.cwiseMax(p));
  }

  const double best = score.maxCoeff();
  FusedDecision out;
  out.label = -1;
  for (Eigen::Index c = 0; c < classes; ++c) {
    if (best - score(c) <= kTieTolerance) {
      if (out.label < 0) {
        out.label = static_cast<int>(c);
      } else {
        out.tie = true;
      }
    }
  }
  return out;
}

std::string_view to_string(Fusion f) {
  switch (f) {
    case Fusion::ModalityLevel: return "modality";
    case Fusion::DecisionSum: return "sum";
    case Fusion::DecisionMax: return "max";
  }
  return "?";
}

Fusion parse_fusion(std::string_view s) {
  if (s == "modality") return Fusion::ModalityLevel;
  if (s == "sum") return Fusion::DecisionSum;
  if (s == "max") return Fusion::DecisionMax;
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown fusion '{}' (modality, sum, max)", s));
}

std::vector<Sample> attach_labels(std::span<const Sample> samples,
                                  std::span<const dataio::LabelAssignment> assignments, dataio::Dimension dim) {
  std::map<std::pair<std::string, std::string>, int> by_pair;
  std::map<std::string, int> by_video;
  for (const auto& a : assignments) {
    const int label = static_cast<int>(a.level(dim));
    if (a.participant_id) {
      by_pair[{*a.participant_id, a.video_id}] = label;
    } else {
      by_video[a.video_id] = label;
    }
  }
  std::vector<Sample> out;
  for (const auto& s : samples) {
    int label = -1;
    if (auto it = by_pair.find({s.participant_id, s.video_id}); it != by_pair.end()) {
      label = it->second;
    } else if (auto v = by_video.find(s.video_id); v != by_video.end()) {
      label = v->second;
    }
    if (label < 0) continue;
    out.push_back(s);
    out.back().label = label;
  }
  return out;
}

std::vector<model::Example> to_examples(std::span<const Sample> samples, const model::ModelConfig& config) {
  std::vector<model::Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    model::Example ex{s.participant_id, s.video_id, {}, s.label};
    for (const auto& d : config.domains) {
      for (const auto& m : d.modalities) {
        auto it = s.channels.find(m.channel);
        if (it == s.channels.end()) {
          throw Error(ErrorKind::MissingChannel,
                      fmt::format("channel {} missing for participant {} video {}", m.channel, s.participant_id,
                                  s.video_id));
        }
        if (static_cast<std::size_t>(it->second.cols()) != m.features) {
          throw Error(ErrorKind::ShapeMismatch, fmt::format("channel {} has {} features, config expects {}", m.channel,
                                                            it->second.cols(), m.features));
        }
        ex.inputs.push_back(it->second);
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<std::string> participants_of(std::span<const Sample> samples) {
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.participant_id);
  return unique_sorted(std::move(ids));
}

std::string combination_name(const model::ModelConfig& config, Fusion fusion) {
  std::string out;
  for (const auto& d : config.domains) {
    if (!out.empty()) out += '+';
    out += dataio::to_string(d.domain);
  }
  return fmt::format("{}/{}/{}", out, model::to_string(config.variant), to_string(fusion));
}

namespace {

std::vector<Sample> select(std::span<const Sample> samples, const std::vector<std::string>& ids) {
  const std::set<std::string> keep(ids.begin(), ids.end());
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (keep.count(s.participant_id)) out.push_back(s);
  }
  return out;
}

void check_sides(const Fold& fold, std::span<const std::string> participants, int fold_index) {
  if (const auto v = leakage_violations(fold, participants); v > 0) {
    throw Error(ErrorKind::Leakage, fmt::format("fold {} has {} participant overlap violations", fold_index, v));
  }
}

void check_examples(std::span<const model::Example> a, std::span<const model::Example> b, int fold_index) {
  std::set<std::string> ids;
  for (const auto& e : a) ids.insert(e.participant_id);
  for (const auto& e : b) {
    if (ids.count(e.participant_id)) {
      throw Error(ErrorKind::Leakage,
                  fmt::format("participant {} crosses sides in fold {}", e.participant_id, fold_index));
    }
  }
}

struct Trained {
  Eigen::MatrixXd test_probs;
  train::TrainLog log;
};

Trained train_one(std::span<const Sample> train_s, std::span<const Sample> val_s, std::span<const Sample> test_s,
                  model::ModelConfig mc, train::TrainConfig tc, int fold_index) {
  const auto tr = to_examples(train_s, mc);
  const auto va = to_examples(val_s, mc);
  const auto te = to_examples(test_s, mc);
  check_examples(tr, te, fold_index);
  check_examples(va, te, fold_index);
  check_examples(tr, va, fold_index);

  model::Model m(std::move(mc));
  Trained out;
  out.log = train::fit(m, tr, va, tc);
  const std::size_t chunk = 64;
  out.test_probs.resize(static_cast<Eigen::Index>(te.size()), static_cast<Eigen::Index>(m.config().classes));
  for (std::size_t start = 0; start < te.size(); start += chunk) {
    const auto n = std::min(chunk, te.size() - start);
    out.test_probs.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
        m.predict(model::make_batch(std::span(te).subspan(start, n)));
  }
  return out;
}

FoldRecord run_fold(std::span<const Sample> samples, const Fold& fold, int fold_index,
                    std::span<const std::string> participants, const ExperimentConfig& config) {
  check_sides(fold, participants, fold_index);
  const auto train_s = select(samples, fold.train);
  const auto val_s = select(samples, fold.val);
  const auto test_s = select(samples, fold.test);
  if (train_s.empty() || val_s.empty() || test_s.empty()) {
    throw Error(ErrorKind::EmptySplit, fmt::format("fold {} has an empty side", fold_index));
  }

  auto mc = config.model;
  mc.seed = config.model.seed + static_cast<std::uint64_t>(fold_index);
  auto tc = config.train;
  tc.seed = config.train.seed + static_cast<std::uint64_t>(fold_index);

  FoldRecord rec;
  rec.split = fold;
  std::vector<Prediction> preds;
  if (config.fusion == Fusion::ModalityLevel) {
    auto t = train_one(train_s, val_s, test_s, mc, tc, fold_index);
    rec.logs.push_back(std::move(t.log));
    for (std::size_t i = 0; i < test_s.size(); ++i) {
      preds.push_back({t.test_probs.row(static_cast<Eigen::Index>(i)).transpose(), test_s[i].label});
    }
    rec.result = metrics(preds, fold_index);
    return rec;
  }

  std::vector<Eigen::MatrixXd> per_domain;
  for (const auto& d : mc.domains) {
    auto t = train_one(train_s, val_s, test_s, mc.restricted_to(d.domain), tc, fold_index);
    rec.logs.push_back(std::move(t.log));
    per_domain.push_back(std::move(t.test_probs));
  }
  const auto rule = config.fusion == Fusion::DecisionSum ? Rule::Sum : Rule::Max;
  std::size_t ties = 0;
  for (std::size_t i = 0; i < test_s.size(); ++i) {
    std::vector<Eigen::VectorXd> probs;
    for (const auto& p : per_domain) probs.push_back(p.row(static_cast<Eigen::Index>(i)).transpose());
    const auto fused = decision_fuse(probs, rule);
    if (fused.tie) ++ties;
    Eigen::VectorXd onehot = Eigen::VectorXd::Zero(2);
    onehot(fused.label) = 1.0;
    preds.push_back({onehot, test_s[i].label});
  }
  rec.result = metrics(preds, fold_index);
  rec.result.fusion_ties = ties;
  return rec;
}

}  // namespace

ExperimentResult run_experiment(std::span<const Sample> samples, const SplitPlan& plan, const ExperimentConfig& config) {
  config.model.validate();
  config.train.validate();
  if (plan.folds.empty()) throw Error(ErrorKind::EmptySplit, "split plan has no folds");
  if (config.fusion != Fusion::ModalityLevel && config.model.domains.size() < 2) {
    throw Error(ErrorKind::NoClassifiers, "decision fusion needs at least two domains");
  }
  const auto participants = participants_of(samples);

  ExperimentResult result;
  result.combination = combination_name(config.model, config.fusion);
  result.folds.resize(plan.folds.size());
  std::vector<std::exception_ptr> errors(plan.folds.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < plan.folds.size(); i = next++) {
      try {
        result.folds[i] = run_fold(samples, plan.folds[i], static_cast<int>(i), participants, config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = std::clamp<std::size_t>(config.max_parallel, 1, plan.folds.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (const auto& f : result.folds) {
    result.mean_accuracy += f.result.accuracy;
    result.mean_recall += f.result.recall;
  }
  result.mean_accuracy /= static_cast<double>(result.folds.size());
  result.mean_recall /= static_cast<double>(result.folds.size());
  return result;
}

std::string results_csv(std::span<const ExperimentResult> results, dataio::LabelCase label_case) {
  std::string out = "combination,label_case,metric,value\n";
  for (const auto& r : results) {
    out += fmt::format("{},{},accuracy,{}\n", r.combination, dataio::to_string(label_case), r.mean_accuracy);
    out += fmt::format("{},{},recall,{}\n", r.combination, dataio::to_string(label_case), r.mean_recall);
  }
  return out;
}

std::string results_json(std::span<const ExperimentResult> results, dataio::LabelCase label_case) {
  nlohmann::ordered_json j;
  j["label_case"] = dataio::to_string(label_case);
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    nlohmann::ordered_json e;
    e["combination"] = r.combination;
    e["mean_accuracy"] = r.mean_accuracy;
    e["mean_recall"] = r.mean_recall;
    auto folds = nlohmann::ordered_json::array();
    for (const auto& f : r.folds) {
      nlohmann::ordered_json fj;
      fj["fold"] = f.result.fold_index;
      fj["accuracy"] = f.result.accuracy;
      fj["recall"] = f.result.recall;
      fj["n_test_samples"] = f.result.n_test_samples;
      fj["confusion"] = {{f.result.confusion[0][0], f.result.confusion[0][1]},
                         {f.result.confusion[1][0], f.result.confusion[1][1]}};
      fj["fusion_ties"] = f.result.fusion_ties;
      fj["train"] = f.split.train;
      fj["val"] = f.split.val;
      fj["test"] = f.split.test;
      auto logs = nlohmann::ordered_json::array();
      for (const auto& l : f.logs) logs.push_back({{"best_epoch", l.best_epoch}, {"stopped_epoch", l.stopped_epoch}});
      fj["training"] = std::move(logs);
      folds.push_back(std::move(fj));
    }
    e["folds"] = std::move(folds);
    arr.push_back(std::move(e));
  }
  j["results"] = std::move(arr);
  return j.dump(2);
}

}  // namespace emomsase::evaluate
