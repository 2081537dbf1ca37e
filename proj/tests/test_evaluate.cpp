#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include <fmt/format.h>

#include "emomsase/error.hpp"
#include "emomsase/evaluate.hpp"
#include "emomsase/gradcheck.hpp"

using namespace emomsase;
using namespace emomsase::evaluate;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an emomsase::Error");
  return ErrorKind::InvalidArgument;
}

std::vector<std::string> participants(int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(fmt::format("P{:02d}", i));
  return out;
}

Eigen::VectorXd probs(double p0, double p1) {
  Eigen::VectorXd v(2);
  v << p0, p1;
  return v;
}

std::vector<Sample> micro_samples(const model::ModelConfig& config, int n_participants, int n_videos,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Sample> out;
  for (const auto& pid : participants(n_participants)) {
    for (int v = 1; v <= n_videos; ++v) {
      Sample s;
      s.participant_id = pid;
      s.video_id = fmt::format("V{:02d}", v);
      s.label = v % 2;
      for (const auto& d : config.domains) {
        for (const auto& m : d.modalities) {
          Eigen::MatrixXd x(6, static_cast<Eigen::Index>(m.features));
          for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = (s.label ? 1.0 : -1.0) + noise(rng);
          s.channels[m.channel] = x;
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

ExperimentConfig micro_experiment(model::Variant variant) {
  ExperimentConfig c;
  c.model = gradcheck::micro_config(0, variant);
  c.train.max_epochs = 2;
  c.train.early_stop_patience = 1;
  c.train.batch_size = 8;
  return c;
}

}  // namespace

TEST_SUITE("evaluate") {

TEST_CASE("group k-fold over 23 participants balances the test folds") {
  const auto plan = group_kfold(participants(23), 5, 1);
  REQUIRE(plan.folds.size() == 5);
  std::multiset<std::size_t> sizes;
  std::set<std::string> seen;
  for (const auto& f : plan.folds) {
    sizes.insert(f.test.size());
    seen.insert(f.test.begin(), f.test.end());
    CHECK(f.train.size() + f.val.size() + f.test.size() == 23);
    CHECK_FALSE(f.val.empty());
  }
  CHECK(sizes == std::multiset<std::size_t>{4, 4, 5, 5, 5});
  CHECK(seen.size() == 23);
  const auto ps = participants(23);
  CHECK(leakage_violations(plan, ps) == 0);
}

TEST_CASE("k equal to the participant count matches leave-one-out test sets") {
  const auto ps = participants(9);
  const auto kf = group_kfold(ps, 9, 4);
  const auto lo = loso(ps);
  std::set<std::vector<std::string>> a, b;
  for (const auto& f : kf.folds) a.insert(f.test);
  for (const auto& f : lo.folds) b.insert(f.test);
  CHECK(a == b);
}

TEST_CASE("leave-one-subject-out") {
  const auto ps = participants(23);
  const auto plan = loso(ps);
  REQUIRE(plan.folds.size() == 23);
  std::set<std::string> tested;
  for (const auto& f : plan.folds) {
    REQUIRE(f.test.size() == 1);
    tested.insert(f.test[0]);
    CHECK(f.train.size() + f.val.size() == 22);
  }
  CHECK(tested == std::set<std::string>(ps.begin(), ps.end()));
  CHECK(leakage_violations(plan, ps) == 0);
  CHECK(plan.scheme == Scheme::LOSO);
}

TEST_CASE("split plans are seeded") {
  const auto ps = participants(23);
  const auto a = group_kfold(ps, 5, 7);
  const auto b = group_kfold(ps, 5, 7);
  const auto c = group_kfold(ps, 5, 8);
  for (std::size_t i = 0; i < 5; ++i) CHECK(a.folds[i].test == b.folds[i].test);
  bool differs = false;
  for (std::size_t i = 0; i < 5; ++i) differs = differs || a.folds[i].test != c.folds[i].test;
  CHECK(differs);
}

TEST_CASE("split preconditions") {
  CHECK(kind_of([] { group_kfold(participants(4), 5, 0); }) == ErrorKind::TooFewParticipants);
  CHECK(kind_of([] { group_kfold(participants(10), 2, 0); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([] { loso(participants(2)); }) == ErrorKind::TooFewParticipants);
}

TEST_CASE("leakage is counted") {
  Fold f;
  f.train = {"P01", "P02"};
  f.val = {"P02"};
  f.test = {"P01", "P03"};
  const auto ps = participants(3);
  CHECK(leakage_violations(f, ps) == 2);
  f.val = {"P04"};
  f.test = {"P03"};
  CHECK(leakage_violations(f, ps) == 0);
  f.test.clear();
  CHECK(leakage_violations(f, ps) == 1);
}

TEST_CASE("metrics from a hand-counted confusion matrix") {
  const std::vector<Prediction> p{
      {probs(0.1, 0.9), 1}, {probs(0.8, 0.2), 1}, {probs(0.7, 0.3), 0}, {probs(0.4, 0.6), 0}};
  const auto r = metrics(p, 3);
  CHECK(r.accuracy == 0.5);
  CHECK(r.recall == 0.5);
  CHECK(r.fold_index == 3);
  CHECK(r.n_test_samples == 4);
  CHECK(r.confusion[1][1] == 1);
  CHECK(r.confusion[1][0] == 1);
  CHECK(r.confusion[0][0] == 1);
  CHECK(r.confusion[0][1] == 1);
}

TEST_CASE("metrics edge cases") {
  const std::vector<Prediction> right{{probs(0.1, 0.9), 1}, {probs(0.9, 0.1), 0}};
  CHECK(metrics(right).accuracy == 1.0);
  CHECK(metrics(right).recall == 1.0);
  const std::vector<Prediction> low{{probs(0.9, 0.1), 1}, {probs(0.6, 0.4), 1}, {probs(0.8, 0.2), 0}};
  CHECK(metrics(low).recall == 0.0);
  CHECK(kind_of([] { metrics({}); }) == ErrorKind::EmptyPredictions);
}

TEST_CASE("decision fusion examples") {
  const std::vector<Eigen::VectorXd> p{probs(0.6, 0.4), probs(0.3, 0.7), probs(0.55, 0.45)};
  const auto s = decision_fuse(p, Rule::Sum);
  CHECK(s.label == 1);
  CHECK_FALSE(s.tie);
  const auto m = decision_fuse(p, Rule::Max);
  CHECK(m.label == 1);
  CHECK_FALSE(m.tie);
  const std::vector<Eigen::VectorXd> flat{probs(0.5, 0.5), probs(0.5, 0.5)};
  for (auto rule : {Rule::Sum, Rule::Max}) {
    const auto f = decision_fuse(flat, rule);
    CHECK(f.label == 0);
    CHECK(f.tie);
  }
  CHECK(kind_of([] { decision_fuse({}, Rule::Sum); }) == ErrorKind::NoClassifiers);
}

TEST_CASE("sum fusion of two classes equals averaging then argmax") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 2 + trial % 4;
    std::vector<Eigen::VectorXd> p;
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < n; ++i) {
      const double a = u(rng);
      p.push_back(probs(a, 1.0 - a));
      avg += p.back() / n;
    }
    Eigen::Index best = 0;
    avg.maxCoeff(&best);
    CHECK(decision_fuse(p, Rule::Sum).label == static_cast<int>(best));
    std::shuffle(p.begin(), p.end(), rng);
    CHECK(decision_fuse(p, Rule::Sum).label == static_cast<int>(best));
  }
}

TEST_CASE("fusion ignores classifier order") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Eigen::VectorXd> p;
    for (int i = 0; i < 3; ++i) {
      const double a = u(rng);
      p.push_back(probs(a, 1.0 - a));
    }
    const auto s = decision_fuse(p, Rule::Sum);
    const auto m = decision_fuse(p, Rule::Max);
    std::reverse(p.begin(), p.end());
    CHECK(decision_fuse(p, Rule::Sum).label == s.label);
    CHECK(decision_fuse(p, Rule::Max).label == m.label);
  }
}

TEST_CASE("identical classifiers fuse to their own argmax") {
  const auto one = probs(0.35, 0.65);
  const std::vector<Eigen::VectorXd> p{one, one, one};
  CHECK(decision_fuse(p, Rule::Sum).label == 1);
  CHECK(decision_fuse(p, Rule::Max).label == 1);
}

TEST_CASE("fusion names") {
  CHECK(to_string(Fusion::ModalityLevel) == "modality");
  CHECK(parse_fusion("sum") == Fusion::DecisionSum);
  CHECK(parse_fusion("max") == Fusion::DecisionMax);
  CHECK(kind_of([] { parse_fusion("mean"); }) == ErrorKind::InvalidArgument);
  CHECK(combination_name(gradcheck::micro_config(0), Fusion::ModalityLevel) == "Peripheral+Head/emomsase/modality");
}

TEST_CASE("majority labels are shared by every sample of a video") {
  std::vector<dataio::SamRating> ratings;
  for (int p = 1; p <= 5; ++p) {
    for (int v = 1; v <= 3; ++v) {
      dataio::SamRating r;
      r.participant_id = fmt::format("P{:02d}", p);
      r.video_id = fmt::format("V{:02d}", v);
      r.valence_raw = (p + v) % 3 == 0 ? 2 : 6;
      r.arousal_raw = v == 2 ? 7 : 1;
      ratings.push_back(r);
    }
  }
  const auto labels = dataio::derive_labels(ratings, dataio::LabelCase::Majority);
  std::vector<Sample> samples;
  for (const auto& r : ratings) samples.push_back({r.participant_id, r.video_id, {}, -1});
  const auto general = dataio::derive_labels(ratings, dataio::LabelCase::General);
  for (auto dim : {dataio::Dimension::Valence, dataio::Dimension::Arousal}) {
    const auto out = attach_labels(samples, labels, dim);
    REQUIRE(out.size() == samples.size());
    std::map<std::string, std::set<int>> per_video;
    for (const auto& s : out) per_video[s.video_id].insert(s.label);
    for (const auto& [video, set] : per_video) CHECK(set.size() == 1);
    for (const auto& a : labels) {
      for (const auto& s : out) {
        if (s.video_id == a.video_id) CHECK(s.label == static_cast<int>(a.level(dim)));
      }
    }
  }
  const auto per_rater = attach_labels(samples, general, dataio::Dimension::Valence);
  for (std::size_t i = 0; i < per_rater.size(); ++i) {
    CHECK(per_rater[i].label == (ratings[i].valence_raw > 4 ? 1 : 0));
  }
}

TEST_CASE("samples without a label are dropped") {
  std::vector<Sample> samples{{"P01", "V01", {}, -1}, {"P02", "V09", {}, -1}};
  dataio::LabelAssignment a;
  a.video_id = "V01";
  a.valence = dataio::Level::High;
  const std::vector<dataio::LabelAssignment> labels{a};
  const auto out = attach_labels(samples, labels, dataio::Dimension::Valence);
  REQUIRE(out.size() == 1);
  CHECK(out[0].label == 1);
}

TEST_CASE("examples follow the model channel order") {
  const auto config = gradcheck::micro_config(0);
  auto samples = micro_samples(config, 3, 2, 1);
  const auto ex = to_examples(samples, config);
  REQUIRE(ex.size() == samples.size());
  CHECK(ex[0].inputs.size() == 4);
  CHECK(ex[0].inputs[2] == samples[0].channels.at("h0"));
  samples[1].channels.erase("p1");
  CHECK(kind_of([&] { to_examples(samples, config); }) == ErrorKind::MissingChannel);
  samples = micro_samples(config, 3, 2, 1);
  samples[0].channels["h1"] = Eigen::MatrixXd::Zero(6, 5);
  CHECK(kind_of([&] { to_examples(samples, config); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("a short experiment runs every fold for each variant and fusion") {
  const auto base = gradcheck::micro_config(0);
  const auto samples = micro_samples(base, 6, 4, 2);
  const auto plan = group_kfold(participants_of(samples), 3, 5);
  for (auto variant : {model::Variant::LSTMSA, model::Variant::EMO_MSASE}) {
    for (auto fusion : {Fusion::ModalityLevel, Fusion::DecisionSum, Fusion::DecisionMax}) {
      auto config = micro_experiment(variant);
      config.fusion = fusion;
      const auto r = run_experiment(samples, plan, config);
      REQUIRE(r.folds.size() == 3);
      double acc = 0.0;
      for (const auto& f : r.folds) {
        acc += f.result.accuracy;
        CHECK(f.result.n_test_samples == f.split.test.size() * 4);
        CHECK(f.logs.size() == (fusion == Fusion::ModalityLevel ? 1u : 2u));
      }
      CHECK(r.mean_accuracy == doctest::Approx(acc / 3.0));
      CHECK(r.combination == combination_name(config.model, fusion));
    }
  }
}

TEST_CASE("experiments are reproducible and independent of parallelism") {
  const auto base = gradcheck::micro_config(0);
  const auto samples = micro_samples(base, 6, 4, 3);
  const auto plan = group_kfold(participants_of(samples), 3, 1);
  auto config = micro_experiment(model::Variant::EMO_MSASE);
  const auto a = run_experiment(samples, plan, config);
  config.max_parallel = 3;
  const auto b = run_experiment(samples, plan, config);
  const std::vector<ExperimentResult> ra{a}, rb{b};
  CHECK(results_csv(ra, dataio::LabelCase::General) == results_csv(rb, dataio::LabelCase::General));
  CHECK(results_json(ra, dataio::LabelCase::General) == results_json(rb, dataio::LabelCase::General));
  const auto csv = results_csv(ra, dataio::LabelCase::General);
  CHECK(csv.rfind("combination,label_case,metric,value\n", 0) == 0);
}

TEST_CASE("a plan that leaks participants is refused") {
  const auto base = gradcheck::micro_config(0);
  const auto samples = micro_samples(base, 6, 2, 3);
  auto plan = group_kfold(participants_of(samples), 3, 1);
  plan.folds[0].train.push_back(plan.folds[0].test[0]);
  CHECK(kind_of([&] { run_experiment(samples, plan, micro_experiment(model::Variant::LSTMSA)); }) ==
        ErrorKind::Leakage);
}

}  // TEST_SUITE
