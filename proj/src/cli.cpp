#include "emomsase/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "emomsase/checkpoint.hpp"
#include "emomsase/error.hpp"
#include "emomsase/gradcheck.hpp"
#include "emomsase/preprocess.hpp"

namespace emomsase::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, fmt::format("cannot write {}", path.string()));
  out << text;
}

void check_keys(const ordered_json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!obj.is_object()) throw Error(ErrorKind::ParseError, fmt::format("{} must be a JSON object", where));
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorKind::UnknownKey, fmt::format("unknown key '{}' in {}", key, where));
    }
  }
}

template <typename T>
void take(const ordered_json& obj, std::string_view key, T& dst) {
  if (auto it = obj.find(key); it != obj.end()) {
    try {
      dst = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseError, fmt::format("config key '{}': {}", key, e.what()));
    }
  }
}

std::vector<dataio::Domain> parse_domain_list(const std::vector<std::string>& names) {
  std::vector<dataio::Domain> out;
  for (const auto& n : names) out.push_back(dataio::parse_domain(n));
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
    throw Error(ErrorKind::InvalidArgument, "a domain is listed twice");
  }
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, "no domains selected");
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ordered_json to_json(const RunConfig& c, bool with_paths) {
  ordered_json j;
  if (with_paths) {
    j["data_dir"] = c.data_dir.string();
    j["cache_dir"] = c.cache_dir.string();
    j["out_dir"] = c.out_dir.string();
  }
  j["seed"] = c.seed;
  j["labels"] = dataio::to_string(c.label_case);
  j["boundary"] = dataio::to_string(c.boundary);
  j["target"] = dataio::to_string(c.target);
  auto domains = ordered_json::array();
  for (auto d : c.domains) domains.push_back(dataio::to_string(d));
  j["domains"] = std::move(domains);
  ordered_json channels = ordered_json::object();
  for (const auto& [d, list] : c.channels) channels[std::string(dataio::to_string(d))] = list;
  j["channels"] = std::move(channels);
  j["split"] = c.split;
  j["fusion"] = evaluate::to_string(c.fusion);
  j["variant"] = model::to_string(c.variant);
  j["model"] = {{"hidden", c.hidden}, {"layers", c.layers}, {"reduction", c.reduction}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"batch_size", c.train.batch_size},
                {"max_epochs", c.train.max_epochs},
                {"early_stop_patience", c.train.early_stop_patience},
                {"beta1", c.train.adamw.beta1},
                {"beta2", c.train.adamw.beta2},
                {"epsilon", c.train.adamw.epsilon},
                {"weight_decay", c.train.adamw.weight_decay}};
  if (with_paths) j["jobs"] = c.jobs;
  j["synth"] = {{"participants", c.synth_participants},
                {"class_separation", c.synth_class_separation},
                {"videos", c.synth_videos},
                {"duration_s", c.synth_duration_s}};
  j["gradcheck"] = {{"tolerance", c.gradcheck_tolerance}, {"seeds", c.gradcheck_seeds}, {"frozen", c.gradcheck_frozen}};
  return j;
}

fs::path resolved_cache_dir(const RunConfig& config) {
  if (const char* env = std::getenv("EMOMSASE_CACHE"); env != nullptr && *env != '\0') return env;
  return config.cache_dir;
}

std::string profile_fingerprint(const preprocess::ChannelProfile& p) {
  std::string f = fmt::format("{}|{}|{}|{}|{}|{}|{}|{}|{}", p.channel, p.input_rate_hz, p.upsample_to_hz.value_or(0.0),
                              p.coordinate_stream, p.tail_seconds, p.tail_coords, p.window_seconds, p.coord_window,
                              p.overlap);
  if (p.filter) {
    f += fmt::format("|{}|{}|{}|{}|{}", static_cast<int>(p.filter->kind), p.filter->low_hz.value_or(0.0),
                     p.filter->high_hz.value_or(0.0), p.filter->order, p.filter->window_len.value_or(0));
  }
  return f;
}

std::vector<evaluate::Sample> flatten(std::map<std::pair<std::string, std::string>, evaluate::Sample>& grouped) {
  std::vector<evaluate::Sample> out;
  out.reserve(grouped.size());
  for (auto& [key, s] : grouped) out.push_back(std::move(s));
  return out;
}

}  // namespace

std::vector<std::string> RunConfig::selected_channels() const {
  std::vector<std::string> out;
  for (auto d : domains) {
    auto it = channels.find(d);
    if (it == channels.end() || it->second.empty()) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("no channels configured for domain {}", dataio::to_string(d)));
    }
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

void apply_json(RunConfig& c, const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, fmt::format("config is not valid JSON: {}", e.what()));
  }
  check_keys(j,
             {"data_dir", "cache_dir", "out_dir", "seed", "labels", "boundary", "target", "domains", "channels", "split",
              "fusion", "variant", "model", "train", "jobs", "synth", "gradcheck"},
             "config");

  if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
  if (j.contains("cache_dir")) c.cache_dir = j["cache_dir"].get<std::string>();
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  take(j, "seed", c.seed);
  if (j.contains("labels")) c.label_case = dataio::parse_label_case(j["labels"].get<std::string>());
  if (j.contains("boundary")) c.boundary = dataio::parse_boundary_policy(j["boundary"].get<std::string>());
  if (j.contains("target")) c.target = dataio::parse_dimension(j["target"].get<std::string>());
  if (j.contains("domains")) c.domains = parse_domain_list(j["domains"].get<std::vector<std::string>>());
  if (j.contains("channels")) {
    check_keys(j["channels"], {"Peripheral", "Trunk", "Head"}, "channels");
    for (const auto& [name, list] : j["channels"].items()) {
      c.channels[dataio::parse_domain(name)] = list.get<std::vector<std::string>>();
    }
  }
  take(j, "split", c.split);
  if (c.split != "kfold5" && c.split != "loso") {
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown split '{}' (kfold5, loso)", c.split));
  }
  if (j.contains("fusion")) c.fusion = evaluate::parse_fusion(j["fusion"].get<std::string>());
  if (j.contains("variant")) c.variant = model::parse_variant(j["variant"].get<std::string>());
  take(j, "jobs", c.jobs);
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, {"hidden", "layers", "reduction"}, "model");
    take(m, "hidden", c.hidden);
    take(m, "layers", c.layers);
    take(m, "reduction", c.reduction);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t,
               {"learning_rate", "batch_size", "max_epochs", "early_stop_patience", "beta1", "beta2", "epsilon",
                "weight_decay"},
               "train");
    take(t, "learning_rate", c.train.learning_rate);
    take(t, "batch_size", c.train.batch_size);
    take(t, "max_epochs", c.train.max_epochs);
    take(t, "early_stop_patience", c.train.early_stop_patience);
    take(t, "beta1", c.train.adamw.beta1);
    take(t, "beta2", c.train.adamw.beta2);
    take(t, "epsilon", c.train.adamw.epsilon);
    take(t, "weight_decay", c.train.adamw.weight_decay);
  }
  if (j.contains("synth")) {
    const auto& y = j["synth"];
    check_keys(y, {"participants", "class_separation", "videos", "duration_s"}, "synth");
    take(y, "participants", c.synth_participants);
    take(y, "class_separation", c.synth_class_separation);
    take(y, "videos", c.synth_videos);
    take(y, "duration_s", c.synth_duration_s);
  }
  if (j.contains("gradcheck")) {
    const auto& g = j["gradcheck"];
    check_keys(g, {"tolerance", "seeds", "frozen"}, "gradcheck");
    take(g, "tolerance", c.gradcheck_tolerance);
    take(g, "seeds", c.gradcheck_seeds);
    take(g, "frozen", c.gradcheck_frozen);
  }
}

void apply_config_file(RunConfig& config, const fs::path& path) { apply_json(config, read_file(path)); }

std::string config_hash(const RunConfig& config) { return graph::sha256_hex(to_json(config, false).dump()); }

// ---- preprocessing ---------------------------------------------------------

std::vector<evaluate::Sample> preprocess_recordings(std::span<const dataio::RawRecording> recordings,
                                                    const std::set<std::string>& channels) {
  std::map<std::pair<std::string, std::string>, evaluate::Sample> grouped;
  for (const auto& rec : recordings) {
    if (!channels.count(rec.channel)) continue;
    const auto profile = preprocess::profile_for(rec.channel, rec.sample_rate_hz);
    auto& s = grouped[{rec.participant_id, rec.video_id}];
    s.participant_id = rec.participant_id;
    s.video_id = rec.video_id;
    try {
      s.channels[rec.channel] = preprocess::preprocess_channel(rec, profile).values;
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("{} (participant {}, video {}, channel {})", e.what(), rec.participant_id,
                                        rec.video_id, rec.channel));
    }
  }
  return flatten(grouped);
}

PreprocessReport preprocess_dataset(const fs::path& data_dir, const fs::path& cache_dir,
                                    const std::vector<std::string>& channels) {
  const auto rows = dataio::read_manifest(data_dir / "manifest.csv");
  const std::set<std::string> wanted(channels.begin(), channels.end());
  std::set<std::string> present;
  for (const auto& r : rows) present.insert(r.channel);
  for (const auto& ch : channels) {
    if (!present.count(ch)) {
      throw Error(ErrorKind::MissingChannel, fmt::format("channel {} is configured but absent from {}", ch,
                                                         (data_dir / "manifest.csv").string()));
    }
  }

  fs::create_directories(cache_dir);
  PreprocessReport report;
  std::map<std::pair<std::string, std::string>, evaluate::Sample> grouped;
  for (const auto& row : rows) {
    if (!wanted.count(row.channel)) continue;
    const auto file = data_dir / row.file;
    const auto profile = preprocess::profile_for(row.channel, row.sample_rate_hz);
    const auto key = graph::sha256_hex(fmt::format("{}|{}|{}|{}|{}|{}", graph::sha256_hex(read_file(file)),
                                                   row.participant_id, row.video_id, row.channel,
                                                   row.sample_rate_hz, profile_fingerprint(profile)));
    const auto bin = cache_dir / (key + ".bin");

    auto& s = grouped[{row.participant_id, row.video_id}];
    s.participant_id = row.participant_id;
    s.video_id = row.video_id;
    if (fs::exists(bin)) {
      s.channels[row.channel] = preprocess::read_tensor(bin);
      ++report.cached;
      continue;
    }
    try {
      const auto rec = dataio::read_recording(file, row);
      const auto tensor = preprocess::preprocess_channel(rec, profile);
      preprocess::write_tensor(bin, tensor.values);
      ordered_json meta = {{"participant_id", row.participant_id},
                           {"video_id", row.video_id},
                           {"channel", row.channel},
                           {"domain", dataio::to_string(row.domain)},
                           {"sample_rate_hz", row.sample_rate_hz},
                           {"source", row.file},
                           {"timesteps", tensor.timesteps()},
                           {"features", tensor.features()}};
      write_file(cache_dir / (key + ".json"), meta.dump(2));
      s.channels[row.channel] = tensor.values;
      ++report.computed;
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("{} (file {})", e.what(), file.string()));
    }
  }
  report.samples = flatten(grouped);
  report.shapes = summarize_shapes(report.samples);
  return report;
}

std::vector<ChannelShape> summarize_shapes(std::span<const evaluate::Sample> samples) {
  std::map<std::string, ChannelShape> by_channel;
  for (const auto& s : samples) {
    for (const auto& [ch, m] : s.channels) {
      auto& shape = by_channel[ch];
      const auto t = static_cast<std::size_t>(m.rows());
      const auto f = static_cast<std::size_t>(m.cols());
      if (shape.recordings > 0 && (shape.timesteps != t || shape.features != f)) {
        throw Error(ErrorKind::ShapeMismatch, fmt::format("channel {} yields {}x{} and {}x{}", ch, shape.timesteps,
                                                          shape.features, t, f));
      }
      shape.channel = ch;
      shape.timesteps = t;
      shape.features = f;
      ++shape.recordings;
    }
  }
  std::vector<ChannelShape> out;
  for (auto& [ch, shape] : by_channel) out.push_back(shape);
  return out;
}

model::ModelConfig build_model_config(const RunConfig& config, std::span<const evaluate::Sample> samples) {
  const auto shapes = summarize_shapes(samples);
  model::ModelConfig mc;
  mc.hidden = config.hidden;
  mc.layers = config.layers;
  mc.reduction = config.reduction;
  mc.variant = config.variant;
  mc.seed = config.seed;
  for (auto d : config.domains) {
    model::DomainSpec spec{d, {}};
    for (const auto& ch : config.channels.at(d)) {
      auto it = std::find_if(shapes.begin(), shapes.end(), [&](const ChannelShape& s) { return s.channel == ch; });
      if (it == shapes.end()) throw Error(ErrorKind::MissingChannel, fmt::format("no preprocessed data for {}", ch));
      spec.modalities.push_back({ch, it->features});
    }
    mc.domains.push_back(std::move(spec));
  }
  mc.validate();
  return mc;
}

// ---- commands --------------------------------------------------------------

int cmd_synth(const RunConfig& config) {
  dataio::SyntheticSpec spec;
  spec.n_participants = config.synth_participants;
  spec.seed = config.seed;
  spec.class_separation = config.synth_class_separation;
  spec.n_videos = config.synth_videos;
  spec.duration_s = config.synth_duration_s;
  spec.channels = dataio::default_synthetic_channels();
  const auto data = dataio::make_synthetic(spec);
  dataio::write_dataset(config.out_dir, data);
  fmt::print("wrote {} recordings, {} ratings to {}\n", data.recordings.size(), data.ratings.size(),
             config.out_dir.string());
  return 0;
}

int cmd_preprocess(const RunConfig& config) {
  const auto report = preprocess_dataset(config.data_dir, resolved_cache_dir(config), config.selected_channels());
  for (const auto& s : report.shapes) {
    fmt::print("{:<10} {}x{}  ({} recordings)\n", s.channel, s.timesteps, s.features, s.recordings);
  }
  fmt::print("computed {}, cache hits {}\n", report.computed, report.cached);
  return 0;
}

int cmd_run(const RunConfig& config) {
  const auto report = preprocess_dataset(config.data_dir, resolved_cache_dir(config), config.selected_channels());
  const auto ratings = dataio::load_ratings(config.data_dir / "ratings.csv");

  dataio::LabelOptions opts;
  opts.policy = config.boundary;
  dataio::G2Table g2;
  if (config.label_case == dataio::LabelCase::G2) {
    g2 = dataio::load_g2_table(config.data_dir / "g2.csv");
    opts.g2 = &g2;
  }
  const auto assignments = dataio::derive_labels(ratings, config.label_case, opts);
  const auto samples = evaluate::attach_labels(report.samples, assignments, config.target);
  if (samples.empty()) throw Error(ErrorKind::EmptySplit, "no sample received a label");

  const auto participants = evaluate::participants_of(samples);
  const auto plan = config.split == "loso" ? evaluate::loso(participants)
                                           : evaluate::group_kfold(participants, 5, config.seed);

  evaluate::ExperimentConfig ec;
  ec.model = build_model_config(config, samples);
  ec.train = config.train;
  ec.train.seed = config.seed;
  ec.fusion = config.fusion;
  ec.max_parallel = config.jobs;
  const auto result = evaluate::run_experiment(samples, plan, ec);
  const std::vector<evaluate::ExperimentResult> results{result};

  write_file(config.out_dir / "results.csv", evaluate::results_csv(results, config.label_case));
  write_file(config.out_dir / "results.json", evaluate::results_json(results, config.label_case));
  auto resolved = to_json(config, true);
  resolved["config_hash"] = config_hash(config);
  write_file(config.out_dir / "config.json", resolved.dump(2));
  for (const auto& f : result.folds) {
    for (std::size_t m = 0; m < f.logs.size(); ++m) {
      write_file(config.out_dir / "logs" / fmt::format("fold{}_model{}.csv", f.result.fold_index, m),
                 f.logs[m].to_csv());
    }
  }

  fmt::print("{} [{}] {} folds: accuracy {:.4f}, recall {:.4f}\n", result.combination,
             dataio::to_string(config.label_case), result.folds.size(), result.mean_accuracy, result.mean_recall);
  return 0;
}

int cmd_gradcheck(const RunConfig& config) {
  bool ok = true;
  double worst = 0.0;
  for (int i = 0; i < config.gradcheck_seeds; ++i) {
    const auto seed = config.seed + static_cast<std::uint64_t>(i);
    gradcheck::MicroRun run;
    run.data_seed = seed;
    run.frozen = config.gradcheck_frozen;
    const auto report = gradcheck::grad_check(gradcheck::micro_config(seed, config.variant),
                                              config.gradcheck_tolerance, run);
    for (const auto& p : report.params) {
      fmt::print("seed {} {:<24} rel {:.3e}  |analytic| {:.3e}  |numeric| {:.3e}{}\n", seed, p.name, p.max_rel_error,
                 p.max_abs_analytic, p.max_abs_numeric, p.frozen ? "  frozen" : "");
    }
    worst = std::max(worst, report.max_rel_error);
    ok = ok && report.passed;
  }
  fmt::print("max relative error {:.3e} (tolerance {:.1e}): {}\n", worst, config.gradcheck_tolerance,
             ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

int cmd_report(const RunConfig& config) {
  const auto j = ordered_json::parse(read_file(config.out_dir / "results.json"));
  fmt::print("label case: {}\n", j.at("label_case").get<std::string>());
  for (const auto& r : j.at("results")) {
    fmt::print("{}\n", r.at("combination").get<std::string>());
    for (const auto& f : r.at("folds")) {
      fmt::print("  fold {:>2}  n={:<4} accuracy {:.4f}  recall {:.4f}\n", f.at("fold").get<int>(),
                 f.at("n_test_samples").get<std::size_t>(), f.at("accuracy").get<double>(),
                 f.at("recall").get<double>());
    }
    fmt::print("  mean      accuracy {:.4f}  recall {:.4f}\n", r.at("mean_accuracy").get<double>(),
               r.at("mean_recall").get<double>());
  }
  return 0;
}

// ---- argument parsing ------------------------------------------------------

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> labels;
  std::optional<std::string> boundary;
  std::optional<std::string> target;
  std::optional<std::string> domains;
  std::optional<std::string> split;
  std::optional<std::string> fusion;
  std::optional<std::string> variant;
  std::optional<std::string> out;
  std::optional<std::string> data;
  std::optional<std::size_t> jobs;
  std::optional<int> participants;
  std::optional<double> separation;
  std::optional<double> tolerance;
  std::optional<int> seeds;
  std::vector<std::string> frozen;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file; flags override its values")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Seed for every random choice");
  cmd->add_option("--out", f.out, "Output directory");
}

void add_data(CLI::App* cmd, Flags& f) {
  cmd->add_option("--data", f.data, "Dataset directory holding manifest.csv, ratings.csv, g2.csv");
  cmd->add_option("--domains", f.domains, "Comma-separated subset of Peripheral,Trunk,Head");
}

void add_run(CLI::App* cmd, Flags& f) {
  cmd->add_option("--labels", f.labels, "Label case")->check(CLI::IsMember({"general", "majority", "males", "g2"}));
  cmd->add_option("--boundary", f.boundary, "Treatment of a rating of exactly 4")->check(CLI::IsMember({"le4", "strict"}));
  cmd->add_option("--target", f.target, "Affect dimension to classify")->check(CLI::IsMember({"valence", "arousal"}));
  cmd->add_option("--split", f.split, "Cross-validation scheme")->check(CLI::IsMember({"kfold5", "loso"}));
  cmd->add_option("--fusion", f.fusion, "Fusion level")->check(CLI::IsMember({"modality", "sum", "max"}));
  cmd->add_option("--variant", f.variant, "Architecture variant")
      ->check(CLI::IsMember({"lstmsa", "lstmmsa", "emomsase"}));
  cmd->add_option("--jobs", f.jobs, "Folds trained concurrently")->check(CLI::PositiveNumber);
}

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (f.config) apply_config_file(c, *f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out_dir = *f.out;
  if (f.data) c.data_dir = *f.data;
  if (f.domains) c.domains = parse_domain_list(split_csv(*f.domains));
  if (f.labels) c.label_case = dataio::parse_label_case(*f.labels);
  if (f.boundary) c.boundary = dataio::parse_boundary_policy(*f.boundary);
  if (f.target) c.target = dataio::parse_dimension(*f.target);
  if (f.split) c.split = *f.split;
  if (f.fusion) c.fusion = evaluate::parse_fusion(*f.fusion);
  if (f.variant) c.variant = model::parse_variant(*f.variant);
  if (f.jobs) c.jobs = *f.jobs;
  if (f.participants) c.synth_participants = *f.participants;
  if (f.separation) c.synth_class_separation = *f.separation;
  if (f.tolerance) c.gradcheck_tolerance = *f.tolerance;
  if (f.seeds) c.gradcheck_seeds = *f.seeds;
  if (!f.frozen.empty()) c.gradcheck_frozen = f.frozen;
  return c;
}

}  // namespace

int main_entry(int argc, char** argv) {
  CLI::App app{"Multimodal emotion classification with multi-scale attention and SE recalibration"};
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  add_common(synth, f);
  synth->add_option("--participants", f.participants, "Number of synthetic participants")->check(CLI::PositiveNumber);
  synth->add_option("--separation", f.separation, "Amplitude of the class signal");

  auto* prep = app.add_subcommand("preprocess", "Filter, normalize and window the configured channels");
  add_common(prep, f);
  add_data(prep, f);

  auto* run = app.add_subcommand("run", "Cross-validate the model and write results");
  add_common(run, f);
  add_data(run, f);
  add_run(run, f);

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients on the micro-model");
  add_common(gc, f);
  gc->add_option("--variant", f.variant, "Architecture variant")->check(CLI::IsMember({"lstmsa", "lstmmsa", "emomsase"}));
  gc->add_option("--tolerance", f.tolerance, "Largest accepted relative error");
  gc->add_option("--seeds", f.seeds, "Number of consecutive seeds to check")->check(CLI::PositiveNumber);
  gc->add_option("--frozen", f.frozen, "Parameter names to hold fixed");

  auto* rep = app.add_subcommand("report", "Print the per-fold results stored under --out");
  add_common(rep, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  RunConfig config;
  try {
    config = resolve(f);
    config.train.validate();
    if (run->parsed() || prep->parsed()) config.selected_channels();
  } catch (const Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(config);
    if (prep->parsed()) return cmd_preprocess(config);
    if (run->parsed()) return cmd_run(config);
    if (gc->parsed()) return cmd_gradcheck(config);
    if (rep->parsed()) return cmd_report(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace emomsase::cli
