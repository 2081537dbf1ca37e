#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "emomsase/dataio.hpp"
#include "emomsase/evaluate.hpp"
#include "emomsase/model.hpp"
#include "emomsase/train.hpp"

namespace emomsase::cli {

/// Fully resolved settings for every command. Built from defaults, then a JSON file,
/// then command-line flags.
struct RunConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;

  dataio::LabelCase label_case = dataio::LabelCase::General;
  dataio::BoundaryPolicy boundary = dataio::BoundaryPolicy::LE4Low;
  dataio::Dimension target = dataio::Dimension::Valence;
  std::vector<dataio::Domain> domains = {dataio::Domain::Peripheral, dataio::Domain::Trunk, dataio::Domain::Head};
  std::map<dataio::Domain, std::vector<std::string>> channels = {
      {dataio::Domain::Peripheral, {"ACC_Z", "EDA", "TEMP"}},
      {dataio::Domain::Trunk, {"LAT_ACC", "LONG_ACC"}},
      {dataio::Domain::Head, {"L_EP_X", "L_EP_Y", "L_EP_Z", "R_EP_Y", "R_EP_Z"}},
  };
  std::string split = "kfold5";
  evaluate::Fusion fusion = evaluate::Fusion::ModalityLevel;
  model::Variant variant = model::Variant::EMO_MSASE;
  std::size_t hidden = 128;
  std::size_t layers = 2;
  std::size_t reduction = 4;
  train::TrainConfig train;
  std::size_t jobs = 1;

  int synth_participants = 24;
  double synth_class_separation = 2.0;
  int synth_videos = 13;
  double synth_duration_s = 60.0;

  double gradcheck_tolerance = 1e-3;
  int gradcheck_seeds = 1;
  std::vector<std::string> gradcheck_frozen;

  /// Channels of the selected domains, in Peripheral, Trunk, Head order.
  std::vector<std::string> selected_channels() const;
};

/// Overlays a JSON object on `config`. Unknown keys throw UnknownKey.
void apply_json(RunConfig& config, const std::string& json_text);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Stable hash of the settings that affect results.
std::string config_hash(const RunConfig& config);

// ---- preprocessing ---------------------------------------------------------

struct ChannelShape {
  std::string channel;
  std::size_t timesteps = 0;
  std::size_t features = 0;
  std::size_t recordings = 0;
};

struct PreprocessReport {
  std::vector<evaluate::Sample> samples;
  std::vector<ChannelShape> shapes;
  std::size_t computed = 0;
  std::size_t cached = 0;
};

/// Runs the channel chains over in-memory recordings of the listed channels.
std::vector<evaluate::Sample> preprocess_recordings(std::span<const dataio::RawRecording> recordings,
                                                    const std::set<std::string>& channels);

/// Reads the manifest under data_dir and preprocesses the listed channels, reusing
/// tensors from cache_dir whose content hash matches.
PreprocessReport preprocess_dataset(const std::filesystem::path& data_dir, const std::filesystem::path& cache_dir,
                                    const std::vector<std::string>& channels);

std::vector<ChannelShape> summarize_shapes(std::span<const evaluate::Sample> samples);

/// Model configuration for the selected domains, with F taken from the data.
model::ModelConfig build_model_config(const RunConfig& config, std::span<const evaluate::Sample> samples);

// ---- commands --------------------------------------------------------------

int cmd_synth(const RunConfig& config);
int cmd_preprocess(const RunConfig& config);
int cmd_run(const RunConfig& config);
int cmd_gradcheck(const RunConfig& config);
int cmd_report(const RunConfig& config);

/// Parses argv and dispatches. Exit codes: 0 success, 1 failure, 2 usage error.
int main_entry(int argc, char** argv);

}  // namespace emomsase::cli
