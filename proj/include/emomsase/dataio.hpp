#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace emomsase::dataio {

enum class Domain { Peripheral, Trunk, Head };

std::string_view to_string(Domain d);
Domain parse_domain(std::string_view s);

/// One row of the channel catalog. Rate is absent for the headset eye-position
/// channels, which are treated as ordered coordinate streams.
struct ChannelInfo {
  std::string_view name;
  Domain domain;
  std::optional<double> rate_hz;
};

/// All channels the three devices provide (GSR included; it is dropped later).
const std::vector<ChannelInfo>& channel_catalog();
const ChannelInfo& find_channel(std::string_view name);

struct TimedSample {
  std::int64_t timestamp_ms;
  double value;
};

struct RawRecording {
  std::string participant_id;
  std::string video_id;
  Domain domain = Domain::Peripheral;
  std::string channel;
  double sample_rate_hz = 0.0;
  std::vector<TimedSample> samples;

  std::vector<double> values() const;
};

enum class Sex { Male, Female };

struct SamRating {
  std::string participant_id;
  std::string video_id;
  int valence_raw = 0;
  int arousal_raw = 0;
  Sex sex = Sex::Male;
};

/// Binarized affect level. Low is class 0, High is class 1 (the positive class).
enum class Level { Low = 0, High = 1 };

enum class LabelCase { General, Majority, MalesOnly, G2 };
enum class BoundaryPolicy { StrictGT4, LE4Low };
enum class Dimension { Valence, Arousal };

std::string_view to_string(LabelCase c);
LabelCase parse_label_case(std::string_view s);
std::string_view to_string(BoundaryPolicy p);
BoundaryPolicy parse_boundary_policy(std::string_view s);
std::string_view to_string(Dimension d);
Dimension parse_dimension(std::string_view s);

struct LabelAssignment {
  LabelCase label_case = LabelCase::General;
  std::string video_id;
  std::optional<std::string> participant_id;  // absent for per-video cases
  Level valence = Level::Low;
  Level arousal = Level::Low;
  // Set for Majority only, one per dimension.
  std::optional<double> valence_fraction;
  std::optional<double> arousal_fraction;

  Level level(Dimension d) const { return d == Dimension::Valence ? valence : arousal; }
};

struct G2Entry {
  std::string video_id;
  Level valence = Level::Low;
  Level arousal = Level::Low;
};
using G2Table = std::vector<G2Entry>;

struct LabelOptions {
  BoundaryPolicy policy = BoundaryPolicy::LE4Low;
  const G2Table* g2 = nullptr;
  // When non-empty, every listed video must receive a Majority label.
  std::vector<std::string> videos;
};

Level binarize_rating(int raw, BoundaryPolicy policy);

std::vector<LabelAssignment> derive_labels(const std::vector<SamRating>& ratings, LabelCase label_case,
                                           const LabelOptions& options = {});

// ---- CSV ingestion ---------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

struct ManifestRow {
  std::string file;
  std::string participant_id;
  std::string video_id;
  Domain domain = Domain::Peripheral;
  std::string channel;
  double sample_rate_hz = 0.0;
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& manifest);

/// Reads a `timestamp_ms,value` sensor file and validates it against the declared rate.
RawRecording read_recording(const std::filesystem::path& file, const ManifestRow& row);

std::vector<RawRecording> load_recordings(const std::filesystem::path& dir_path,
                                          const std::filesystem::path& manifest);

std::vector<SamRating> load_ratings(const std::filesystem::path& path);
G2Table load_g2_table(const std::filesystem::path& path);

void write_recording_csv(const std::filesystem::path& path, const RawRecording& rec);
void write_ratings_csv(const std::filesystem::path& path, const std::vector<SamRating>& ratings);
void write_g2_csv(const std::filesystem::path& path, const G2Table& table);

// ---- Synthetic data --------------------------------------------------------

struct SyntheticChannel {
  std::string channel;
  double sample_rate_hz = 0.0;
};

/// Stand-in for the private recordings. Positive-class (valence High) recordings
/// carry an additive sinusoid of amplitude class_separation; with two or more
/// domains present, one seeded domain per positive recording is left without it,
/// so the class signal is split across domains.
struct SyntheticSpec {
  int n_participants = 24;
  std::uint64_t seed = 0;
  double class_separation = 2.0;
  std::vector<SyntheticChannel> channels;
  int n_videos = 13;
  double duration_s = 60.0;
  double rater_agreement = 0.85;  // probability a participant agrees with the video's base class
};

std::vector<SyntheticChannel> default_synthetic_channels();

struct SyntheticData {
  std::vector<RawRecording> recordings;
  std::vector<SamRating> ratings;
  G2Table g2;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

/// Writes sensor CSVs under dir/raw/, plus manifest.csv, ratings.csv and g2.csv.
void write_dataset(const std::filesystem::path& dir, const SyntheticData& data);

}  // namespace emomsase::dataio
