#include "emomsase/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "emomsase/error.hpp"

namespace emomsase::dataio {

namespace fs = std::filesystem;

std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::Peripheral: return "Peripheral";
    case Domain::Trunk: return "Trunk";
    case Domain::Head: return "Head";
  }
  return "?";
}

Domain parse_domain(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "peripheral") return Domain::Peripheral;
  if (lower == "trunk") return Domain::Trunk;
  if (lower == "head") return Domain::Head;
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown domain '{}'", s));
}

const std::vector<ChannelInfo>& channel_catalog() {
  static const std::vector<ChannelInfo> catalog = {
      {"ACC_X", Domain::Peripheral, 64.0},   {"ACC_Y", Domain::Peripheral, 64.0},
      {"ACC_Z", Domain::Peripheral, 64.0},   {"TEMP", Domain::Peripheral, std::nullopt},
      {"EDA", Domain::Peripheral, 4.0},      {"BVP", Domain::Peripheral, 64.0},
      {"ECG1", Domain::Trunk, 256.0},        {"ECG2", Domain::Trunk, 256.0},
      {"LAT_ACC", Domain::Trunk, 256.0},     {"LONG_ACC", Domain::Trunk, 256.0},
      {"VERT_ACC", Domain::Trunk, 256.0},    {"GSR", Domain::Trunk, 256.0},
      {"L_EP_X", Domain::Head, std::nullopt}, {"L_EP_Y", Domain::Head, std::nullopt},
      {"L_EP_Z", Domain::Head, std::nullopt}, {"R_EP_X", Domain::Head, std::nullopt},
      {"R_EP_Y", Domain::Head, std::nullopt}, {"R_EP_Z", Domain::Head, std::nullopt},
  };
  return catalog;
}

const ChannelInfo& find_channel(std::string_view name) {
  for (const auto& info : channel_catalog()) {
    if (info.name == name) return info;
  }
  throw Error(ErrorKind::MissingChannel, fmt::format("channel '{}' is not in the catalog", name));
}

std::vector<double> RawRecording::values() const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.value);
  return out;
}

std::string_view to_string(LabelCase c) {
  switch (c) {
    case LabelCase::General: return "general";
    case LabelCase::Majority: return "majority";
    case LabelCase::MalesOnly: return "males";
    case LabelCase::G2: return "g2";
  }
  return "?";
}

LabelCase parse_label_case(std::string_view s) {
  if (s == "general") return LabelCase::General;
  if (s == "majority") return LabelCase::Majority;
  if (s == "males") return LabelCase::MalesOnly;
  if (s == "g2") return LabelCase::G2;
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown label case '{}'", s));
}

std::string_view to_string(BoundaryPolicy p) { return p == BoundaryPolicy::LE4Low ? "le4" : "strict"; }

BoundaryPolicy parse_boundary_policy(std::string_view s) {
  if (s == "le4") return BoundaryPolicy::LE4Low;
  if (s == "strict") return BoundaryPolicy::StrictGT4;
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown boundary policy '{}'", s));
}

std::string_view to_string(Dimension d) { return d == Dimension::Valence ? "valence" : "arousal"; }

Dimension parse_dimension(std::string_view s) {
  if (s == "valence") return Dimension::Valence;
  if (s == "arousal") return Dimension::Arousal;
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown target dimension '{}'", s));
}

Level binarize_rating(int raw, BoundaryPolicy policy) {
  if (raw < 1 || raw > 7) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("rating {} outside 1..7", raw));
  }
  if (policy == BoundaryPolicy::LE4Low) return raw <= 4 ? Level::Low : Level::High;
  if (raw == 4) throw Error(ErrorKind::AmbiguousBoundary, "rating 4 has no class under the strict policy");
  return raw < 4 ? Level::Low : Level::High;
}

namespace {

struct MajorityVote {
  Level level;
  double fraction;
};

MajorityVote majority_of(const std::vector<Level>& levels, const std::string& video, Dimension dim) {
  const auto high = static_cast<std::size_t>(std::count(levels.begin(), levels.end(), Level::High));
  const std::size_t low = levels.size() - high;
  if (high == low) {
    throw Error(ErrorKind::MajorityTie, fmt::format("video '{}' {} split {}/{}", video, to_string(dim), high, low));
  }
  const std::size_t winner = std::max(high, low);
  return {high > low ? Level::High : Level::Low, static_cast<double>(winner) / static_cast<double>(levels.size())};
}

}  // namespace

std::vector<LabelAssignment> derive_labels(const std::vector<SamRating>& ratings, LabelCase label_case,
                                           const LabelOptions& options) {
  std::vector<LabelAssignment> out;
  switch (label_case) {
    case LabelCase::General:
    case LabelCase::MalesOnly: {
      for (const auto& r : ratings) {
        if (label_case == LabelCase::MalesOnly && r.sex != Sex::Male) continue;
        LabelAssignment a;
        a.label_case = label_case;
        a.video_id = r.video_id;
        a.participant_id = r.participant_id;
        a.valence = binarize_rating(r.valence_raw, options.policy);
        a.arousal = binarize_rating(r.arousal_raw, options.policy);
        out.push_back(std::move(a));
      }
      break;
    }
    case LabelCase::Majority: {
      std::map<std::string, std::pair<std::vector<Level>, std::vector<Level>>> by_video;
      for (const auto& v : options.videos) by_video[v];
      for (const auto& r : ratings) {
        auto& [val, aro] = by_video[r.video_id];
        val.push_back(binarize_rating(r.valence_raw, options.policy));
        aro.push_back(binarize_rating(r.arousal_raw, options.policy));
      }
      if (by_video.empty()) throw Error(ErrorKind::EmptyVideo, "no ratings supplied");
      for (const auto& [video, levels] : by_video) {
        if (levels.first.empty()) throw Error(ErrorKind::EmptyVideo, fmt::format("video '{}' has no ratings", video));
        const auto val = majority_of(levels.first, video, Dimension::Valence);
        const auto aro = majority_of(levels.second, video, Dimension::Arousal);
        LabelAssignment a;
        a.label_case = label_case;
        a.video_id = video;
        a.valence = val.level;
        a.arousal = aro.level;
        a.valence_fraction = val.fraction;
        a.arousal_fraction = aro.fraction;
        out.push_back(std::move(a));
      }
      break;
    }
    case LabelCase::G2: {
      if (options.g2 == nullptr) throw Error(ErrorKind::MissingTable, "the G2 case needs a per-video label table");
      for (const auto& e : *options.g2) {
        LabelAssignment a;
        a.label_case = label_case;
        a.video_id = e.video_id;
        a.valence = e.valence;
        a.arousal = e.arousal;
        out.push_back(std::move(a));
      }
      break;
    }
  }
  return out;
}

// ---- CSV -------------------------------------------------------------------

namespace {

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t')) c.pop_back();
    std::size_t i = 0;
    while (i < c.size() && (c[i] == ' ' || c[i] == '\t')) ++i;
    c.erase(0, i);
  }
  return cells;
}

template <typename T>
T parse_number(const std::string& cell, const fs::path& file, std::size_t row) {
  T value{};
  const auto* first = cell.data();
  const auto* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorKind::ParseError, fmt::format("{} row {}: cannot parse '{}'", file.string(), row, cell));
  }
  return value;
}

Level parse_level(std::string_view s) {
  if (s == "HV" || s == "HA" || s == "High" || s == "high" || s == "1") return Level::High;
  if (s == "LV" || s == "LA" || s == "Low" || s == "low" || s == "0") return Level::Low;
  throw Error(ErrorKind::ParseError, fmt::format("unknown label '{}'", s));
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, fmt::format("cannot write {}", path.string()));
  return out;
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(ErrorKind::ParseError, fmt::format("missing column '{}'", name));
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (first) {
      table.header = std::move(cells);
      first = false;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw Error(ErrorKind::ParseError, fmt::format("{} row {}: expected {} columns, got {}", path.string(),
                                                     table.rows.size() + 1, table.header.size(), cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (first) throw Error(ErrorKind::ParseError, fmt::format("{} is empty", path.string()));
  return table;
}

std::vector<ManifestRow> read_manifest(const fs::path& manifest) {
  const auto table = read_csv(manifest);
  const auto c_file = table.column("file");
  const auto c_pid = table.column("participant_id");
  const auto c_vid = table.column("video_id");
  const auto c_dom = table.column("domain");
  const auto c_ch = table.column("channel");
  const auto c_rate = table.column("sample_rate_hz");
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    ManifestRow m;
    m.file = r[c_file];
    m.participant_id = r[c_pid];
    m.video_id = r[c_vid];
    m.domain = parse_domain(r[c_dom]);
    m.channel = r[c_ch];
    m.sample_rate_hz = parse_number<double>(r[c_rate], manifest, i + 1);
    if (!(m.sample_rate_hz > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("{} row {}: sample rate must be positive", manifest.string(), i + 1));
    }
    rows.push_back(std::move(m));
  }
  return rows;
}

RawRecording read_recording(const fs::path& file, const ManifestRow& row) {
  if (!fs::exists(file)) throw Error(ErrorKind::MissingFile, file.string());
  const auto table = read_csv(file);
  const auto c_ts = table.column("timestamp_ms");
  const auto c_val = table.column("value");

  RawRecording rec;
  rec.participant_id = row.participant_id;
  rec.video_id = row.video_id;
  rec.domain = row.domain;
  rec.channel = row.channel;
  rec.sample_rate_hz = row.sample_rate_hz;
  rec.samples.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const TimedSample s{parse_number<std::int64_t>(table.rows[i][c_ts], file, i + 1),
                        parse_number<double>(table.rows[i][c_val], file, i + 1)};
    if (!rec.samples.empty() && s.timestamp_ms <= rec.samples.back().timestamp_ms) {
      throw Error(ErrorKind::NonMonotoneTimestamps, fmt::format("{} row {}", file.string(), i + 1));
    }
    rec.samples.push_back(s);
  }
  if (rec.samples.empty()) throw Error(ErrorKind::ParseError, fmt::format("{} has no samples", file.string()));

  if (rec.samples.size() >= 2) {
    const double span = static_cast<double>(rec.samples.back().timestamp_ms - rec.samples.front().timestamp_ms);
    const double observed = span / static_cast<double>(rec.samples.size() - 1);
    const double declared = 1000.0 / rec.sample_rate_hz;
    if (std::abs(observed - declared) > 0.05 * declared) {
      throw Error(ErrorKind::RateMismatch,
                  fmt::format("{}: mean spacing {:.4f} ms, declared {:.4f} ms", file.string(), observed, declared));
    }
  }
  return rec;
}

std::vector<RawRecording> load_recordings(const fs::path& dir_path, const fs::path& manifest) {
  std::vector<RawRecording> out;
  for (const auto& row : read_manifest(manifest)) {
    out.push_back(read_recording(dir_path / row.file, row));
  }
  return out;
}

std::vector<SamRating> load_ratings(const fs::path& path) {
  const auto table = read_csv(path);
  const auto c_pid = table.column("participant_id");
  const auto c_vid = table.column("video_id");
  const auto c_val = table.column("valence");
  const auto c_aro = table.column("arousal");
  const auto c_sex = table.column("sex");
  std::vector<SamRating> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    SamRating s;
    s.participant_id = r[c_pid];
    s.video_id = r[c_vid];
    s.valence_raw = parse_number<int>(r[c_val], path, i + 1);
    s.arousal_raw = parse_number<int>(r[c_aro], path, i + 1);
    if (s.valence_raw < 1 || s.valence_raw > 7 || s.arousal_raw < 1 || s.arousal_raw > 7) {
      throw Error(ErrorKind::ParseError, fmt::format("{} row {}: rating outside 1..7", path.string(), i + 1));
    }
    const auto& sex = r[c_sex];
    if (sex == "M" || sex == "Male" || sex == "male") {
      s.sex = Sex::Male;
    } else if (sex == "F" || sex == "Female" || sex == "female") {
      s.sex = Sex::Female;
    } else {
      throw Error(ErrorKind::ParseError, fmt::format("{} row {}: unknown sex '{}'", path.string(), i + 1, sex));
    }
    out.push_back(std::move(s));
  }
  return out;
}

G2Table load_g2_table(const fs::path& path) {
  const auto table = read_csv(path);
  const auto c_vid = table.column("video_id");
  const auto c_val = table.column("g2_valence");
  const auto c_aro = table.column("g2_arousal");
  G2Table out;
  for (const auto& r : table.rows) out.push_back({r[c_vid], parse_level(r[c_val]), parse_level(r[c_aro])});
  return out;
}

void write_recording_csv(const fs::path& path, const RawRecording& rec) {
  auto out = open_out(path);
  out << "timestamp_ms,value\n";
  for (const auto& s : rec.samples) out << fmt::format("{},{}\n", s.timestamp_ms, s.value);
}

void write_ratings_csv(const fs::path& path, const std::vector<SamRating>& ratings) {
  auto out = open_out(path);
  out << "participant_id,video_id,valence,arousal,sex\n";
  for (const auto& r : ratings) {
    out << fmt::format("{},{},{},{},{}\n", r.participant_id, r.video_id, r.valence_raw, r.arousal_raw,
                       r.sex == Sex::Male ? "M" : "F");
  }
}

void write_g2_csv(const fs::path& path, const G2Table& table) {
  auto out = open_out(path);
  out << "video_id,g2_valence,g2_arousal\n";
  for (const auto& e : table) {
    out << fmt::format("{},{},{}\n", e.video_id, e.valence == Level::High ? "HV" : "LV",
                       e.arousal == Level::High ? "HA" : "LA");
  }
}

// ---- Synthetic -------------------------------------------------------------

std::vector<SyntheticChannel> default_synthetic_channels() {
  return {{"ACC_Z", 64.0},  {"EDA", 4.0},     {"TEMP", 4.0},    {"LAT_ACC", 256.0}, {"LONG_ACC", 256.0},
          {"L_EP_X", 50.0}, {"L_EP_Y", 50.0}, {"L_EP_Z", 50.0}, {"R_EP_Y", 50.0},   {"R_EP_Z", 50.0}};
}

namespace {

// Carrier for the class signal: integer Hz for the band-passed and raw channels so every
// 1 s / 2 s hop sees the same phase; slow channels (low-passed or smoothed) get 0.25 Hz.
double carrier_hz(std::string_view channel) {
  if (channel == "EDA" || channel == "TEMP") return 0.25;
  return 2.0;
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.class_separation < 0.0) throw Error(ErrorKind::InvalidArgument, "class_separation must be >= 0");
  if (spec.channels.empty()) throw Error(ErrorKind::InvalidArgument, "synthetic spec needs at least one channel");
  if (spec.n_participants < 1 || spec.n_videos < 1 || !(spec.duration_s > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "synthetic spec sizes must be positive");
  }

  std::vector<Domain> domains;
  for (const auto& ch : spec.channels) {
    if (!(ch.sample_rate_hz > 0.0)) throw Error(ErrorKind::InvalidArgument, fmt::format("channel {} needs a rate", ch.channel));
    const auto d = find_channel(ch.channel).domain;
    if (std::find(domains.begin(), domains.end(), d) == domains.end()) domains.push_back(d);
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> low_rating(1, 3);
  std::uniform_int_distribution<int> high_rating(5, 7);
  std::uniform_int_distribution<std::size_t> pick_domain(0, domains.size() - 1);

  SyntheticData data;
  std::vector<std::string> videos;
  for (int v = 0; v < spec.n_videos; ++v) {
    videos.push_back(fmt::format("V{:02d}", v + 1));
    data.g2.push_back({videos.back(), v % 2 == 0 ? Level::High : Level::Low, (v / 2) % 2 == 0 ? Level::High : Level::Low});
  }

  auto draw = [&](Level base) {
    const bool agree = unit(rng) < spec.rater_agreement;
    const Level level = agree ? base : (base == Level::High ? Level::Low : Level::High);
    return level == Level::High ? high_rating(rng) : low_rating(rng);
  };

  for (int p = 0; p < spec.n_participants; ++p) {
    const std::string pid = fmt::format("P{:02d}", p + 1);
    const Sex sex = (p % 4 == 3) ? Sex::Female : Sex::Male;
    for (std::size_t v = 0; v < videos.size(); ++v) {
      SamRating rating{pid, videos[v], draw(data.g2[v].valence), draw(data.g2[v].arousal), sex};
      const bool positive = rating.valence_raw > 4;
      std::optional<Domain> silent;
      if (positive && domains.size() >= 2) silent = domains[pick_domain(rng)];

      for (const auto& ch : spec.channels) {
        RawRecording rec;
        rec.participant_id = pid;
        rec.video_id = videos[v];
        rec.channel = ch.channel;
        rec.domain = find_channel(ch.channel).domain;
        rec.sample_rate_hz = ch.sample_rate_hz;
        const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * ch.sample_rate_hz));
        const double offset = normal(rng);
        const bool carries = positive && silent != rec.domain;
        const double freq = carrier_hz(ch.channel);
        rec.samples.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double t = static_cast<double>(i) / ch.sample_rate_hz;
          double value = offset + normal(rng);
          if (carries) value += spec.class_separation * std::sin(2.0 * std::numbers::pi * freq * t);
          rec.samples.push_back({std::llround(t * 1000.0), value});
        }
        data.recordings.push_back(std::move(rec));
      }
      data.ratings.push_back(std::move(rating));
    }
  }
  return data;
}

void write_dataset(const fs::path& dir, const SyntheticData& data) {
  fs::create_directories(dir / "raw");
  auto manifest = open_out(dir / "manifest.csv");
  manifest << "file,participant_id,video_id,domain,channel,sample_rate_hz\n";
  for (const auto& rec : data.recordings) {
    const auto rel = fmt::format("raw/{}_{}_{}.csv", rec.participant_id, rec.video_id, rec.channel);
    write_recording_csv(dir / rel, rec);
    manifest << fmt::format("{},{},{},{},{},{}\n", rel, rec.participant_id, rec.video_id, to_string(rec.domain),
                            rec.channel, rec.sample_rate_hz);
  }
  write_ratings_csv(dir / "ratings.csv", data.ratings);
  write_g2_csv(dir / "g2.csv", data.g2);
}

}  // namespace emomsase::dataio
