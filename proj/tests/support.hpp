#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unistd.h>
#include <vector>

#include <fmt/format.h>

#include "emomsase/dataio.hpp"

namespace emomsase::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("emomsase_{}_{}_{}", tag, static_cast<long>(::getpid()), counter++);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// One row of the stimulus table: majority label and count of agreeing raters (of 23)
/// for arousal and valence.
struct StimulusRow {
  std::string_view title;
  std::string_view arousal;  // "HA" or "LA"
  int arousal_count;
  std::string_view valence;  // "HV" or "LV"
  int valence_count;
  std::string_view printed_arousal;  // percentage as printed in the table
  std::string_view printed_valence;
};

inline constexpr int kRaters = 23;

inline const std::array<StimulusRow, 13>& stimulus_table() {
  static const std::array<StimulusRow, 13> rows{{
      {"Jailbreak", "HA", 19, "LV", 17, "82.61", "73.91"},
      {"War knows no nation", "HA", 19, "LV", 17, "82.61", "73.91"},
      {"The displaced", "HA", 15, "LV", 21, "65.22", "91.30"},
      {"Solitary confinement", "HA", 15, "LV", 21, "65.22", "91.30"},
      {"Walk the tight rope", "LA", 12, "HV", 20, "52.17", "86.96"},
      {"Puppies host SourceFed for a day", "LA", 12, "HV", 20, "52.17", "86.96"},
      {"Malaekahana Sunrise", "LA", 14, "HV", 23, "60.87", "100"},
      {"Great ocean road", "LA", 14, "HV", 23, "60.87", "100"},
      {"The fight to save threatened species", "LA", 14, "HV", 20, "60.87", "86.96"},
      {"Instant Caribbean vacation", "LA", 12, "HV", 20, "52.17", "86.96"},
      {"Seagulls", "LA", 17, "LV", 13, "73.91", "56.52"},
      {"The margins", "HA", 13, "LV", 21, "56.52", "91.30"},
      {"Through Mowgli's Eyes", "HA", 14, "LV", 12, "60.87", "52.17"},
  }};
  return rows;
}

/// 23 ratings per video whose binarized majority and fraction match the table. Raters
/// agreeing with the majority rate 6 (high) or 2 (low), the rest the opposite.
inline std::vector<dataio::SamRating> stimulus_ratings() {
  std::vector<dataio::SamRating> out;
  for (const auto& row : stimulus_table()) {
    const bool ha = row.arousal == "HA";
    const bool hv = row.valence == "HV";
    for (int r = 0; r < kRaters; ++r) {
      const bool a_major = r < row.arousal_count;
      const bool v_major = r < row.valence_count;
      dataio::SamRating s;
      s.participant_id = fmt::format("R{:02d}", r + 1);
      s.video_id = std::string(row.title);
      s.arousal_raw = (a_major == ha) ? 6 : 2;
      s.valence_raw = (v_major == hv) ? 6 : 2;
      s.sex = r % 3 == 0 ? dataio::Sex::Female : dataio::Sex::Male;
      out.push_back(std::move(s));
    }
  }
  return out;
}

/// Percentage formatted the way the stimulus table prints it.
inline std::string printed_percentage(double fraction) {
  const double pct = fraction * 100.0;
  if (std::abs(pct - 100.0) < 1e-9) return "100";
  return fmt::format("{:.2f}", pct);
}

}  // namespace emomsase::testing
