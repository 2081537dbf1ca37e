#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emomsase/dataio.hpp"

namespace emomsase::preprocess {

using Signal = std::vector<double>;

enum class FilterKind { BandPass, LowPass, MovingAverage };

struct FilterSpec {
  FilterKind kind = FilterKind::BandPass;
  std::optional<double> low_hz;
  std::optional<double> high_hz;
  int order = 4;
  std::optional<int> window_len;  // MovingAverage only

  static FilterSpec band_pass(double low, double high, int order = 4) {
    return {FilterKind::BandPass, low, high, order, std::nullopt};
  }
  static FilterSpec low_pass(double high, int order = 4) { return {FilterKind::LowPass, std::nullopt, high, order, std::nullopt}; }
  static FilterSpec moving_average(int window) { return {FilterKind::MovingAverage, std::nullopt, std::nullopt, 0, window}; }
};

/// Segmented model input: T windows (rows) by F samples per window (columns).
struct WindowedTensor {
  Eigen::MatrixXd values;
  std::string participant_id;
  std::string video_id;
  std::string channel;

  std::size_t timesteps() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t features() const { return static_cast<std::size_t>(values.cols()); }
};

/// Second-order section, a0 normalized to 1. Transposed direct form II.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

/// Digital Butterworth design (bilinear transform, prewarped cutoffs) as cascaded
/// sections. Band-pass of order n has 2n poles.
std::vector<Biquad> butterworth_design(const FilterSpec& spec, double rate_hz);

/// Single forward pass of a section cascade starting from rest.
Signal sos_filter(std::span<const Biquad> sections, std::span<const double> x);

/// Zero-phase Butterworth (forward-backward with odd extension and steady-state initial
/// conditions). MovingAverage specs are routed to moving_average().
Signal butterworth_filter(std::span<const double> signal, double rate_hz, const FilterSpec& spec);

/// Centered window; windows near the edges are truncated to the samples that exist.
Signal moving_average(std::span<const double> signal, int window_len);

/// Linear interpolation onto the finer grid; the last segment's slope extends past the end.
Signal upsample(std::span<const double> signal, double from_hz, double to_hz);

/// Population z-score.
Signal zscore(std::span<const double> signal);

Signal take_tail(std::span<const double> signal, double rate_hz, double seconds = 40.0);
Signal take_tail_coords(std::span<const double> coords, std::size_t n = 2000);

WindowedTensor segment(std::span<const double> signal, std::size_t window_samples, double overlap_fraction = 0.5);

/// Per-channel chain. Order: upsample, filter, z-score over the whole stream, tail, segment.
struct ChannelProfile {
  std::string channel;
  double input_rate_hz = 0.0;
  std::optional<double> upsample_to_hz;
  std::optional<FilterSpec> filter;
  bool coordinate_stream = false;  // eye positions: no rate-based tail or window
  double tail_seconds = 40.0;
  std::size_t tail_coords = 2000;
  double window_seconds = 2.0;
  std::size_t coord_window = 200;
  double overlap = 0.5;

  double working_rate_hz() const { return upsample_to_hz.value_or(input_rate_hz); }
  std::size_t window_samples() const;
  std::size_t expected_timesteps() const;
};

/// Profile for a catalog channel at the given recorded rate. GSR is rejected.
ChannelProfile profile_for(std::string_view channel, double rate_hz);

WindowedTensor preprocess_channel(const dataio::RawRecording& rec, const ChannelProfile& profile);

// Cache format: little-endian u32 T, u32 F, then T*F f64 row-major.
void write_tensor(const std::filesystem::path& path, const Eigen::MatrixXd& values);
Eigen::MatrixXd read_tensor(const std::filesystem::path& path);

}  // namespace emomsase::preprocess
