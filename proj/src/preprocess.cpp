#include "emomsase/preprocess.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "emomsase/error.hpp"

namespace emomsase::preprocess {

using cplx = std::complex<double>;

namespace {

void require_cutoffs(const FilterSpec& spec, double rate_hz) {
  const double nyquist = rate_hz / 2.0;
  if (spec.order < 1) throw Error(ErrorKind::InvalidArgument, "filter order must be >= 1");
  if (spec.kind == FilterKind::BandPass) {
    if (!spec.low_hz || !spec.high_hz || !(*spec.low_hz > 0.0) || !(*spec.low_hz < *spec.high_hz) ||
        !(*spec.high_hz < nyquist)) {
      throw Error(ErrorKind::CutoffOutOfRange, fmt::format("band-pass needs 0 < low < high < {} Hz", nyquist));
    }
  } else if (spec.kind == FilterKind::LowPass) {
    if (!spec.high_hz || !(*spec.high_hz > 0.0) || !(*spec.high_hz < nyquist)) {
      throw Error(ErrorKind::CutoffOutOfRange, fmt::format("low-pass needs 0 < cutoff < {} Hz", nyquist));
    }
  }
}

// Steady-state section states for a unit step at the cascade input.
std::vector<std::array<double, 2>> step_initial_state(std::span<const Biquad> sections) {
  std::vector<std::array<double, 2>> zi(sections.size());
  double scale = 1.0;
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const auto& s = sections[k];
    const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double z2 = s.b2 - s.a2 * gain;
    const double z1 = s.b1 - s.a1 * gain + z2;
    zi[k] = {z1 * scale, z2 * scale};
    scale *= gain;
  }
  return zi;
}

Signal run_cascade(std::span<const Biquad> sections, std::span<const double> x,
                   std::vector<std::array<double, 2>> state) {
  Signal y(x.begin(), x.end());
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const auto& s = sections[k];
    double z1 = state[k][0];
    double z2 = state[k][1];
    for (auto& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

}  // namespace

std::vector<Biquad> butterworth_design(const FilterSpec& spec, double rate_hz) {
  if (spec.kind == FilterKind::MovingAverage) {
    throw Error(ErrorKind::InvalidArgument, "moving average has no Butterworth design");
  }
  require_cutoffs(spec, rate_hz);
  const int n = spec.order;
  const double fs2 = 2.0 * rate_hz;
  auto prewarp = [&](double f) { return fs2 * std::tan(std::numbers::pi * f / rate_hz); };

  std::vector<cplx> proto;
  for (int m = -n + 1; m < n; m += 2) {
    proto.push_back(-std::exp(cplx(0.0, std::numbers::pi * m / (2.0 * n))));
  }

  std::vector<cplx> poles;
  std::vector<cplx> zeros;
  double gain = 1.0;
  if (spec.kind == FilterKind::LowPass) {
    const double wc = prewarp(*spec.high_hz);
    for (const auto& p : proto) poles.push_back(p * wc);
    gain = std::pow(wc, n);
  } else {
    const double wl = prewarp(*spec.low_hz);
    const double wh = prewarp(*spec.high_hz);
    const double bw = wh - wl;
    const double w0 = std::sqrt(wl * wh);
    for (const auto& p : proto) {
      const cplx half = p * bw / 2.0;
      const cplx root = std::sqrt(half * half - w0 * w0);
      poles.push_back(half + root);
      poles.push_back(half - root);
    }
    zeros.assign(static_cast<std::size_t>(n), cplx(0.0, 0.0));
    gain = std::pow(bw, n);
  }

  // Bilinear transform; zeros at infinity land on z = -1.
  cplx num(1.0, 0.0);
  cplx den(1.0, 0.0);
  std::vector<cplx> zpoles;
  std::vector<double> zzeros;
  for (const auto& z : zeros) {
    num *= (fs2 - z);
    zzeros.push_back(((fs2 + z) / (fs2 - z)).real());
  }
  for (const auto& p : poles) {
    den *= (fs2 - p);
    zpoles.push_back((fs2 + p) / (fs2 - p));
  }
  const std::size_t at_nyquist = poles.size() - zeros.size();
  const double zgain = gain * (num / den).real();

  // Interleave +1/-1 zeros so each band-pass section gets one of each.
  std::vector<double> plus;
  std::vector<double> minus(at_nyquist, -1.0);
  for (double z : zzeros) (z > 0 ? plus : minus).push_back(z);
  std::vector<double> zero_queue;
  while (!plus.empty() || !minus.empty()) {
    if (!plus.empty()) { zero_queue.push_back(plus.back()); plus.pop_back(); }
    if (!minus.empty()) { zero_queue.push_back(minus.back()); minus.pop_back(); }
  }

  std::vector<cplx> upper;
  std::vector<double> reals;
  for (const auto& p : zpoles) {
    if (std::abs(p.imag()) < 1e-12) {
      reals.push_back(p.real());
    } else if (p.imag() > 0) {
      upper.push_back(p);
    }
  }

  std::vector<Biquad> sections;
  std::size_t zi = 0;
  auto take_zero = [&]() { return zi < zero_queue.size() ? zero_queue[zi++] : 0.0; };
  for (const auto& p : upper) {
    const double z1 = take_zero();
    const double z2 = take_zero();
    sections.push_back({1.0, -(z1 + z2), z1 * z2, -2.0 * p.real(), std::norm(p)});
  }
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    const double z1 = take_zero();
    const double z2 = take_zero();
    sections.push_back({1.0, -(z1 + z2), z1 * z2, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]});
  }
  if (reals.size() % 2 == 1) {
    const double z1 = take_zero();
    sections.push_back({1.0, -z1, 0.0, -reals.back(), 0.0});
  }
  sections.front().b0 *= zgain;
  sections.front().b1 *= zgain;
  sections.front().b2 *= zgain;
  return sections;
}

Signal sos_filter(std::span<const Biquad> sections, std::span<const double> x) {
  return run_cascade(sections, x, std::vector<std::array<double, 2>>(sections.size(), {0.0, 0.0}));
}

Signal butterworth_filter(std::span<const double> signal, double rate_hz, const FilterSpec& spec) {
  if (spec.kind == FilterKind::MovingAverage) {
    if (!spec.window_len) throw Error(ErrorKind::InvalidArgument, "moving average needs window_len");
    return moving_average(signal, *spec.window_len);
  }
  const auto sections = butterworth_design(spec, rate_hz);
  const std::size_t n = signal.size();
  if (n <= static_cast<std::size_t>(3 * spec.order)) {
    throw Error(ErrorKind::SignalTooShort, fmt::format("{} samples for an order-{} filter", n, spec.order));
  }

  const std::size_t poles = sections.size() * 2;
  const std::size_t pad = std::min<std::size_t>(3 * (poles + 1), n - 1);
  Signal ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[i]);
  ext.insert(ext.end(), signal.begin(), signal.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

  const auto zi = step_initial_state(sections);
  auto scaled = [&](double x0) {
    auto s = zi;
    for (auto& z : s) { z[0] *= x0; z[1] *= x0; }
    return s;
  };

  Signal forward = run_cascade(sections, ext, scaled(ext.front()));
  std::reverse(forward.begin(), forward.end());
  Signal backward = run_cascade(sections, forward, scaled(forward.front()));
  std::reverse(backward.begin(), backward.end());
  return Signal(backward.begin() + static_cast<std::ptrdiff_t>(pad),
                backward.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

Signal moving_average(std::span<const double> signal, int window_len) {
  if (window_len < 1) throw Error(ErrorKind::InvalidArgument, "moving average window must be >= 1");
  const auto n = static_cast<std::ptrdiff_t>(signal.size());
  if (window_len > n) {
    throw Error(ErrorKind::WindowTooLong, fmt::format("window {} on {} samples", window_len, n));
  }
  // Window covers [i - left, i + right]; even lengths lean right.
  const std::ptrdiff_t left = (window_len - 1) / 2;
  const std::ptrdiff_t right = window_len - 1 - left;
  std::vector<double> prefix(signal.size() + 1, 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + signal[i];
  Signal out(signal.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto lo = std::max<std::ptrdiff_t>(0, i - left);
    const auto hi = std::min<std::ptrdiff_t>(n - 1, i + right);
    out[i] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
  }
  return out;
}

Signal upsample(std::span<const double> signal, double from_hz, double to_hz) {
  if (!(from_hz > 0.0) || !(to_hz > 0.0)) throw Error(ErrorKind::InvalidArgument, "rates must be positive");
  if (to_hz < from_hz) {
    throw Error(ErrorKind::Downsampling, fmt::format("{} Hz -> {} Hz", from_hz, to_hz));
  }
  if (signal.empty()) throw Error(ErrorKind::SignalTooShort, "cannot upsample an empty signal");
  const auto n = signal.size();
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(n) * to_hz / from_hz));
  Signal out(out_len);
  for (std::size_t j = 0; j < out_len; ++j) {
    const double pos = static_cast<double>(j) * from_hz / to_hz;
    if (n == 1) {
      out[j] = signal[0];
      continue;
    }
    const auto i = std::min(static_cast<std::size_t>(pos), n - 2);
    const double frac = pos - static_cast<double>(i);
    out[j] = signal[i] + frac * (signal[i + 1] - signal[i]);
  }
  return out;
}

Signal zscore(std::span<const double> signal) {
  if (signal.size() < 2) throw Error(ErrorKind::SignalTooShort, "z-score needs at least two samples");
  const double n = static_cast<double>(signal.size());
  const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : signal) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) throw Error(ErrorKind::ZeroVariance, "signal is constant");
  Signal out(signal.size());
  std::transform(signal.begin(), signal.end(), out.begin(), [&](double v) { return (v - mean) / sd; });
  return out;
}

Signal take_tail(std::span<const double> signal, double rate_hz, double seconds) {
  const auto want = static_cast<std::size_t>(std::llround(seconds * rate_hz));
  if (signal.size() < want) {
    throw Error(ErrorKind::RecordingTooShort, fmt::format("{} samples, {} s at {} Hz needs {}", signal.size(), seconds, rate_hz, want));
  }
  return Signal(signal.end() - static_cast<std::ptrdiff_t>(want), signal.end());
}

Signal take_tail_coords(std::span<const double> coords, std::size_t n) {
  if (coords.size() < n) {
    throw Error(ErrorKind::RecordingTooShort, fmt::format("{} coordinates, need {}", coords.size(), n));
  }
  return Signal(coords.end() - static_cast<std::ptrdiff_t>(n), coords.end());
}

WindowedTensor segment(std::span<const double> signal, std::size_t window_samples, double overlap_fraction) {
  if (window_samples < 1) throw Error(ErrorKind::InvalidArgument, "window must hold at least one sample");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "overlap must lie in [0, 1)");
  }
  if (window_samples > signal.size()) {
    throw Error(ErrorKind::WindowLargerThanSignal, fmt::format("window {} > {} samples", window_samples, signal.size()));
  }
  const double hop_real = static_cast<double>(window_samples) * (1.0 - overlap_fraction);
  const double hop_round = std::round(hop_real);
  if (hop_round < 1.0 || std::abs(hop_real - hop_round) > 1e-9) {
    throw Error(ErrorKind::NonIntegerHop, fmt::format("hop {} is not a positive integer", hop_real));
  }
  const auto hop = static_cast<std::size_t>(hop_round);
  const std::size_t rows = (signal.size() - window_samples) / hop + 1;
  WindowedTensor out;
  out.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(window_samples));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < window_samples; ++c) {
      out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = signal[r * hop + c];
    }
  }
  return out;
}

std::size_t ChannelProfile::window_samples() const {
  if (coordinate_stream) return coord_window;
  return static_cast<std::size_t>(std::llround(window_seconds * working_rate_hz()));
}

std::size_t ChannelProfile::expected_timesteps() const {
  const std::size_t len =
      coordinate_stream ? tail_coords : static_cast<std::size_t>(std::llround(tail_seconds * working_rate_hz()));
  const std::size_t window = window_samples();
  const auto hop = static_cast<std::size_t>(std::llround(static_cast<double>(window) * (1.0 - overlap)));
  return len < window || hop == 0 ? 0 : (len - window) / hop + 1;
}

ChannelProfile profile_for(std::string_view channel, double rate_hz) {
  const auto& info = dataio::find_channel(channel);
  if (channel == "GSR") {
    throw Error(ErrorKind::MissingChannel, "GSR is not part of the modelled channel set");
  }
  if (!(rate_hz > 0.0)) throw Error(ErrorKind::InvalidArgument, fmt::format("{} needs a positive rate", channel));

  ChannelProfile p;
  p.channel = std::string(channel);
  p.input_rate_hz = rate_hz;
  if (info.domain == dataio::Domain::Head) {
    p.coordinate_stream = true;
    return p;
  }
  if (channel == "EDA") {
    if (rate_hz < 64.0) p.upsample_to_hz = 64.0;
    p.filter = FilterSpec::low_pass(0.5);
  } else if (channel == "TEMP") {
    if (rate_hz < 64.0) p.upsample_to_hz = 64.0;
    p.filter = FilterSpec::moving_average(static_cast<int>(std::llround(p.working_rate_hz())));
  } else if (channel == "BVP") {
    p.filter = FilterSpec::band_pass(0.5, 4.0);
  } else if (channel == "ECG1" || channel == "ECG2") {
    p.filter = FilterSpec::band_pass(0.5, 45.0);
  } else {
    // Wrist and vest accelerometers.
    p.filter = FilterSpec::band_pass(0.5, 20.0);
  }
  return p;
}

WindowedTensor preprocess_channel(const dataio::RawRecording& rec, const ChannelProfile& profile) {
  if (rec.channel != profile.channel) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("recording is {}, profile is {}", rec.channel, profile.channel));
  }
  Signal x = rec.values();
  WindowedTensor out;
  if (profile.coordinate_stream) {
    x = zscore(x);
    x = take_tail_coords(x, profile.tail_coords);
    out = segment(x, profile.coord_window, profile.overlap);
  } else {
    double rate = profile.input_rate_hz;
    if (profile.upsample_to_hz) {
      x = upsample(x, rate, *profile.upsample_to_hz);
      rate = *profile.upsample_to_hz;
    }
    if (profile.filter) x = butterworth_filter(x, rate, *profile.filter);
    x = zscore(x);
    x = take_tail(x, rate, profile.tail_seconds);
    out = segment(x, profile.window_samples(), profile.overlap);
  }
  out.participant_id = rec.participant_id;
  out.video_id = rec.video_id;
  out.channel = rec.channel;
  if (!out.values.allFinite()) {
    throw Error(ErrorKind::NonFiniteActivation, fmt::format("{} produced non-finite values", rec.channel));
  }
  return out;
}

static_assert(std::endian::native == std::endian::little, "tensor cache assumes a little-endian host");

void write_tensor(const std::filesystem::path& path, const Eigen::MatrixXd& values) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, fmt::format("cannot write {}", path.string()));
  const auto rows = static_cast<std::uint32_t>(values.rows());
  const auto cols = static_cast<std::uint32_t>(values.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = values;
  out.write(reinterpret_cast<const char*>(row_major.data()),
            static_cast<std::streamsize>(sizeof(double) * row_major.size()));
}

Eigen::MatrixXd read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major(rows, cols);
  in.read(reinterpret_cast<char*>(row_major.data()), static_cast<std::streamsize>(sizeof(double) * row_major.size()));
  if (!in) throw Error(ErrorKind::ParseError, fmt::format("{} is truncated", path.string()));
  return row_major;
}

}  // namespace emomsase::preprocess
