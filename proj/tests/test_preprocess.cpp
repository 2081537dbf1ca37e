#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "emomsase/dataio.hpp"
#include "emomsase/error.hpp"
#include "emomsase/preprocess.hpp"
#include "support.hpp"

using namespace emomsase;
using namespace emomsase::preprocess;

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

Signal sine(double freq, double rate, std::size_t n, double amp = 1.0) {
  Signal x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / rate);
  return x;
}

/// Peak absolute value over the middle half, away from the edges.
double mid_amplitude(const Signal& y) {
  double peak = 0.0;
  for (std::size_t i = y.size() / 4; i < 3 * y.size() / 4; ++i) peak = std::max(peak, std::abs(y[i]));
  return peak;
}

Signal reference_input() {
  Signal x(256);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i);
    x[i] = std::sin(0.3 * t) + 0.5 * std::cos(2.1 * t) + 0.01 * t;
  }
  return x;
}

Signal impulse_response(const FilterSpec& spec, double rate, std::size_t n) {
  Signal imp(n, 0.0);
  imp[0] = 1.0;
  const auto sos = butterworth_design(spec, rate);
  return sos_filter(sos, imp);
}

dataio::RawRecording recording(std::string channel, double rate, std::size_t n, std::uint64_t seed = 1) {
  dataio::RawRecording rec;
  rec.participant_id = "P01";
  rec.video_id = "V01";
  rec.channel = std::move(channel);
  rec.domain = dataio::find_channel(rec.channel).domain;
  rec.sample_rate_hz = rate;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    rec.samples.push_back({std::llround(static_cast<double>(i) * 1000.0 / rate), noise(rng)});
  }
  return rec;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("band-pass impulse response matches the reference design") {
  // First taps of the 4th-order 0.5-20 Hz band-pass at 64 Hz from an independent design.
  const double expected[] = {0.1756629354445369,    0.5131986473455172,  0.3174257228193954,  -0.2815911202370472,
                             -0.2466971675146114,   0.043798645212017706, -0.09150800775639967, -0.15478781857135654,
                             -0.037239258407412976, -0.059561342357662854, -0.09205448390289787, -0.050876038090159954};
  const auto h = impulse_response(FilterSpec::band_pass(0.5, 20.0), 64.0, 12);
  for (std::size_t i = 0; i < 12; ++i) CHECK(h[i] == doctest::Approx(expected[i]).epsilon(1e-9));
  CHECK(butterworth_design(FilterSpec::band_pass(0.5, 20.0), 64.0).size() == 4);
}

TEST_CASE("low-pass and ECG band-pass impulse responses match the reference designs") {
  const double low[] = {3.4060529790302735e-07, 2.681154550780099e-06,  1.0509002646711826e-05, 2.8210193048264778e-05,
                        5.990330377247717e-05,  0.00010909568550221574, 0.00017872523088009542, 0.00027120048180515245};
  const auto hl = impulse_response(FilterSpec::low_pass(0.5), 64.0, 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(hl[i] == doctest::Approx(low[i]).epsilon(1e-8));
  CHECK(butterworth_design(FilterSpec::low_pass(0.5), 64.0).size() == 2);

  const double ecg[] = {0.02983797227390115, 0.15379906258493597,  0.3285887687840945,  0.3632661854718873,
                        0.1847014900332533,  -0.04042531136340094, -0.1364439862525942, -0.09695954272553556};
  const auto he = impulse_response(FilterSpec::band_pass(0.5, 45.0), 256.0, 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(he[i] == doctest::Approx(ecg[i]).epsilon(1e-9));
}

TEST_CASE("zero-phase filtering matches the reference forward-backward filter") {
  const auto x = reference_input();
  struct Case {
    FilterSpec spec;
    double rate;
    double expected[4];
  };
  const Case cases[] = {
      {FilterSpec::band_pass(0.5, 20.0), 64.0, {0.1858846326343353, 0.5957362861314663, 0.6327786786350148, 0.1305187345838532}},
      {FilterSpec::low_pass(0.5), 64.0, {0.6250265578904657, 0.41265728651723077, 1.3005711840927272, 2.1706543802513942}},
      {FilterSpec::band_pass(0.5, 45.0), 256.0, {0.37408778666091946, 0.7333672348495309, 0.9502278659258465, -0.12208370531278792}},
  };
  for (const auto& c : cases) {
    const auto y = butterworth_filter(x, c.rate, c.spec);
    REQUIRE(y.size() == x.size());
    const std::size_t at[] = {0, 50, 128, 255};
    for (int k = 0; k < 4; ++k) CHECK(y[at[k]] == doctest::Approx(c.expected[k]).epsilon(1e-8));
  }
}

TEST_CASE("a constant signal is removed by the band-pass") {
  const Signal x(2000, 3.0);
  const auto y = butterworth_filter(x, 64.0, FilterSpec::band_pass(0.5, 20.0));
  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::abs(v));
  CHECK(peak < 1e-6 * 3.0);
}

TEST_CASE("a 10 Hz tone passes the 0.5-20 Hz band-pass and a 30 Hz tone does not") {
  const auto pass = butterworth_filter(sine(10.0, 64.0, 64 * 60), 64.0, FilterSpec::band_pass(0.5, 20.0));
  // Forward-backward gain |H(10 Hz)|^2 of the reference design is 0.99996.
  CHECK(mid_amplitude(pass) == doctest::Approx(0.99996).epsilon(2e-3));
  CHECK(std::abs(mid_amplitude(pass) - 1.0) < 0.05);
  const auto stop = butterworth_filter(sine(30.0, 64.0, 64 * 60), 64.0, FilterSpec::band_pass(0.5, 20.0));
  CHECK(mid_amplitude(stop) < 0.3);
  CHECK(mid_amplitude(stop) < 1e-3);
}

TEST_CASE("filtering is linear and keeps the length") {
  const auto x = reference_input();
  const auto y = butterworth_filter(x, 64.0, FilterSpec::band_pass(0.5, 20.0));
  Signal scaled(x);
  for (auto& v : scaled) v *= -2.5;
  const auto ys = butterworth_filter(scaled, 64.0, FilterSpec::band_pass(0.5, 20.0));
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(ys[i] == doctest::Approx(-2.5 * y[i]).epsilon(1e-9));
}

TEST_CASE("filter preconditions") {
  const Signal x(500, 1.0);
  CHECK(kind_of([&] { butterworth_filter(x, 64.0, FilterSpec::band_pass(0.5, 40.0)); }) == ErrorKind::CutoffOutOfRange);
  CHECK(kind_of([&] { butterworth_filter(x, 64.0, FilterSpec::band_pass(5.0, 2.0)); }) == ErrorKind::CutoffOutOfRange);
  CHECK(kind_of([&] { butterworth_filter(x, 64.0, FilterSpec::low_pass(0.0)); }) == ErrorKind::CutoffOutOfRange);
  const Signal shorty(12, 1.0);
  CHECK(kind_of([&] { butterworth_filter(shorty, 64.0, FilterSpec::band_pass(0.5, 20.0)); }) ==
        ErrorKind::SignalTooShort);
  const Signal ok(13, 1.0);
  CHECK(butterworth_filter(ok, 64.0, FilterSpec::low_pass(5.0)).size() == 13);
}

TEST_CASE("moving average with truncated edges") {
  CHECK(moving_average(Signal{1, 1, 1, 1}, 3) == Signal{1, 1, 1, 1});
  const auto y = moving_average(Signal{0, 3, 0}, 3);
  REQUIRE(y.size() == 3);
  CHECK(y[0] == doctest::Approx(1.5));
  CHECK(y[1] == doctest::Approx(1.0));
  CHECK(y[2] == doctest::Approx(1.5));
  CHECK(kind_of([] { moving_average(Signal{1, 2, 3, 4}, 5); }) == ErrorKind::WindowTooLong);
  CHECK(moving_average(Signal(100, 2.5), 64) == Signal(100, 2.5));
  const Signal x{1, 2, 3};
  CHECK(butterworth_filter(x, 64.0, FilterSpec::moving_average(1)) == x);
}

TEST_CASE("upsampling interpolates linearly") {
  const auto y = upsample(Signal{0, 16}, 4.0, 64.0);
  REQUIRE(y.size() == 32);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(static_cast<double>(i)));
  const Signal x{1.5, -2, 7, 0.25};
  CHECK(upsample(x, 4.0, 4.0) == x);
  const auto c = upsample(Signal(10, 3.0), 4.0, 10.0);
  CHECK(c.size() == 25);
  for (double v : c) CHECK(v == doctest::Approx(3.0));
  const auto g = upsample(x, 4.0, 64.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(g[16 * i] == x[i]);
  CHECK(kind_of([] { upsample(Signal{1, 2}, 64.0, 4.0); }) == ErrorKind::Downsampling);
}

TEST_CASE("z-score normalization") {
  const auto y = zscore(Signal{1, 3});
  CHECK(y[0] == doctest::Approx(-1.0));
  CHECK(y[1] == doctest::Approx(1.0));
  CHECK(kind_of([] { zscore(Signal{5, 5, 5}); }) == ErrorKind::ZeroVariance);

  const auto x = reference_input();
  Signal affine(x);
  for (auto& v : affine) v = 3.5 * v - 12.0;
  const auto zx = zscore(x);
  const auto za = zscore(affine);
  const auto zz = zscore(zx);
  double mean = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(za[i] == doctest::Approx(zx[i]).epsilon(1e-9));
    CHECK(std::abs(zz[i] - zx[i]) < 1e-9);
    mean += zx[i];
  }
  mean /= static_cast<double>(x.size());
  for (double v : zx) sq += (v - mean) * (v - mean);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::sqrt(sq / static_cast<double>(x.size())) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("tail extraction") {
  CHECK(take_tail(Signal(60 * 64, 0.0), 64.0).size() == 2560);
  CHECK(take_tail(Signal(60 * 256, 0.0), 256.0).size() == 10240);
  CHECK(kind_of([] { take_tail(Signal(30 * 64, 0.0), 64.0); }) == ErrorKind::RecordingTooShort);
  Signal coords(5000);
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<double>(i);
  const auto last = take_tail_coords(coords);
  REQUIRE(last.size() == 2000);
  CHECK(last.front() == 3000.0);
  CHECK(last.back() == 4999.0);
  const Signal exact(2000, 1.0);
  CHECK(take_tail_coords(exact) == exact);
  CHECK(kind_of([] { take_tail_coords(Signal(1999, 0.0)); }) == ErrorKind::RecordingTooShort);
}

TEST_CASE("segmentation shapes") {
  auto t = segment(Signal(2560, 0.0), 128);
  CHECK(t.timesteps() == 39);
  CHECK(t.features() == 128);
  t = segment(Signal(10240, 0.0), 512);
  CHECK(t.timesteps() == 39);
  CHECK(t.features() == 512);
  t = segment(Signal(2000, 0.0), 200);
  CHECK(t.timesteps() == 19);
  CHECK(t.features() == 200);
  t = segment(Signal(2599, 0.0), 128);
  CHECK(t.timesteps() == 39);
  CHECK(kind_of([] { segment(Signal(100, 0.0), 128); }) == ErrorKind::WindowLargerThanSignal);
  CHECK(kind_of([] { segment(Signal(100, 0.0), 5, 0.5); }) == ErrorKind::NonIntegerHop);
}

TEST_CASE("even rows of a half-overlap segmentation rebuild the signal prefix") {
  Signal x(2560);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.01 * static_cast<double>(i * i));
  const auto t = segment(x, 128);
  for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.values.cols(); ++c) CHECK(t.values(r, c) == x[static_cast<std::size_t>(r * 64 + c)]);
  }
  Signal rebuilt;
  for (Eigen::Index r = 0; r < t.values.rows(); r += 2) {
    for (Eigen::Index c = 0; c < t.values.cols(); ++c) rebuilt.push_back(t.values(r, c));
  }
  CHECK(std::equal(rebuilt.begin(), rebuilt.end(), x.begin()));
}

TEST_CASE("channel chains produce the expected tensor shapes") {
  auto eda = preprocess_channel(recording("EDA", 4.0, 240 * 4), profile_for("EDA", 4.0));
  CHECK(eda.timesteps() == 39);
  CHECK(eda.features() == 128);
  auto ecg = preprocess_channel(recording("ECG1", 256.0, 300 * 256), profile_for("ECG1", 256.0));
  CHECK(ecg.timesteps() == 39);
  CHECK(ecg.features() == 512);
  auto eye = preprocess_channel(recording("L_EP_Y", 50.0, 2500), profile_for("L_EP_Y", 50.0));
  CHECK(eye.timesteps() == 19);
  CHECK(eye.features() == 200);
  CHECK(eye.channel == "L_EP_Y");
  CHECK(eye.participant_id == "P01");

  for (const auto* ch : {"ACC_X", "ACC_Y", "ACC_Z", "BVP", "TEMP"}) {
    const double rate = std::string_view(ch) == "TEMP" ? 4.0 : 64.0;
    const auto p = profile_for(ch, rate);
    const auto t = preprocess_channel(recording(ch, rate, static_cast<std::size_t>(60 * rate)), p);
    CHECK(t.timesteps() == 39);
    CHECK(t.features() == 128);
    CHECK(p.expected_timesteps() == 39);
  }
  for (const auto* ch : {"ECG2", "LAT_ACC", "LONG_ACC", "VERT_ACC"}) {
    const auto t = preprocess_channel(recording(ch, 256.0, 60 * 256), profile_for(ch, 256.0));
    CHECK(t.timesteps() == 39);
    CHECK(t.features() == 512);
  }
  CHECK(kind_of([] { profile_for("GSR", 256.0); }) == ErrorKind::MissingChannel);
}

TEST_CASE("channel profiles carry the filter for each sensor") {
  CHECK(profile_for("ACC_Z", 64.0).filter->high_hz == 20.0);
  CHECK(profile_for("LAT_ACC", 256.0).filter->low_hz == 0.5);
  CHECK(profile_for("ECG1", 256.0).filter->high_hz == 45.0);
  CHECK(profile_for("BVP", 64.0).filter->high_hz == 4.0);
  const auto eda = profile_for("EDA", 4.0);
  CHECK(eda.filter->kind == FilterKind::LowPass);
  CHECK(eda.upsample_to_hz == 64.0);
  const auto temp = profile_for("TEMP", 4.0);
  CHECK(temp.filter->kind == FilterKind::MovingAverage);
  CHECK(temp.filter->window_len == 64);
  CHECK(profile_for("R_EP_Z", 50.0).coordinate_stream);
  CHECK_FALSE(profile_for("R_EP_Z", 50.0).filter.has_value());
}

TEST_CASE("tensor cache files round trip") {
  testing::TempDir dir("tensor");
  Eigen::MatrixXd m(3, 4);
  m << 1, 2, 3, 4, -1.5, 0.25, 1e-300, 7, 8, 9, 10, 11;
  write_tensor(dir / "t.bin", m);
  CHECK(std::filesystem::file_size(dir / "t.bin") == 8 + 3 * 4 * 8);
  CHECK(read_tensor(dir / "t.bin") == m);
  const auto bytes = testing::read_text(dir / "t.bin");
  CHECK(static_cast<unsigned char>(bytes[0]) == 3);
  CHECK(static_cast<unsigned char>(bytes[4]) == 4);
}

}  // TEST_SUITE
