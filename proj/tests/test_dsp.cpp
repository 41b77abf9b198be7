#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "snrge/dsp.hpp"
#include "test_util.hpp"

using namespace snrge;
using testutil::TempDir;

namespace {

// O(n^2) reference transform.
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t t = 0; t < n; ++t) {
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t % n) / double(n));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("fft matches a direct DFT and inverts") {
  Rng rng(1);
  for (std::size_t n : {1u, 2u, 4u, 16u, 128u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    auto y = x;
    fft_inplace(y);
    const auto ref = naive_dft(x);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(y[k] - ref[k]) <= 1e-9 * (1 + std::abs(ref[k])));
    fft_inplace(y, true);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(y[k] / double(n) - x[k]) <= 1e-12);
  }
  std::vector<std::complex<double>> bad(12);
  CHECK_THROWS_AS(fft_inplace(bad), UsageError);
}

TEST_CASE("fft_magnitude") {
  // Bin-center sine with an integer number of periods.
  const std::size_t n = 1024;
  const AudioClip s = testutil::sine(32000.0 * 64 / n, 1.0, n, 32000);
  const FrequencySpectrum spec = fft_magnitude(s, n);
  CHECK(spec.magnitudes.size() == n / 2 + 1);
  CHECK(spec.bin_width == doctest::Approx(32000.0 / n));
  const auto peak = std::max_element(spec.magnitudes.begin(), spec.magnitudes.end());
  CHECK(peak - spec.magnitudes.begin() == 64);
  for (std::size_t k = 0; k < spec.magnitudes.size(); ++k) {
    if (k != 64) CHECK(spec.magnitudes[k] <= 0.01 * *peak);
  }

  AudioClip zero;
  zero.sample_rate = 32000;
  zero.samples.assign(500, 0.0);
  for (double m : fft_magnitude(zero, 1024).magnitudes) CHECK(m == 0.0);  // zero-padded
  CHECK_THROWS_AS(fft_magnitude(zero, 1000), UsageError);
}

TEST_CASE("Parseval identity") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const AudioClip c = testutil::random_clip(4096, seed);
    std::vector<std::complex<double>> x(c.samples.begin(), c.samples.end());
    double et = 0.0;
    for (double v : c.samples) et += v * v;
    fft_inplace(x);
    double ef = 0.0;
    for (const auto& v : x) ef += std::norm(v);
    CHECK(std::abs(ef / 4096 - et) / et <= 1e-9);
  }
}

TEST_CASE("fft triangle inequality per bin") {
  const AudioClip a = testutil::random_clip(256, 3), b = testutil::random_clip(256, 4);
  AudioClip sum = a;
  for (std::size_t i = 0; i < sum.size(); ++i) sum.samples[i] += b.samples[i];
  const auto sa = fft_magnitude(a, 256), sb = fft_magnitude(b, 256), ss = fft_magnitude(sum, 256);
  for (std::size_t k = 0; k < ss.magnitudes.size(); ++k) {
    CHECK(ss.magnitudes[k] <= sa.magnitudes[k] + sb.magnitudes[k] + 1e-12);
  }
}

TEST_CASE("average_spectrum") {
  const AudioClip a = testutil::random_clip(512, 5), b = testutil::random_clip(512, 6);
  const auto one = fft_magnitude(a, 512);
  const std::vector<AudioClip> same{a, a, a};
  const auto avg_same = average_spectrum(same, 512);
  for (std::size_t k = 0; k < one.magnitudes.size(); ++k) {
    CHECK(avg_same.magnitudes[k] == doctest::Approx(one.magnitudes[k]).epsilon(1e-14));
  }
  const auto two = average_spectrum(std::vector<AudioClip>{a, b}, 512);
  const auto rev = average_spectrum(std::vector<AudioClip>{b, a}, 512);
  const auto sb = fft_magnitude(b, 512);
  for (std::size_t k = 0; k < two.magnitudes.size(); ++k) {
    CHECK(std::abs(two.magnitudes[k] - (one.magnitudes[k] + sb.magnitudes[k]) / 2) <= 1e-12);
    CHECK(two.magnitudes[k] == rev.magnitudes[k]);
  }
  CHECK_THROWS_AS(average_spectrum(std::vector<AudioClip>{}, 512), UsageError);
}

TEST_CASE("pearson") {
  const std::vector<double> x{1, 2, 3};
  CHECK(pearson(x, std::vector<double>{2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(x, std::vector<double>{3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(std::abs(pearson(x, std::vector<double>{1, 1, 2}) - 0.86603) <= 1e-5);
  CHECK_THROWS_AS(pearson(x, std::vector<double>{5, 5, 5}), NumericError);
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), UsageError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), UsageError);

  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(50), b(50);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    CHECK(pearson(a, b) == pearson(b, a));
    const double p = rng.uniform(0.1, 10), q = rng.normal();
    std::vector<double> pos(50), neg(50);
    for (std::size_t i = 0; i < 50; ++i) {
      pos[i] = p * a[i] + q;
      neg[i] = -p * a[i] + q;
    }
    CHECK(std::abs(pearson(a, pos) - 1.0) <= 1e-12);
    CHECK(std::abs(pearson(a, neg) + 1.0) <= 1e-12);
  }
}

TEST_CASE("stft_spectrogram shape, anchor and floor") {
  const AudioClip c = testutil::random_clip(32000, 9);
  const GreySpectrogram img = stft_spectrogram(c);
  CHECK(img.cols == 122);
  CHECK(img.rows == 513);
  CHECK(img.pixels.size() == 122 * 513);
  CHECK(*std::max_element(img.pixels.begin(), img.pixels.end()) == 255);
  CHECK(stft_spectrogram(c).pixels == img.pixels);

  AudioClip zero;
  zero.sample_rate = 32000;
  zero.samples.assign(4096, 0.0);
  const GreySpectrogram z = stft_spectrogram(zero);
  CHECK(std::all_of(z.pixels.begin(), z.pixels.end(), [](auto p) { return p == 0; }));

  AudioClip short_clip = zero;
  short_clip.samples.resize(1000);
  CHECK_THROWS_AS(stft_spectrogram(short_clip), DataError);
  CHECK_THROWS_AS(stft_spectrogram(c, StftConfig{1000, 256, -80}), UsageError);
  CHECK_THROWS_AS(stft_spectrogram(c, StftConfig{1024, 2048, -80}), UsageError);
}

TEST_CASE("stft pixels follow the dB mapping") {
  // A pure tone at a bin center: the peak cell is 255, cells 40 dB down map
  // to (40/80)*255 = 127.5.
  const AudioClip s = testutil::sine(32000.0 * 100 / 1024, 1.0, 4096, 32000);
  const GreySpectrogram img = stft_spectrogram(s);
  CHECK(img.at(100, 0) == 255);
  // Hann sidelobe at +/-1 bin is -6.02 dB: (80 - 6.02)/80*255 = 235.8
  CHECK(std::abs(int(img.at(101, 0)) - 236) <= 1);
}

TEST_CASE("pixel_intensity_distribution") {
  GreySpectrogram img;
  img.rows = 4;
  img.cols = 4;
  img.pixels.assign(16, 0);
  auto pid = pixel_intensity_distribution(img);
  CHECK(pid.weights[0] == 1.0);
  std::fill(img.pixels.begin() + 8, img.pixels.end(), 255);
  pid = pixel_intensity_distribution(img);
  CHECK(pid.weights[0] == 0.5);
  CHECK(pid.weights[255] == 0.5);

  Rng rng(10);
  for (int t = 0; t < 10; ++t) {
    img.rows = 7 + t;
    img.cols = 13;
    img.pixels.resize(img.rows * img.cols);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    pid = pixel_intensity_distribution(img);
    double total = 0.0;
    for (int v = 0; v < 256; ++v) {
      const double expect = double(std::count(img.pixels.begin(), img.pixels.end(), v)) / img.pixels.size();
      CHECK(std::abs(pid.weights[v] - expect) <= 1e-12);
      total += pid.weights[v];
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
  GreySpectrogram empty;
  CHECK_THROWS_AS(pixel_intensity_distribution(empty), UsageError);
}

TEST_CASE("resize_bilinear") {
  GreySpectrogram img;
  img.rows = 2;
  img.cols = 2;
  img.pixels = {0, 100, 100, 200};
  const GreySpectrogram same = resize_bilinear(img, 2, 2);
  CHECK(same.pixels == img.pixels);
  const GreySpectrogram up = resize_bilinear(img, 4, 4);
  CHECK(up.rows == 4);
  CHECK(up.cols == 4);
  CHECK(up.at(0, 0) == 0);
  CHECK(up.at(3, 3) == 200);
  CHECK(up.at(1, 1) == 50);  // quarter of the way along both axes
  GreySpectrogram flat;
  flat.rows = 5;
  flat.cols = 9;
  flat.pixels.assign(45, 77);
  const GreySpectrogram down = resize_bilinear(flat, 3, 2);
  CHECK(std::all_of(down.pixels.begin(), down.pixels.end(), [](auto p) { return p == 77; }));
}

TEST_CASE("write_pgm") {
  TempDir dir("pgm");
  GreySpectrogram img;
  img.rows = 2;
  img.cols = 3;
  img.pixels = {1, 2, 3, 4, 5, 6};
  write_pgm(dir / "x.pgm", img);
  std::ifstream f(dir / "x.pgm", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(bytes.rfind("P5", 0) == 0);
  // Highest frequency row first.
  CHECK(bytes.substr(bytes.size() - 6) == std::string("\x04\x05\x06\x01\x02\x03", 6));
}
