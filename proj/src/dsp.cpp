#include "snrge/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

namespace snrge {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::span<std::complex<double>> data, bool inverse) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) throw UsageError("FFT size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    // Twiddles computed directly per index; repeated multiplication drifts.
    std::vector<std::complex<double>> tw(half);
    for (std::size_t k = 0; k < half; ++k) {
      tw[k] = std::polar(1.0, angle * static_cast<double>(k));
    }
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const std::complex<double> u = data[start + k];
        const std::complex<double> v = data[start + k + half] * tw[k];
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }
}

FrequencySpectrum fft_magnitude(const AudioClip& clip, std::size_t n) {
  if (!is_power_of_two(n)) throw UsageError("transform size must be a power of two");
  std::vector<std::complex<double>> buf(n);
  const std::size_t m = std::min(n, clip.size());
  for (std::size_t i = 0; i < m; ++i) buf[i] = clip.samples[i];
  fft_inplace(buf);
  FrequencySpectrum spec;
  spec.magnitudes.resize(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) spec.magnitudes[k] = std::abs(buf[k]);
  spec.bin_width = clip.sample_rate > 0
                       ? static_cast<double>(clip.sample_rate) / static_cast<double>(n)
                       : 0.0;
  return spec;
}

FrequencySpectrum average_spectrum(std::span<const AudioClip> clips, std::size_t n) {
  if (clips.empty()) throw UsageError("average_spectrum of empty clip set");
  FrequencySpectrum acc = fft_magnitude(clips[0], n);
  for (std::size_t i = 1; i < clips.size(); ++i) {
    const FrequencySpectrum s = fft_magnitude(clips[i], n);
    for (std::size_t k = 0; k < s.magnitudes.size(); ++k) acc.magnitudes[k] += s.magnitudes[k];
  }
  const double inv = 1.0 / static_cast<double>(clips.size());
  for (double& v : acc.magnitudes) v *= inv;
  return acc;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("pearson: length mismatch");
  if (a.size() < 2) throw UsageError("pearson: need at least two values");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw NumericError("pearson: undefined correlation (constant sequence)");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

GreySpectrogram stft_spectrogram(const AudioClip& clip, const StftConfig& cfg) {
  if (!is_power_of_two(cfg.window)) throw UsageError("STFT window must be a power of two");
  if (cfg.hop == 0 || cfg.hop > cfg.window) throw UsageError("STFT hop must be in [1, window]");
  if (clip.size() < cfg.window) throw DataError("clip shorter than one STFT window");
  if (!(cfg.floor_db < 0.0)) throw UsageError("STFT floor must be negative dB");

  const std::size_t frames = (clip.size() - cfg.window) / cfg.hop + 1;
  const std::size_t bins = cfg.window / 2 + 1;
  std::vector<double> hann(cfg.window);
  for (std::size_t i = 0; i < cfg.window; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                   static_cast<double>(cfg.window));
  }

  std::vector<double> mag(bins * frames);
  std::vector<std::complex<double>> buf(cfg.window);
  double peak = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t off = f * cfg.hop;
    for (std::size_t i = 0; i < cfg.window; ++i) buf[i] = clip.samples[off + i] * hann[i];
    fft_inplace(buf);
    for (std::size_t k = 0; k < bins; ++k) {
      const double m = std::abs(buf[k]);
      mag[k * frames + f] = m;
      peak = std::max(peak, m);
    }
  }

  GreySpectrogram img;
  img.rows = bins;
  img.cols = frames;
  img.window = cfg.window;
  img.hop = cfg.hop;
  img.floor_db = cfg.floor_db;
  img.pixels.assign(bins * frames, 0);
  if (peak == 0.0) return img;
  const double span = -cfg.floor_db;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    if (mag[i] <= 0.0) continue;
    const double db = std::max(cfg.floor_db, 20.0 * std::log10(mag[i] / peak));
    img.pixels[i] = static_cast<std::uint8_t>(std::lround((db + span) / span * 255.0));
  }
  return img;
}

PixelIntensityDistribution pixel_intensity_distribution(const GreySpectrogram& img) {
  if (img.pixels.empty()) throw UsageError("pixel distribution of empty image");
  std::array<std::size_t, 256> counts{};
  for (std::uint8_t p : img.pixels) ++counts[p];
  PixelIntensityDistribution pid;
  const double total = static_cast<double>(img.pixels.size());
  for (std::size_t i = 0; i < 256; ++i) pid.weights[i] = static_cast<double>(counts[i]) / total;
  return pid;
}

PixelIntensityDistribution average_pid(std::span<const PixelIntensityDistribution> pids) {
  if (pids.empty()) throw UsageError("average of empty PID set");
  PixelIntensityDistribution acc;
  for (const auto& p : pids) {
    for (std::size_t i = 0; i < 256; ++i) acc.weights[i] += p.weights[i];
  }
  for (double& w : acc.weights) w /= static_cast<double>(pids.size());
  return acc;
}

GreySpectrogram resize_bilinear(const GreySpectrogram& img, std::size_t rows,
                                std::size_t cols) {
  if (img.pixels.empty() || rows == 0 || cols == 0) throw UsageError("resize of empty image");
  GreySpectrogram out = img;
  out.rows = rows;
  out.cols = cols;
  out.pixels.assign(rows * cols, 0);
  const double sy = static_cast<double>(img.rows) / static_cast<double>(rows);
  const double sx = static_cast<double>(img.cols) / static_cast<double>(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0,
                                static_cast<double>(img.rows - 1));
    const auto y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, img.rows - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0,
                                  static_cast<double>(img.cols - 1));
      const auto x0 = static_cast<std::size_t>(x);
      const std::size_t x1 = std::min(x0 + 1, img.cols - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = img.at(y0, x0) * (1.0 - fx) + img.at(y0, x1) * fx;
      const double bot = img.at(y1, x0) * (1.0 - fx) + img.at(y1, x1) * fx;
      out.pixels[r * cols + c] =
          static_cast<std::uint8_t>(std::lround(top * (1.0 - fy) + bot * fy));
    }
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const GreySpectrogram& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write PGM: " + path.string());
  f << "P5\n" << img.cols << " " << img.rows << "\n255\n";
  for (std::size_t r = img.rows; r-- > 0;) {
    f.write(reinterpret_cast<const char*>(img.pixels.data() + r * img.cols),
            static_cast<std::streamsize>(img.cols));
  }
  if (!f) throw DataError("PGM write failed: " + path.string());
}

}  // namespace snrge
