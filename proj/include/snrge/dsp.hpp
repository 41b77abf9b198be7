#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "snrge/audio.hpp"

namespace snrge {

/// Magnitudes of bins 0..n/2 of a real-input DFT.
struct FrequencySpectrum {
  std::vector<double> magnitudes;
  double bin_width = 0.0;  // Hz
};

/// 8-bit greyscale time-frequency image. Row r is frequency bin r, column c
/// is frame c; pixels are stored row-major.
struct GreySpectrogram {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;
  std::size_t window = 0;
  std::size_t hop = 0;
  double floor_db = -80.0;

  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
};

/// Normalized 256-bin histogram of pixel intensities.
struct PixelIntensityDistribution {
  std::array<double, 256> weights{};
};

struct StftConfig {
  std::size_t window = 1024;
  std::size_t hop = 256;
  double floor_db = -80.0;
};

bool is_power_of_two(std::size_t n) noexcept;

/// In-place iterative radix-2 FFT. The inverse is unscaled, so a forward
/// then inverse pass multiplies by data.size().
void fft_inplace(std::span<std::complex<double>> data, bool inverse = false);

/// Clip truncated or zero-padded to n samples, rectangular window.
FrequencySpectrum fft_magnitude(const AudioClip& clip, std::size_t n);

FrequencySpectrum average_spectrum(std::span<const AudioClip> clips, std::size_t n);

/// Product-moment correlation. Throws NumericError when either input has
/// zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Hann-windowed STFT magnitudes in dB relative to the image maximum,
/// floored at cfg.floor_db and mapped linearly onto 0..255.
GreySpectrogram stft_spectrogram(const AudioClip& clip, const StftConfig& cfg = {});

PixelIntensityDistribution pixel_intensity_distribution(const GreySpectrogram& img);

PixelIntensityDistribution average_pid(std::span<const PixelIntensityDistribution> pids);

/// Bilinear resize with half-pixel sample centers; result rounded to 8 bits.
GreySpectrogram resize_bilinear(const GreySpectrogram& img, std::size_t rows,
                                std::size_t cols);

/// Binary PGM (P5). Row 0 (lowest frequency) is written last so the image
/// reads with frequency increasing upward.
void write_pgm(const std::filesystem::path& path, const GreySpectrogram& img);

}  // namespace snrge
