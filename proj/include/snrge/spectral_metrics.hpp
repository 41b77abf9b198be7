#pragma once

#include <span>
#include <vector>

#include "snrge/audio.hpp"
#include "snrge/dsp.hpp"
#include "snrge/label.hpp"

namespace snrge {

enum class SpectralMethod { kFrequency, kPixels };

/// Average whistle and noise magnitude spectra at one transform size.
struct SpectrumReferences {
  FrequencySpectrum whistle;
  FrequencySpectrum noise;
  std::size_t fft_size = 32768;
};

/// Average whistle and noise pixel-intensity distributions under one STFT
/// configuration.
struct PidReferences {
  PixelIntensityDistribution whistle;
  PixelIntensityDistribution noise;
  StftConfig stft;
};

/// Binary score with the two correlations it was derived from.
struct SampleScore {
  int score = 0;
  double c_whistle = 0.0;
  double c_noise = 0.0;
};

struct SnrScore {
  SnrLabel snr;
  double mean_score = 0.0;
  std::size_t n_samples = 0;
  std::vector<SampleScore> samples;
};

SpectrumReferences build_spectrum_references(std::span<const AudioClip> whistles,
                                             std::span<const AudioClip> noise,
                                             std::size_t fft_size = 32768);
PidReferences build_pid_references(std::span<const AudioClip> whistles,
                                   std::span<const AudioClip> noise,
                                   const StftConfig& stft = {});

/// 1 when c_whistle >= c_noise. Ties go to the whistle.
constexpr int score_from_correlations(double c_whistle, double c_noise) {
  return c_whistle >= c_noise ? 1 : 0;
}

SampleScore score_spectrum(const FrequencySpectrum& sample, const SpectrumReferences& refs);
SampleScore score_pid(const PixelIntensityDistribution& sample, const PidReferences& refs);

SampleScore score_sample_frequency(const AudioClip& sample, const SpectrumReferences& refs);
SampleScore score_sample_pixels(const AudioClip& sample, const PidReferences& refs);

/// Mean of per-sample binary scores; samples are scored in parallel and
/// summed in input order.
SnrScore evaluate_snr_level(std::span<const AudioClip> samples, const SpectrumReferences& refs,
                            const SnrLabel& level = SnrLabel::noise());
SnrScore evaluate_snr_level(std::span<const AudioClip> samples, const PidReferences& refs,
                            const SnrLabel& level = SnrLabel::noise());

/// Mean of already computed scores.
double mean_score(std::span<const SampleScore> scores);

}  // namespace snrge
