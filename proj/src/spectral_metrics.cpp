#include "snrge/spectral_metrics.hpp"

#include "snrge/parallel.hpp"

namespace snrge {
namespace {

template <class Score>
SnrScore aggregate(std::span<const AudioClip> samples, const SnrLabel& level, Score&& score) {
  if (samples.empty()) throw UsageError("evaluate_snr_level: no samples");
  SnrScore out;
  out.snr = level;
  out.samples.resize(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) { out.samples[i] = score(samples[i]); });
  out.n_samples = samples.size();
  out.mean_score = mean_score(out.samples);
  return out;
}

}  // namespace

SpectrumReferences build_spectrum_references(std::span<const AudioClip> whistles,
                                             std::span<const AudioClip> noise,
                                             std::size_t fft_size) {
  if (whistles.empty() || noise.empty()) {
    throw UsageError("spectrum references need whistle and noise clips");
  }
  SpectrumReferences refs;
  refs.fft_size = fft_size;
  refs.whistle = average_spectrum(whistles, fft_size);
  refs.noise = average_spectrum(noise, fft_size);
  return refs;
}

PidReferences build_pid_references(std::span<const AudioClip> whistles,
                                   std::span<const AudioClip> noise, const StftConfig& stft) {
  if (whistles.empty() || noise.empty()) {
    throw UsageError("PID references need whistle and noise clips");
  }
  const auto average = [&](std::span<const AudioClip> clips) {
    std::vector<PixelIntensityDistribution> pids(clips.size());
    parallel_for(clips.size(), [&](std::size_t i) {
      pids[i] = pixel_intensity_distribution(stft_spectrogram(clips[i], stft));
    });
    return average_pid(pids);
  };
  PidReferences refs;
  refs.stft = stft;
  refs.whistle = average(whistles);
  refs.noise = average(noise);
  return refs;
}

SampleScore score_spectrum(const FrequencySpectrum& sample, const SpectrumReferences& refs) {
  if (sample.magnitudes.size() != refs.whistle.magnitudes.size() ||
      refs.whistle.magnitudes.size() != refs.noise.magnitudes.size()) {
    throw UsageError("spectrum size does not match references");
  }
  SampleScore s;
  s.c_whistle = pearson(sample.magnitudes, refs.whistle.magnitudes);
  s.c_noise = pearson(sample.magnitudes, refs.noise.magnitudes);
  s.score = score_from_correlations(s.c_whistle, s.c_noise);
  return s;
}

SampleScore score_pid(const PixelIntensityDistribution& sample, const PidReferences& refs) {
  SampleScore s;
  s.c_whistle = pearson(sample.weights, refs.whistle.weights);
  s.c_noise = pearson(sample.weights, refs.noise.weights);
  s.score = score_from_correlations(s.c_whistle, s.c_noise);
  return s;
}

SampleScore score_sample_frequency(const AudioClip& sample, const SpectrumReferences& refs) {
  return score_spectrum(fft_magnitude(sample, refs.fft_size), refs);
}

SampleScore score_sample_pixels(const AudioClip& sample, const PidReferences& refs) {
  return score_pid(pixel_intensity_distribution(stft_spectrogram(sample, refs.stft)), refs);
}

SnrScore evaluate_snr_level(std::span<const AudioClip> samples, const SpectrumReferences& refs,
                            const SnrLabel& level) {
  return aggregate(samples, level,
                   [&](const AudioClip& c) { return score_sample_frequency(c, refs); });
}

SnrScore evaluate_snr_level(std::span<const AudioClip> samples, const PidReferences& refs,
                            const SnrLabel& level) {
  return aggregate(samples, level,
                   [&](const AudioClip& c) { return score_sample_pixels(c, refs); });
}

double mean_score(std::span<const SampleScore> scores) {
  if (scores.empty()) throw UsageError("mean of empty score set");
  std::size_t ones = 0;
  for (const auto& s : scores) ones += static_cast<std::size_t>(s.score);
  return static_cast<double>(ones) / static_cast<double>(scores.size());
}

}  // namespace snrge
