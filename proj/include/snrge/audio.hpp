#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "snrge/error.hpp"

namespace snrge {

/// Mono audio at a fixed sample rate. Samples are kept in double precision;
/// quantization only happens when writing to disk.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 0;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double duration() const noexcept {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
};

/// Distinguishes the ways a WAV file can be rejected.
enum class WavErrorCode {
  kMissingFile,
  kMultiChannel,
  kUnsupportedEncoding,
  kMalformed,
  kUnwritable,
  kEmptyClip,
};

class WavError : public DataError {
 public:
  WavError(WavErrorCode code, const std::string& what)
      : DataError(what), code_(code) {}
  WavErrorCode code() const noexcept { return code_; }

 private:
  WavErrorCode code_;
};

/// Reads a mono WAV with a 16-bit PCM or 32-bit IEEE float payload.
/// 16-bit codes are divided by 32768.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes mono 16-bit PCM. Samples are clipped to [-1, 1], scaled by 32768,
/// rounded and saturated to the int16 range, so +1.0 is stored as +32767.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// Root-mean-square amplitude. Throws UsageError on an empty clip.
double rms(std::span<const double> samples);
inline double rms(const AudioClip& clip) { return rms(clip.samples); }

}  // namespace snrge
