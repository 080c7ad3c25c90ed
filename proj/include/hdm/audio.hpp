#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>

#include "hdm/rng.hpp"

namespace hdm::audio {

using Samples = Eigen::ArrayXf;

// Mono sample buffer, values nominally in [-1, 1]. Stretch/shift may exceed
// the range transiently; augment() clamps on exit.
struct Waveform {
  Samples samples;
  int sample_rate_hz = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate_hz);
  }
};

// All detectors receive this rate; corpus audio is resampled on load.
inline constexpr int kCanonicalRateHz = 16000;

enum class WavFormat { Pcm16, Float32 };

// RIFF/WAVE reader: PCM16 or float32, mono or stereo (stereo averaged).
Waveform read_wav(const std::string& bytes);
Waveform read_wav_file(const std::string& path);

std::string write_wav(const Waveform& w, WavFormat format = WavFormat::Pcm16);
void write_wav_file(const Waveform& w, const std::string& path,
                    WavFormat format = WavFormat::Pcm16);

// Band-limited rate conversion (64-tap windowed sinc). Duration preserved
// within one output sample.
Waveform resample(const Waveform& w, int target_hz);

// Sample-exact sub-range; length = round((end-start)*rate).
Waveform slice(const Waveform& w, double start_s, double end_s);

// out[i] = clamp(in[i] + g, -1, 1), g ~ N(0, amp^2). "Amplitude" is the
// standard deviation on normalized samples.
Waveform add_noise(const Waveform& w, double amp, Rng& rng);

// Phase vocoder; rate > 1 shortens (output duration = input / rate), pitch
// preserved. Analysis window 1024, hop 256.
Waveform time_stretch(const Waveform& w, double rate);

// Fundamental scaled by 2^(semitones/12), duration preserved. Stretch by
// 2^(-s/12), then resample back.
Waveform pitch_shift(const Waveform& w, double semitones);

struct AugmentConfig {
  double noise_amp_lo = 0.001, noise_amp_hi = 0.015;
  double stretch_lo = 0.8, stretch_hi = 1.25;
  double pitch_lo = -4.0, pitch_hi = 4.0;
  double apply_prob = 0.5;
  std::uint64_t seed = 0;
};

// The coin flips and parameters for one augmentation; drawn up front so the
// decision sequence does not depend on per-sample noise draws.
struct AugmentPlan {
  bool apply_noise = false;
  double noise_amp = 0.0;
  bool apply_stretch = false;
  double stretch_rate = 1.0;
  bool apply_pitch = false;
  double pitch_semitones = 0.0;
};

AugmentPlan plan_augment(const AugmentConfig& config, Rng& rng);

// Independently with apply_prob each, in order: noise, stretch, shift.
// Output clamped to [-1, 1].
Waveform augment(const Waveform& w, const AugmentConfig& config, Rng& rng);

}  // namespace hdm::audio
