#include "hdm/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "hdm/error.hpp"

namespace hdm::audio {

namespace {

// --- little-endian byte helpers ---------------------------------------------

std::uint32_t rd_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

std::uint16_t rd_u16(const char* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

void wr_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<char*>(&v), 4); }
void wr_u16(std::string& out, std::uint16_t v) { out.append(reinterpret_cast<char*>(&v), 2); }

float clampf(float x) { return std::min(1.0f, std::max(-1.0f, x)); }

}  // namespace

Waveform read_wav(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0)
    throw ValidationError("not a RIFF/WAVE file");

  std::uint16_t format_tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const char* data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    std::string chunk_id = bytes.substr(pos, 4);
    std::uint32_t chunk_len = rd_u32(bytes.data() + pos + 4);
    pos += 8;
    if (pos + chunk_len > bytes.size()) throw ValidationError("truncated WAV chunk " + chunk_id);
    if (chunk_id == "fmt ") {
      if (chunk_len < 16) throw ValidationError("fmt chunk too short");
      format_tag = rd_u16(bytes.data() + pos);
      channels = rd_u16(bytes.data() + pos + 2);
      rate = rd_u32(bytes.data() + pos + 4);
      bits = rd_u16(bytes.data() + pos + 14);
      have_fmt = true;
    } else if (chunk_id == "data") {
      data = bytes.data() + pos;
      data_len = chunk_len;
    }
    pos += chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || !data) throw ValidationError("WAV missing fmt or data chunk");
  if (channels < 1 || channels > 2)
    throw ValidationError("unsupported channel count " + std::to_string(channels));
  if (rate == 0) throw ValidationError("zero sample rate");

  const bool pcm16 = format_tag == 1 && bits == 16;
  const bool float32 = format_tag == 3 && bits == 32;
  if (!pcm16 && !float32)
    throw ValidationError("unsupported WAV codec (format " + std::to_string(format_tag) + ", " +
                          std::to_string(bits) + " bit); need PCM16 or float32");

  const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  if (data_len % frame_bytes != 0) throw ValidationError("truncated WAV data chunk");
  const std::size_t n_frames = data_len / frame_bytes;

  Waveform w;
  w.sample_rate_hz = static_cast<int>(rate);
  w.samples.resize(static_cast<Eigen::Index>(n_frames));
  for (std::size_t i = 0; i < n_frames; ++i) {
    float acc = 0.0f;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const char* p = data + (i * channels + c) * bytes_per_sample;
      if (pcm16) {
        std::int16_t s;
        std::memcpy(&s, p, 2);
        acc += static_cast<float>(s) / 32768.0f;
      } else {
        float s;
        std::memcpy(&s, p, 4);
        acc += s;
      }
    }
    w.samples[static_cast<Eigen::Index>(i)] = acc / static_cast<float>(channels);
  }
  return w;
}

Waveform read_wav_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open audio file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return read_wav(bytes);
}

std::string write_wav(const Waveform& w, WavFormat format) {
  const bool pcm16 = format == WavFormat::Pcm16;
  const std::uint32_t bytes_per_sample = pcm16 ? 2 : 4;
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_len = n * bytes_per_sample;

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  wr_u32(out, 36 + data_len);
  out += "WAVE";
  out += "fmt ";
  wr_u32(out, 16);
  wr_u16(out, pcm16 ? 1 : 3);
  wr_u16(out, 1);  // mono
  wr_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  wr_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz) * bytes_per_sample);
  wr_u16(out, static_cast<std::uint16_t>(bytes_per_sample));
  wr_u16(out, pcm16 ? 16 : 32);
  out += "data";
  wr_u32(out, data_len);
  for (Eigen::Index i = 0; i < w.samples.size(); ++i) {
    if (pcm16) {
      long v = std::lround(static_cast<double>(w.samples[i]) * 32768.0);
      v = std::min(32767L, std::max(-32768L, v));
      auto s = static_cast<std::int16_t>(v);
      out.append(reinterpret_cast<char*>(&s), 2);
    } else {
      float s = w.samples[i];
      out.append(reinterpret_cast<char*>(&s), 4);
    }
  }
  return out;
}

void write_wav_file(const Waveform& w, const std::string& path, WavFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write audio file: " + path);
  std::string bytes = write_wav(w, format);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Waveform resample(const Waveform& w, int target_hz) {
  if (target_hz <= 0) throw ValidationError("target sample rate must be positive");
  if (target_hz == w.sample_rate_hz) return w;

  constexpr int kHalfTaps = 32;  // 64-tap kernel
  const double ratio = static_cast<double>(w.sample_rate_hz) / target_hz;  // input per output
  const double cutoff = std::min(1.0, 1.0 / ratio);  // anti-alias when downsampling
  const auto n_in = w.samples.size();
  const auto n_out = static_cast<Eigen::Index>(
      std::llround(static_cast<double>(n_in) * target_hz / w.sample_rate_hz));

  Waveform out;
  out.sample_rate_hz = target_hz;
  out.samples.resize(n_out);

  for (Eigen::Index n = 0; n < n_out; ++n) {
    const double center = static_cast<double>(n) * ratio;
    const auto k0 = static_cast<Eigen::Index>(std::floor(center)) - (kHalfTaps - 1);
    double acc = 0.0, ksum = 0.0;
    for (Eigen::Index k = k0; k < k0 + 2 * kHalfTaps; ++k) {
      const double d = center - static_cast<double>(k);
      // Blackman-windowed sinc
      const double x = d / kHalfTaps;  // in [-1, 1]
      if (x <= -1.0 || x >= 1.0) continue;
      const double window =
          0.42 + 0.5 * std::cos(M_PI * x) + 0.08 * std::cos(2.0 * M_PI * x);
      const double arg = M_PI * cutoff * d;
      const double sinc = (std::abs(arg) < 1e-12) ? 1.0 : std::sin(arg) / arg;
      const double kern = cutoff * sinc * window;
      ksum += kern;
      if (k >= 0 && k < n_in) acc += kern * static_cast<double>(w.samples[k]);
    }
    // normalize kernel mass so DC gain is exactly 1
    out.samples[n] = static_cast<float>(ksum != 0.0 ? acc / ksum : 0.0);
  }
  return out;
}

Waveform slice(const Waveform& w, double start_s, double end_s) {
  if (!(start_s >= 0) || !(end_s > start_s) || end_s > w.duration_s() + 0.5 / w.sample_rate_hz)
    throw ValidationError("slice interval [" + std::to_string(start_s) + ", " +
                          std::to_string(end_s) + ") outside waveform of " +
                          std::to_string(w.duration_s()) + " s");
  const auto first = static_cast<Eigen::Index>(std::llround(start_s * w.sample_rate_hz));
  const auto len = static_cast<Eigen::Index>(std::llround((end_s - start_s) * w.sample_rate_hz));
  if (first + len > w.samples.size())
    throw ValidationError("slice extends past end of waveform");
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples = w.samples.segment(first, len);
  return out;
}

Waveform add_noise(const Waveform& w, double amp, Rng& rng) {
  if (amp < 0) throw ValidationError("noise amplitude must be non-negative");
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples.resize(w.samples.size());
  for (Eigen::Index i = 0; i < w.samples.size(); ++i)
    out.samples[i] = clampf(w.samples[i] + static_cast<float>(rng.normal(0.0, amp)));
  return out;
}

Waveform time_stretch(const Waveform& w, double rate) {
  if (!(rate > 0)) throw ValidationError("stretch rate must be positive");
  const auto n_in = w.samples.size();
  const auto n_out = static_cast<Eigen::Index>(std::llround(static_cast<double>(n_in) / rate));
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  if (n_out == 0 || n_in == 0) {
    out.samples.resize(std::max<Eigen::Index>(n_out, 0));
    out.samples.setZero();
    return out;
  }

  constexpr Eigen::Index kWin = 1024;
  constexpr Eigen::Index kHop = 256;  // synthesis hop
  const Eigen::Index n_bins = kWin / 2;

  // periodic Hann
  Eigen::ArrayXf window(kWin);
  for (Eigen::Index i = 0; i < kWin; ++i)
    window[i] = 0.5f - 0.5f * std::cos(2.0 * M_PI * static_cast<double>(i) / kWin);

  // zero-pad the input so every analysis read is in range
  const auto n_frames = n_out / kHop + 2;
  const auto max_read =
      static_cast<Eigen::Index>(std::ceil(static_cast<double>(n_frames) * kHop * rate)) + kWin + 1;
  Eigen::ArrayXf padded = Eigen::ArrayXf::Zero(std::max(max_read, n_in));
  padded.head(n_in) = w.samples;

  Eigen::FFT<float> fft;
  std::vector<float> frame(static_cast<std::size_t>(kWin));
  std::vector<std::complex<float>> spectrum, synth_spec(static_cast<std::size_t>(kWin));
  std::vector<float> synth_frame;

  Eigen::ArrayXd prev_phase = Eigen::ArrayXd::Zero(n_bins + 1);
  Eigen::ArrayXd synth_phase = Eigen::ArrayXd::Zero(n_bins + 1);
  Eigen::ArrayXf accum = Eigen::ArrayXf::Zero(n_frames * kHop + kWin);
  Eigen::ArrayXf norm = Eigen::ArrayXf::Zero(n_frames * kHop + kWin);

  Eigen::Index prev_read = 0;
  for (Eigen::Index m = 0; m < n_frames; ++m) {
    const auto read = static_cast<Eigen::Index>(std::llround(static_cast<double>(m) * kHop * rate));
    for (Eigen::Index i = 0; i < kWin; ++i)
      frame[static_cast<std::size_t>(i)] = padded[read + i] * window[i];
    fft.fwd(spectrum, frame);

    const double step = static_cast<double>(read - prev_read);
    for (Eigen::Index k = 0; k <= n_bins; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const double mag = std::abs(spectrum[ks]);
      const double phase = std::arg(spectrum[ks]);
      const double omega = 2.0 * M_PI * static_cast<double>(k) / kWin;  // rad per sample
      double true_omega = omega;
      if (m == 0) {
        synth_phase[k] = phase;
      } else {
        double delta = phase - prev_phase[k] - omega * step;
        delta -= 2.0 * M_PI * std::round(delta / (2.0 * M_PI));  // wrap to (-pi, pi]
        true_omega = omega + (step > 0 ? delta / step : 0.0);
        synth_phase[k] += true_omega * kHop;
      }
      prev_phase[k] = phase;
      synth_spec[ks] = std::polar(static_cast<float>(mag), static_cast<float>(synth_phase[k]));
    }
    // conjugate mirror for the real inverse transform
    for (Eigen::Index k = n_bins + 1; k < kWin; ++k)
      synth_spec[static_cast<std::size_t>(k)] =
          std::conj(synth_spec[static_cast<std::size_t>(kWin - k)]);
    fft.inv(synth_frame, synth_spec);

    const Eigen::Index write = m * kHop;
    for (Eigen::Index i = 0; i < kWin; ++i) {
      accum[write + i] += synth_frame[static_cast<std::size_t>(i)] * window[i];
      norm[write + i] += window[i] * window[i];
    }
    prev_read = read;
  }

  out.samples.resize(n_out);
  for (Eigen::Index i = 0; i < n_out; ++i)
    out.samples[i] = norm[i] > 1e-6f ? accum[i] / norm[i] : 0.0f;
  return out;
}

Waveform pitch_shift(const Waveform& w, double semitones) {
  if (std::abs(semitones) > 24) throw ValidationError("pitch shift limited to +-24 semitones");
  if (semitones == 0.0) return w;
  const double factor = std::pow(2.0, semitones / 12.0);
  // lengthen by `factor`, then play back faster by the same factor
  Waveform stretched = time_stretch(w, 1.0 / factor);
  Waveform shifted = resample(stretched, static_cast<int>(std::lround(w.sample_rate_hz / factor)));
  shifted.sample_rate_hz = w.sample_rate_hz;
  return shifted;
}

AugmentPlan plan_augment(const AugmentConfig& config, Rng& rng) {
  AugmentPlan plan;
  plan.apply_noise = rng.coin(config.apply_prob);
  if (plan.apply_noise) plan.noise_amp = rng.uniform(config.noise_amp_lo, config.noise_amp_hi);
  plan.apply_stretch = rng.coin(config.apply_prob);
  if (plan.apply_stretch) plan.stretch_rate = rng.uniform(config.stretch_lo, config.stretch_hi);
  plan.apply_pitch = rng.coin(config.apply_prob);
  if (plan.apply_pitch) plan.pitch_semitones = rng.uniform(config.pitch_lo, config.pitch_hi);
  return plan;
}

Waveform augment(const Waveform& w, const AugmentConfig& config, Rng& rng) {
  AugmentPlan plan = plan_augment(config, rng);
  Waveform out = w;
  if (plan.apply_noise) out = add_noise(out, plan.noise_amp, rng);
  if (plan.apply_stretch) out = time_stretch(out, plan.stretch_rate);
  if (plan.apply_pitch) out = pitch_shift(out, plan.pitch_semitones);
  out.samples = out.samples.min(1.0f).max(-1.0f);
  return out;
}

}  // namespace hdm::audio
