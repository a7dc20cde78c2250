#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "pfvc/core/tensor.hpp"

namespace pfvc::dsp {

using core::Tensor;
using core::real;

struct Waveform {
  std::vector<real> samples;
  int sample_rate = 16000;
  real duration_s() const {
    return static_cast<real>(samples.size()) / sample_rate;
  }
};

struct MelConfig {
  int sample_rate = 16000;
  int frame = 1024;
  int hop = 256;
  int n_mels = 80;
  real fmin = 0.0;
  real fmax = 8000.0;
  real log_floor = 1e-5;
};

struct MelSpectrogram {
  Tensor data;  // [n_frames x n_mels], natural-log magnitudes
  int n_mels = 80;
  int hop = 256;
  int frame = 1024;
  int frames() const { return data.rows(); }
};

struct F0Track {
  std::vector<real> f0_hz;       // 0 where unvoiced
  std::vector<uint8_t> voiced;
  real frame_rate = 25.0;
  int frames() const { return static_cast<int>(f0_hz.size()); }
};

struct F0Config {
  real f_min = 60.0;
  real f_max = 600.0;
  real frame_rate = 25.0;   // analysis hop = sample_rate / frame_rate
  int window = 1024;
  real threshold = 0.15;    // normalized-difference voicing threshold
  real energy_floor = 1e-4; // frame RMS below this is unvoiced outright
};

// Frame count for centered analysis: 1 + floor(len / hop); empty input -> 0.
int frame_count(int len, int hop);

// Centered framing uses reflect padding of frame/2 on both sides.
std::vector<std::vector<real>> frame_signal(const std::vector<real>& samples,
                                            int frame, int hop, bool centered);

void fft_inplace(std::vector<std::complex<real>>& x, bool inverse);

// [n_mels x (frame/2 + 1)] triangular filters on the HTK mel scale
Tensor mel_filterbank(const MelConfig& cfg);

// [frames x (frame/2+1)] linear magnitudes, centered Hann analysis
Tensor stft_magnitude(const std::vector<real>& samples, int frame, int hop);

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg);

F0Track estimate_f0(const Waveform& w, const F0Config& cfg);

Waveform griffin_lim(const MelSpectrogram& m, const MelConfig& cfg, int iters,
                     uint64_t seed);

// Distance between |STFT(w)| and the linear magnitudes implied by m; used by
// tests to check the Griffin-Lim error is non-increasing.
real spectral_error(const Waveform& w, const MelSpectrogram& m, const MelConfig& cfg);

Waveform read_wav(const std::string& path);
void write_wav(const Waveform& w, const std::string& path);

}  // namespace pfvc::dsp
