#include "pfvc/dsp/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pfvc/core/rng.hpp"

namespace pfvc::dsp {

namespace {

constexpr real kPi = 3.14159265358979323846;

// reflect index into [0, len)
int reflect(int idx, int len) {
  if (len == 1) return 0;
  while (idx < 0 || idx >= len) {
    if (idx < 0) idx = -idx;
    if (idx >= len) idx = 2 * (len - 1) - idx;
  }
  return idx;
}

std::vector<real> hann_window(int n) {
  std::vector<real> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);  // periodic
  return w;
}

real hz_to_mel(real hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
real mel_to_hz(real mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

int frame_count(int len, int hop) {
  if (len <= 0) return 0;
  return 1 + len / hop;
}

std::vector<std::vector<real>> frame_signal(const std::vector<real>& samples,
                                            int frame, int hop, bool centered) {
  if (hop <= 0 || frame < hop)
    throw std::runtime_error("frame_signal: requires frame >= hop > 0");
  const int len = static_cast<int>(samples.size());
  std::vector<std::vector<real>> out;
  if (len == 0) return out;
  if (centered) {
    const int n = frame_count(len, hop);
    const int half = frame / 2;
    out.assign(n, std::vector<real>(frame));
    for (int t = 0; t < n; ++t)
      for (int i = 0; i < frame; ++i)
        out[t][i] = samples[reflect(t * hop - half + i, len)];
  } else {
    if (len < frame) return out;
    const int n = 1 + (len - frame) / hop;
    out.assign(n, std::vector<real>(frame));
    for (int t = 0; t < n; ++t)
      for (int i = 0; i < frame; ++i) out[t][i] = samples[t * hop + i];
  }
  return out;
}

void fft_inplace(std::vector<std::complex<real>>& x, bool inverse) {
  const size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::runtime_error("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const real ang = 2.0 * kPi / len * (inverse ? 1.0 : -1.0);
    const std::complex<real> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<real> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<real> u = x[i + k];
        const std::complex<real> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& c : x) c /= static_cast<real>(n);
}

Tensor mel_filterbank(const MelConfig& cfg) {
  const int bins = cfg.frame / 2 + 1;
  Tensor fb = Tensor::zeros({cfg.n_mels, bins});
  const real mel_lo = hz_to_mel(cfg.fmin);
  const real mel_hi = hz_to_mel(cfg.fmax);
  std::vector<real> hz(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  const real bin_hz = static_cast<real>(cfg.sample_rate) / cfg.frame;
  for (int m = 0; m < cfg.n_mels; ++m) {
    const real lo = hz[m], mid = hz[m + 1], hi = hz[m + 2];
    for (int b = 0; b < bins; ++b) {
      const real f = b * bin_hz;
      if (f <= lo || f >= hi) continue;
      fb(m, b) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

Tensor stft_magnitude(const std::vector<real>& samples, int frame, int hop) {
  const auto frames = frame_signal(samples, frame, hop, true);
  const auto window = hann_window(frame);
  const int bins = frame / 2 + 1;
  Tensor mag = Tensor::zeros({static_cast<int>(frames.size()), bins});
#pragma omp parallel for schedule(static)
  for (int t = 0; t < static_cast<int>(frames.size()); ++t) {
    std::vector<std::complex<real>> buf(frame);
    for (int i = 0; i < frame; ++i) buf[i] = frames[t][i] * window[i];
    fft_inplace(buf, false);
    for (int b = 0; b < bins; ++b) mag(t, b) = std::abs(buf[b]);
  }
  return mag;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  if (w.sample_rate != cfg.sample_rate)
    throw std::runtime_error("mel_spectrogram: waveform sample rate " +
                             std::to_string(w.sample_rate) +
                             " does not match config " +
                             std::to_string(cfg.sample_rate));
  const Tensor mag = stft_magnitude(w.samples, cfg.frame, cfg.hop);
  const Tensor fb = mel_filterbank(cfg);
  MelSpectrogram mel;
  mel.n_mels = cfg.n_mels;
  mel.hop = cfg.hop;
  mel.frame = cfg.frame;
  mel.data = Tensor::zeros({mag.rows(), cfg.n_mels});
  for (int t = 0; t < mag.rows(); ++t)
    for (int m = 0; m < cfg.n_mels; ++m) {
      real s = 0.0;
      for (int b = 0; b < mag.cols(); ++b) s += fb(m, b) * mag(t, b);
      mel.data(t, m) = std::log(std::max(s, cfg.log_floor));
    }
  return mel;
}

F0Track estimate_f0(const Waveform& w, const F0Config& cfg) {
  if (!(cfg.f_min < cfg.f_max) || cfg.f_max > w.sample_rate / 4.0)
    throw std::runtime_error("estimate_f0: requires f_min < f_max <= sample_rate/4");
  const int sr = w.sample_rate;
  const int hop = static_cast<int>(std::lround(sr / cfg.frame_rate));
  const int len = static_cast<int>(w.samples.size());
  const int n = frame_count(len, hop);
  const int win = cfg.window;
  const int tau_min = std::max(2, static_cast<int>(std::floor(sr / cfg.f_max)));
  const int tau_max = std::min(win / 2, static_cast<int>(std::ceil(sr / cfg.f_min)));

  F0Track track;
  track.frame_rate = cfg.frame_rate;
  track.f0_hz.assign(n, 0.0);
  track.voiced.assign(n, 0);
  if (len == 0) return track;

#pragma omp parallel for schedule(static)
  for (int fi = 0; fi < n; ++fi) {
    std::vector<real> frame(win);
    const int half = win / 2;
    for (int i = 0; i < win; ++i)
      frame[i] = w.samples[reflect(fi * hop - half + i, len)];

    real energy = 0.0;
    for (real s : frame) energy += s * s;
    if (std::sqrt(energy / win) < cfg.energy_floor) continue;

    // YIN difference function and cumulative-mean normalization
    std::vector<real> d(tau_max + 1, 0.0), cmndf(tau_max + 1, 1.0);
    for (int tau = 1; tau <= tau_max; ++tau) {
      real s = 0.0;
      for (int j = 0; j < win - tau_max; ++j) {
        const real diff = frame[j] - frame[j + tau];
        s += diff * diff;
      }
      d[tau] = s;
    }
    real running = 0.0;
    for (int tau = 1; tau <= tau_max; ++tau) {
      running += d[tau];
      cmndf[tau] = running > 0.0 ? d[tau] * tau / running : 1.0;
    }

    int tau_est = 0;
    for (int tau = tau_min; tau <= tau_max; ++tau) {
      if (cmndf[tau] < cfg.threshold) {
        tau_est = tau;
        while (tau_est + 1 <= tau_max && cmndf[tau_est + 1] < cmndf[tau_est]) ++tau_est;
        break;
      }
    }
    if (tau_est == 0) continue;

    const int t0 = std::max(tau_est - 1, 1), t2 = std::min(tau_est + 1, tau_max);
    const real denom = cmndf[t0] - 2.0 * cmndf[tau_est] + cmndf[t2];
    real shift = 0.0;
    if (std::fabs(denom) > 1e-12) shift = 0.5 * (cmndf[t0] - cmndf[t2]) / denom;
    if (shift > 0.5) shift = 0.5;
    if (shift < -0.5) shift = -0.5;
    const real f0 = sr / (tau_est + shift);
    if (f0 >= cfg.f_min && f0 <= cfg.f_max) {
      track.f0_hz[fi] = f0;
      track.voiced[fi] = 1;
    }
  }
  return track;
}

namespace {

// Approximate pseudo-inverse of the mel filterbank applied to exp(log-mel).
Tensor mel_to_linear_mag(const MelSpectrogram& m, const MelConfig& cfg) {
  const Tensor fb = mel_filterbank(cfg);
  const int bins = cfg.frame / 2 + 1;
  std::vector<real> colsum(bins, 0.0);
  for (int mm = 0; mm < fb.rows(); ++mm)
    for (int b = 0; b < bins; ++b) colsum[b] += fb(mm, b);
  Tensor mag = Tensor::zeros({m.frames(), bins});
  for (int t = 0; t < m.frames(); ++t)
    for (int b = 0; b < bins; ++b) {
      real s = 0.0;
      for (int mm = 0; mm < fb.rows(); ++mm)
        s += fb(mm, b) * std::exp(m.data(t, mm));
      mag(t, b) = s / std::max(colsum[b], static_cast<real>(1e-8));
    }
  return mag;
}

std::vector<real> istft(const Tensor& re, const Tensor& im, int frame, int hop) {
  const int n_frames = re.rows();
  const int out_len = hop * (n_frames - 1);
  const auto window = hann_window(frame);
  const int half = frame / 2;
  std::vector<real> acc(out_len + frame, 0.0), wsum(out_len + frame, 0.0);
  std::vector<std::complex<real>> buf(frame);
  const int bins = frame / 2 + 1;
  for (int t = 0; t < n_frames; ++t) {
    for (int b = 0; b < bins; ++b) buf[b] = {re(t, b), im(t, b)};
    for (int b = bins; b < frame; ++b) buf[b] = std::conj(buf[frame - b]);
    fft_inplace(buf, true);
    const int base = t * hop;  // account for center padding below
    for (int i = 0; i < frame; ++i) {
      acc[base + i] += window[i] * buf[i].real();
      wsum[base + i] += window[i] * window[i];
    }
  }
  std::vector<real> out(out_len);
  for (int i = 0; i < out_len; ++i) {
    const int j = i + half;  // drop the centered-analysis padding
    out[i] = wsum[j] > 1e-9 ? acc[j] / wsum[j] : 0.0;
  }
  return out;
}

}  // namespace

Waveform griffin_lim(const MelSpectrogram& m, const MelConfig& cfg, int iters,
                     uint64_t seed) {
  if (iters < 0) throw std::runtime_error("griffin_lim: iters must be >= 0");
  const Tensor mag = mel_to_linear_mag(m, cfg);
  const int n_frames = mag.rows(), bins = mag.cols();

  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Tensor re = Tensor::zeros({n_frames, bins}), im = Tensor::zeros({n_frames, bins});
  for (int t = 0; t < n_frames; ++t)
    for (int b = 0; b < bins; ++b) {
      const real phi = rng.uniform(-kPi, kPi);
      re(t, b) = mag(t, b) * std::cos(phi);
      im(t, b) = mag(t, b) * std::sin(phi);
    }

  Waveform w;
  w.sample_rate = cfg.sample_rate;
  const auto window = hann_window(cfg.frame);
  for (int it = 0; it < iters; ++it) {
    // resynthesize, re-analyze, keep the target magnitude with the new phase
    std::vector<real> x = istft(re, im, cfg.frame, cfg.hop);
    const auto frames = frame_signal(x, cfg.frame, cfg.hop, true);
    const int nf = std::min<int>(n_frames, static_cast<int>(frames.size()));
    std::vector<std::complex<real>> buf(cfg.frame);
    for (int t = 0; t < nf; ++t) {
      for (int i = 0; i < cfg.frame; ++i) buf[i] = frames[t][i] * window[i];
      fft_inplace(buf, false);
      for (int b = 0; b < bins; ++b) {
        const real a = std::abs(buf[b]);
        if (a > 1e-12) {
          re(t, b) = mag(t, b) * buf[b].real() / a;
          im(t, b) = mag(t, b) * buf[b].imag() / a;
        }
      }
    }
  }
  w.samples = istft(re, im, cfg.frame, cfg.hop);
  return w;
}

real spectral_error(const Waveform& w, const MelSpectrogram& m, const MelConfig& cfg) {
  const Tensor target = mel_to_linear_mag(m, cfg);
  const Tensor got = stft_magnitude(w.samples, cfg.frame, cfg.hop);
  const int t = std::min(target.rows(), got.rows());
  real err = 0.0, norm = 0.0;
  for (int i = 0; i < t; ++i)
    for (int b = 0; b < target.cols(); ++b) {
      const real d = target(i, b) - got(i, b);
      err += d * d;
      norm += target(i, b) * target(i, b);
    }
  return std::sqrt(err / std::max(norm, static_cast<real>(1e-12)));
}

}  // namespace pfvc::dsp
