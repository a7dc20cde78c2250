#include "pfvc/content/content.hpp"

#include <cmath>
#include <stdexcept>

#include "pfvc/core/rng.hpp"

namespace pfvc::content {

namespace {

constexpr real kPi = 3.14159265358979323846;

}  // namespace

Tensor frame_features(const dsp::Waveform& w, const ContentConfig& cfg) {
  // RMS normalization makes the features exactly level-invariant
  dsp::Waveform norm = w;
  real rms = 0.0;
  for (real s : norm.samples) rms += s * s;
  rms = std::sqrt(rms / std::max<size_t>(norm.samples.size(), 1));
  if (rms > 1e-8)
    for (auto& s : norm.samples) s *= 0.1 / rms;

  // Spectral envelope per frame: the linear magnitude is smoothed across
  // frequency over a span wider than the widest harmonic spacing, so the
  // harmonic comb integrates out; the remaining f0-dependent density factor
  // is a constant log offset that the normalization below removes.
  const int frame = 1024, hop = 256;
  const Tensor mag = dsp::stft_magnitude(norm.samples, frame, hop);
  const int t_frames = mag.rows(), bins = mag.cols();
  const real bin_hz = static_cast<real>(w.sample_rate) / frame;
  const int half_span = std::max(1, static_cast<int>(cfg.smooth_hz / 2.0 / bin_hz));
  Tensor env = Tensor::zeros({t_frames, bins});
#pragma omp parallel for schedule(static)
  for (int t = 0; t < t_frames; ++t) {
    std::vector<real> once(bins);
    for (int b = 0; b < bins; ++b) {
      real s = 0.0;
      int cnt = 0;
      for (int d = -half_span; d <= half_span; ++d) {
        const int bb = b + d;
        if (bb < 0 || bb >= bins) continue;
        s += mag(t, bb);
        ++cnt;
      }
      once[b] = s / cnt;
    }
    for (int b = 0; b < bins; ++b) {  // second pass gives a triangular kernel
      real s = 0.0;
      int cnt = 0;
      for (int d = -half_span; d <= half_span; ++d) {
        const int bb = b + d;
        if (bb < 0 || bb >= bins) continue;
        s += once[bb];
        ++cnt;
      }
      env(t, b) = std::log(std::max(s / cnt, static_cast<real>(1e-7)));
    }
  }

  // integrate the smoothed log spectrum into mel channels
  dsp::MelConfig mc;
  mc.sample_rate = w.sample_rate;
  mc.n_mels = cfg.n_mels;
  mc.fmin = cfg.fmin;
  mc.fmax = cfg.fmax;
  const Tensor fb = dsp::mel_filterbank(mc);
  Tensor mel = Tensor::zeros({t_frames, cfg.n_mels});
  for (int t = 0; t < t_frames; ++t)
    for (int m = 0; m < cfg.n_mels; ++m) {
      real s = 0.0, wsum = 0.0;
      for (int b = 0; b < bins; ++b) {
        s += fb(m, b) * env(t, b);
        wsum += fb(m, b);
      }
      mel(t, m) = s / std::max(wsum, static_cast<real>(1e-8));
    }

  const int nc = cfg.n_cepstra;
  // DCT-II over mel channels, dropping c0
  Tensor cep = Tensor::zeros({t_frames, nc});
  for (int t = 0; t < t_frames; ++t)
    for (int c = 1; c <= nc; ++c) {
      real s = 0.0;
      for (int m = 0; m < cfg.n_mels; ++m)
        s += mel(t, m) * std::cos(kPi * c * (m + 0.5) / cfg.n_mels);
      cep(t, c - 1) = s * std::sqrt(2.0 / cfg.n_mels);
    }

  // delta features over +-delta_context frames
  const int dc = cfg.delta_context;
  real denom = 0.0;
  for (int k = 1; k <= dc; ++k) denom += 2.0 * k * k;
  Tensor out = Tensor::zeros({t_frames, 2 * nc});
  for (int t = 0; t < t_frames; ++t)
    for (int c = 0; c < nc; ++c) {
      out(t, c) = cep(t, c);
      real d = 0.0;
      for (int k = 1; k <= dc; ++k) {
        const int tp = std::min(t + k, t_frames - 1);
        const int tm = std::max(t - k, 0);
        d += k * (cep(tp, c) - cep(tm, c));
      }
      out(t, nc + c) = d / denom;
    }

  // per-utterance normalization: per-dimension mean removal with one shared
  // variance scale, so low-energy dimensions are not amplified into noise
  real total_var = 0.0;
  for (int c = 0; c < out.cols(); ++c) {
    real mean = 0.0;
    for (int t = 0; t < t_frames; ++t) mean += out(t, c);
    mean /= std::max(t_frames, 1);
    for (int t = 0; t < t_frames; ++t) {
      out(t, c) -= mean;
      total_var += out(t, c) * out(t, c);
    }
  }
  total_var /= std::max(t_frames * out.cols(), 1);
  const real inv = 1.0 / std::sqrt(total_var + 1e-8);
  for (auto& x : out.v) x *= inv;
  return out;
}

KMeansModel kmeans_fit(const Tensor& features, int k, uint64_t seed) {
  const int n = features.rows(), d = features.cols();
  if (k < 1) throw std::runtime_error("kmeans_fit: k must be >= 1");

  // distinct rows check; initial centroids are distinct random samples
  auto row_equal = [&](int a, int b) {
    for (int j = 0; j < d; ++j)
      if (features(a, j) != features(b, j)) return false;
    return true;
  };
  Rng rng(seed);
  KMeansModel model;
  model.fit_seed = seed;
  model.centroids = Tensor::zeros({k, d});
  std::vector<int> chosen;
  int guard = 0;
  while (static_cast<int>(chosen.size()) < k) {
    if (++guard > 50 * k + 1000)
      throw std::runtime_error("kmeans_fit: fewer than k distinct feature vectors");
    const int cand = rng.uniform_int(0, n - 1);
    bool dup = false;
    for (int c : chosen)
      if (row_equal(c, cand)) {
        dup = true;
        break;
      }
    if (!dup) chosen.push_back(cand);
  }
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < d; ++j) model.centroids(c, j) = features(chosen[c], j);

  std::vector<int> assign(n, 0);
  std::vector<real> dist(n, 0.0);
  for (int iter = 0; iter < 200; ++iter) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      real best = 1e300;
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        real s = 0.0;
        for (int j = 0; j < d; ++j) {
          const real diff = features(i, j) - model.centroids(c, j);
          s += diff * diff;
        }
        if (s < best) {
          best = s;
          best_c = c;
        }
      }
      assign[i] = best_c;
      dist[i] = best;
    }

    Tensor sums = Tensor::zeros({k, d});
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (int j = 0; j < d; ++j) sums(assign[i], j) += features(i, j);
    }
    // empty clusters grab the farthest points
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      int far = 0;
      for (int i = 1; i < n; ++i)
        if (dist[i] > dist[far]) far = i;
      counts[c] = 1;
      for (int j = 0; j < d; ++j) sums(c, j) = features(far, j);
      dist[far] = 0.0;
    }
    real shift = 0.0;
    for (int c = 0; c < k; ++c)
      for (int j = 0; j < d; ++j) {
        const real nc = sums(c, j) / counts[c];
        shift = std::max(shift, std::fabs(nc - model.centroids(c, j)));
        model.centroids(c, j) = nc;
      }
    if (shift < 1e-6) break;
  }
  return model;
}

std::vector<int> tokenize(const Tensor& features, const KMeansModel& model) {
  if (features.cols() != model.dim())
    throw std::runtime_error("tokenize: feature dim " + std::to_string(features.cols()) +
                             " does not match model dim " + std::to_string(model.dim()));
  const int n = features.rows(), k = model.k(), d = model.dim();
  std::vector<int> ids(n, 0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    real best = 1e300;
    int best_c = 0;
    for (int c = 0; c < k; ++c) {
      real s = 0.0;
      for (int j = 0; j < d; ++j) {
        const real diff = features(i, j) - model.centroids(c, j);
        s += diff * diff;
      }
      if (s < best) {  // strict: ties keep the lowest index
        best = s;
        best_c = c;
      }
    }
    ids[i] = best_c;
  }
  return ids;
}

}  // namespace pfvc::content
