#pragma once

#include <cstdint>
#include <vector>

#include "pfvc/dsp/dsp.hpp"

namespace pfvc::content {

using core::Tensor;
using core::real;

// Frame features are mel-cepstra over a band that carries vowel identity,
// deliberately excluding the high band where the synthetic speakers put their
// identity resonance. Energy and static coloration are removed by waveform
// RMS normalization, c0 exclusion, and per-utterance mean/variance
// normalization.
struct ContentConfig {
  int n_mels = 20;
  real fmin = 250.0;
  real fmax = 2100.0;
  int n_cepstra = 13;   // c1..c13 kept
  int delta_context = 2;
  real smooth_hz = 340.0;  // envelope smoothing span across frequency
  int k = 16;           // k-means clusters
};

// [mel_frames x 2*n_cepstra]; frame count matches the standard 80-mel analysis
Tensor frame_features(const dsp::Waveform& w, const ContentConfig& cfg);

struct KMeansModel {
  Tensor centroids;  // [k x d]
  uint64_t fit_seed = 0;
  int k() const { return centroids.rows(); }
  int dim() const { return centroids.cols(); }
};

// Lloyd's algorithm: converges when the max centroid shift drops below 1e-6
// or after 200 iterations; empty clusters are reseeded from farthest points.
KMeansModel kmeans_fit(const Tensor& features, int k, uint64_t seed);

// nearest centroid by squared distance; ties break to the lowest index
std::vector<int> tokenize(const Tensor& features, const KMeansModel& model);

}  // namespace pfvc::content
