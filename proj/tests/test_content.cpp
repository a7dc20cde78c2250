#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "pfvc/content/content.hpp"
#include "pfvc/corpus/corpus.hpp"
#include "pfvc/core/rng.hpp"

using namespace pfvc;
using namespace pfvc::content;

namespace {

Tensor random_blobs(int k, int per_blob, int d, real sep, real sigma, Rng& rng,
                    Tensor* means_out) {
  // means on a lattice so blobs are separated by at least `sep`
  Tensor means = Tensor::zeros({k, d});
  for (int c = 0; c < k; ++c)
    means(c, c % d) = sep * (1.0 + static_cast<real>(c / d));
  Tensor x = Tensor::zeros({k * per_blob, d});
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < per_blob; ++i)
      for (int j = 0; j < d; ++j)
        x(c * per_blob + i, j) = means(c, j) + sigma * rng.normal();
  if (means_out) *means_out = means;
  return x;
}

real cosine(const std::vector<real>& a, const std::vector<real>& b) {
  real dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb + 1e-12);
}

std::vector<real> mean_feature_over_vowel(const Tensor& feats,
                                          const std::vector<int>& labels, int vowel) {
  std::vector<real> m(feats.cols(), 0.0);
  int count = 0;
  for (int t = 0; t < feats.rows(); ++t)
    if (labels[t] == vowel) {
      ++count;
      for (int j = 0; j < feats.cols(); ++j) m[j] += feats(t, j);
    }
  REQUIRE(count > 0);
  for (auto& v : m) v /= count;
  return m;
}

}  // namespace

TEST_CASE("features are invariant to amplitude scaling") {
  auto u = corpus::sample_utterance(corpus::sample_speaker(4), 10);
  auto synth = corpus::synth_utterance(u);
  auto half = synth.wav;
  for (auto& s : half.samples) s *= 0.5;

  ContentConfig cfg;
  auto a = frame_features(synth.wav, cfg);
  auto b = frame_features(half, cfg);
  REQUIRE(a.shape == b.shape);
  for (size_t i = 0; i < a.v.size(); ++i) CHECK(std::fabs(a.v[i] - b.v[i]) < 1e-6);
}

TEST_CASE("feature frame count equals the mel frame count") {
  auto u = corpus::sample_utterance(corpus::sample_speaker(8), 21);
  auto synth = corpus::synth_utterance(u);
  auto feats = frame_features(synth.wav, ContentConfig{});
  auto mel = dsp::mel_spectrogram(synth.wav, dsp::MelConfig{});
  CHECK(feats.rows() == mel.frames());
  CHECK(feats.cols() == 26);
}

TEST_CASE("same vowel at two pitches within an octave stays similar") {
  auto spk = corpus::sample_speaker(15);
  corpus::UtteranceSpec u;
  u.speaker = spk;
  u.style = corpus::Style::kFlat;
  u.segs = {{0.1, 0.5, 0}, {0.75, 0.5, 1}, {1.4, 0.5, 3}};
  u.total_s = 2.0;

  auto lo = u;
  lo.speaker.base_pitch = 150.0;
  auto hi = u;
  hi.speaker.base_pitch = 260.0;

  auto synth_lo = corpus::synth_utterance(lo);
  auto synth_hi = corpus::synth_utterance(hi);
  ContentConfig cfg;
  auto f_lo = frame_features(synth_lo.wav, cfg);
  auto f_hi = frame_features(synth_hi.wav, cfg);
  auto lab_lo = synth_lo.truth.vowel_labels_at(f_lo.rows(), 256);
  auto lab_hi = synth_hi.truth.vowel_labels_at(f_hi.rows(), 256);

  for (int vowel : {0, 1, 3}) {
    auto m_lo = mean_feature_over_vowel(f_lo, lab_lo, vowel);
    auto m_hi = mean_feature_over_vowel(f_hi, lab_hi, vowel);
    CHECK(cosine(m_lo, m_hi) > 0.9);
  }
}

TEST_CASE("kmeans recovers well-separated blobs") {
  Rng rng(33);
  Tensor means;
  Tensor x = random_blobs(6, 200, 8, 15.0, 0.5, rng, &means);
  auto model = kmeans_fit(x, 6, 5);

  // match each true mean to its nearest centroid
  for (int c = 0; c < 6; ++c) {
    real best = 1e300;
    for (int m = 0; m < 6; ++m) {
      real d2 = 0.0;
      for (int j = 0; j < 8; ++j) {
        const real d = means(c, j) - model.centroids(m, j);
        d2 += d * d;
      }
      best = std::min(best, d2);
    }
    CHECK(std::sqrt(best) < 0.1 * 0.5 * std::sqrt(8.0) + 0.05);
  }
}

TEST_CASE("kmeans: k=1 gives the global mean; same seed refits identically") {
  Rng rng(41);
  Tensor x = random_blobs(3, 50, 4, 3.0, 1.0, rng, nullptr);
  auto m1 = kmeans_fit(x, 1, 9);
  for (int j = 0; j < 4; ++j) {
    real mean = 0.0;
    for (int i = 0; i < x.rows(); ++i) mean += x(i, j);
    mean /= x.rows();
    CHECK(m1.centroids(0, j) == doctest::Approx(mean).epsilon(1e-9));
  }
  auto a = kmeans_fit(x, 5, 77);
  auto b = kmeans_fit(x, 5, 77);
  CHECK(a.centroids.v == b.centroids.v);
}

TEST_CASE("kmeans refuses degenerate input") {
  Tensor x = Tensor::full({10, 3}, 1.0);
  CHECK_THROWS_WITH_AS(kmeans_fit(x, 4, 1), doctest::Contains("distinct"),
                       std::runtime_error);
}

TEST_CASE("tokenize: exact centroid maps to its id; brute force agrees; ties go low") {
  Rng rng(51);
  Tensor x = random_blobs(4, 100, 6, 5.0, 1.0, rng, nullptr);
  auto model = kmeans_fit(x, 4, 3);

  Tensor probe = Tensor::zeros({1, 6});
  for (int c = 0; c < 4; ++c) {
    for (int j = 0; j < 6; ++j) probe(0, j) = model.centroids(c, j);
    CHECK(tokenize(probe, model)[0] == c);
  }

  Tensor rand = Tensor::zeros({1000, 6});
  for (auto& v : rand.v) v = rng.uniform(-8.0, 8.0);
  auto ids = tokenize(rand, model);
  for (int i = 0; i < 1000; ++i) {
    real best = 1e300;
    int best_c = -1;
    for (int c = 0; c < 4; ++c) {
      real s = 0.0;
      for (int j = 0; j < 6; ++j) {
        const real d = rand(i, j) - model.centroids(c, j);
        s += d * d;
      }
      if (s < best) {
        best = s;
        best_c = c;
      }
    }
    REQUIRE(ids[i] == best_c);
  }

  // equidistant tie: centroids mirrored around the probe
  KMeansModel tie;
  tie.centroids = Tensor::from(3, 1, {-1.0, 1.0, 3.0});
  Tensor mid = Tensor::from(1, 1, {0.0});
  CHECK(tokenize(mid, tie)[0] == 0);

  Tensor wrong_dim = Tensor::zeros({1, 2});
  CHECK_THROWS_AS(tokenize(wrong_dim, tie), std::runtime_error);
}

TEST_CASE("content stability across speakers and vowel-token purity") {
  // fit k-means on a small multi-speaker corpus of features
  Rng rng(61);
  auto speakers = corpus::sample_speaker_set(8, 71);
  ContentConfig cfg;

  std::vector<Tensor> all_feats;
  std::vector<std::vector<int>> all_labels;
  int total_rows = 0;
  for (int si = 0; si < 8; ++si)
    for (int ui = 0; ui < 6; ++ui) {
      auto u = corpus::sample_utterance(speakers[si], 1000 + si * 17 + ui);
      auto synth = corpus::synth_utterance(u);
      auto f = frame_features(synth.wav, cfg);
      all_labels.push_back(synth.truth.vowel_labels_at(f.rows(), 256));
      total_rows += f.rows();
      all_feats.push_back(std::move(f));
    }
  Tensor pool = Tensor::zeros({total_rows, all_feats[0].cols()});
  int off = 0;
  for (const auto& f : all_feats) {
    for (int i = 0; i < f.rows(); ++i)
      for (int j = 0; j < f.cols(); ++j) pool(off + i, j) = f(i, j);
    off += f.rows();
  }
  auto model = kmeans_fit(pool, cfg.k, 5);

  // same phonetic content, different speakers -> mostly equal tokens
  // (averaged over utterances and speaker pairs; single pairs are noisy)
  real agree_mean = 0.0;
  int pairs = 0;
  for (uint64_t shared_seed : {555ull, 556ull, 557ull}) {
    corpus::UtteranceSpec shared = corpus::sample_utterance(speakers[0], shared_seed);
    std::vector<std::vector<int>> toks;
    for (int si : {0, 2, 4, 6}) {
      auto v = shared;
      v.speaker = speakers[si];
      toks.push_back(tokenize(frame_features(corpus::synth_utterance(v).wav, cfg), model));
    }
    for (size_t a = 0; a < toks.size(); ++a)
      for (size_t b = a + 1; b < toks.size(); ++b) {
        const int n = static_cast<int>(std::min(toks[a].size(), toks[b].size()));
        int agree = 0;
        for (int i = 0; i < n; ++i) agree += toks[a][i] == toks[b][i];
        agree_mean += static_cast<real>(agree) / n;
        ++pairs;
      }
  }
  agree_mean /= pairs;
  MESSAGE("cross-speaker token agreement (pair mean): ", agree_mean);
  CHECK(agree_mean >= 0.7);

  // frames of one vowel map to a small dominant token set
  for (int vowel = 0; vowel < corpus::kNumVowels; ++vowel) {
    std::map<int, int> counts;
    int total = 0;
    for (size_t uidx = 0; uidx < all_feats.size(); ++uidx) {
      auto ids = tokenize(all_feats[uidx], model);
      for (size_t t = 0; t < ids.size(); ++t)
        if (all_labels[uidx][t] == vowel) {
          ++counts[ids[t]];
          ++total;
        }
    }
    if (total < 50) continue;
    std::vector<int> sorted;
    for (auto& [id, c] : counts) sorted.push_back(c);
    std::sort(sorted.rbegin(), sorted.rend());
    int top3 = 0;
    for (size_t i = 0; i < std::min<size_t>(3, sorted.size()); ++i) top3 += sorted[i];
    MESSAGE("vowel ", vowel, " top3 coverage: ", static_cast<real>(top3) / total);
    CHECK(static_cast<real>(top3) / total >= 0.8);
  }
}
