#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "pfvc/corpus/corpus.hpp"
#include "pfvc/core/rng.hpp"

using namespace pfvc;
using namespace pfvc::corpus;

namespace {

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

UtteranceSpec flat_utterance(real base_pitch, uint64_t seed) {
  SpeakerSpec spk = sample_speaker(seed);
  spk.base_pitch = base_pitch;
  spk.style_weights = {1.0, 0.0, 0.0, 0.0};
  UtteranceSpec u = sample_utterance(spk, seed + 1);
  u.style = Style::kFlat;
  return u;
}

}  // namespace

TEST_CASE("sample_speaker is deterministic and respects the pitch contract") {
  for (uint64_t seed : {1ull, 77ull, 909ull}) {
    auto a = sample_speaker(seed);
    auto b = sample_speaker(seed);
    CHECK(a.base_pitch == b.base_pitch);
    CHECK(a.formants == b.formants);
    CHECK(a.style_weights == b.style_weights);
    CHECK(a.base_pitch >= 80.0);
    CHECK(a.base_pitch <= 400.0);
    real wsum = 0.0;
    for (real w : a.style_weights) wsum += w;
    CHECK(wsum == doctest::Approx(1.0));
    CHECK(a.formants[0] < a.formants[1]);
    CHECK(a.formants[1] < a.formants[2]);
  }
}

TEST_CASE("speaker sets keep pairwise formant separation") {
  auto spks = sample_speaker_set(10, 42);
  REQUIRE(spks.size() == 10);
  for (size_t i = 0; i < spks.size(); ++i)
    for (size_t j = i + 1; j < spks.size(); ++j) {
      real d2 = 0.0;
      for (int k = 0; k < 3; ++k) {
        real d = spks[i].formants[k] - spks[j].formants[k];
        d2 += d * d;
      }
      CHECK(std::sqrt(d2) >= 150.0);
    }
}

TEST_CASE("synthesis is bit-deterministic per spec") {
  auto u = sample_utterance(sample_speaker(5), 99);
  auto a = synth_utterance(u);
  auto b = synth_utterance(u);
  CHECK(a.wav.samples == b.wav.samples);
  CHECK(a.truth.f0.f0_hz == b.truth.f0.f0_hz);
}

TEST_CASE("flat 200 Hz utterance closes the loop with the f0 estimator") {
  auto u = flat_utterance(200.0, 3);
  auto synth = synth_utterance(u);
  auto est = dsp::estimate_f0(synth.wav, dsp::F0Config{});

  std::vector<real> voiced;
  for (int i = 0; i < est.frames(); ++i)
    if (est.voiced[i] && i < synth.truth.f0.frames() && synth.truth.f0.voiced[i])
      voiced.push_back(est.f0_hz[i]);
  REQUIRE(voiced.size() >= 10);
  std::sort(voiced.begin(), voiced.end());
  CHECK(voiced[voiced.size() / 2] == doctest::Approx(200.0).epsilon(3.0 / 200.0));
}

TEST_CASE("gaps are unvoiced in the ground truth and estimator agrees broadly") {
  auto u = sample_utterance(sample_speaker(11), 31);
  auto synth = synth_utterance(u);
  const auto& gt = synth.truth;

  // truth: frames outside all segments are unvoiced with f0 = 0
  for (int i = 0; i < gt.f0.frames(); ++i) {
    if (!gt.f0.voiced[i]) {
      CHECK(gt.f0.f0_hz[i] == 0.0);
      CHECK(gt.vowel_25hz[i] == -1);
    } else {
      CHECK(gt.vowel_25hz[i] >= 0);
    }
  }
  // the first frame (leading silence) must be unvoiced
  CHECK_FALSE(gt.f0.voiced[0]);
}

TEST_CASE("estimator tracks the true contour within 3 Hz median error corpus-wide") {
  Rng rng(7);
  std::vector<real> errors;
  real voiced_agree = 0, voiced_total = 0;
  for (int rep = 0; rep < 6; ++rep) {
    auto spk = sample_speaker(rng.u64());
    auto u = sample_utterance(spk, rng.u64());
    auto synth = synth_utterance(u);
    auto est = dsp::estimate_f0(synth.wav, dsp::F0Config{});
    const int n = std::min(est.frames(), synth.truth.f0.frames());
    for (int i = 0; i < n; ++i) {
      if (synth.truth.f0.voiced[i]) {
        ++voiced_total;
        if (est.voiced[i]) {
          ++voiced_agree;
          errors.push_back(std::fabs(est.f0_hz[i] - synth.truth.f0.f0_hz[i]));
        }
      }
    }
  }
  REQUIRE(!errors.empty());
  std::sort(errors.begin(), errors.end());
  CHECK(errors[errors.size() / 2] < 3.0);
  CHECK(voiced_agree / voiced_total > 0.8);
}

TEST_CASE("build_corpus writes a deterministic, speaker-disjoint split") {
  namespace fs = std::filesystem;
  const auto dir1 = fs::temp_directory_path() / "pfvc_corpus_a";
  const auto dir2 = fs::temp_directory_path() / "pfvc_corpus_b";
  fs::remove_all(dir1);
  fs::remove_all(dir2);

  auto m1 = build_corpus(5, 4, 123, dir1.string());
  CHECK(m1.size() == 20);

  std::set<std::string> train_spk, test_spk;
  int n_test = 0;
  for (const auto& e : m1) {
    if (e.split == "test") {
      test_spk.insert(e.speaker_id);
      ++n_test;
    } else {
      train_spk.insert(e.speaker_id);
    }
  }
  CHECK(n_test > 0);
  for (const auto& s : test_spk) CHECK(train_spk.count(s) == 0);

  auto m2 = build_corpus(5, 4, 123, dir2.string());
  REQUIRE(m1.size() == m2.size());
  for (size_t i = 0; i < m1.size(); ++i) {
    CHECK(fs::path(m1[i].path).filename() == fs::path(m2[i].path).filename());
    CHECK(m1[i].split == m2[i].split);
    CHECK(slurp(m1[i].path) == slurp(m2[i].path));
  }

  // manifest and sidecars round-trip
  auto read_back = read_manifest((dir1 / "manifest.tsv").string());
  REQUIRE(read_back.size() == m1.size());
  CHECK(read_back[3].speaker_id == m1[3].speaker_id);
  auto spks = read_speakers((dir1 / "speakers.tsv").string());
  CHECK(spks.size() == 5);
  auto gt = read_ground_truth(m1[0].path);
  auto direct = read_ground_truth(m2[0].path);
  CHECK(gt.f0.f0_hz == direct.f0.f0_hz);
  CHECK(!gt.sample_segs.empty());

  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("style strength reflects contour variability") {
  SpeakerSpec flat = sample_speaker(1);
  flat.style_weights = {1, 0, 0, 0};
  SpeakerSpec lively = flat;
  lively.style_weights = {0, 0, 0, 1};
  lively.pitch_range_st = 6.0;
  CHECK(flat.style_strength() == doctest::Approx(0.0));
  CHECK(lively.style_strength() > 0.1);
}
