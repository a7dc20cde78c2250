#pragma once

#include <array>
#include <string>
#include <vector>

#include "pfvc/dsp/dsp.hpp"

namespace pfvc::corpus {

using core::real;

// Contour styles; per-utterance shape is drawn from the speaker's mixture.
enum class Style { kFlat = 0, kRising = 1, kFalling = 2, kOscillating = 3 };
constexpr int kNumStyles = 4;

// Five-vowel inventory; realized formants are the canonical vowel pattern
// warped by the speaker's neutral formant positions.
constexpr int kNumVowels = 4;
extern const char* const kVowelNames[kNumVowels];
extern const real kVowelFormants[kNumVowels][3];
extern const real kNeutralFormants[3];

struct SpeakerSpec {
  std::string id;
  real base_pitch = 200.0;       // Hz, in [80, 400]
  real pitch_range_st = 3.0;     // semitones of contour swing
  std::array<real, 3> formants{};   // the speaker's neutral formant positions
  std::array<real, 3> bandwidths{}; // Hz
  real tilt_cutoff_hz = 1200.0;  // one-pole spectral tilt
  real hires_freq = 5000.0;      // speaker-specific high resonance
  real hires_bw = 400.0;
  real hires_gain = 2.0;
  std::array<real, kNumStyles> style_weights{};

  // Expected within-utterance standard deviation of speaker-mean-normalized
  // log F0, derived from the contour parameters; the pitch-style scalar that
  // evaluation correlates against.
  real style_strength() const;
};

struct VowelSeg {
  real start_s = 0.0;
  real dur_s = 0.0;
  int vowel = 0;
};

struct UtteranceSpec {
  SpeakerSpec speaker;
  std::vector<VowelSeg> segs;
  real total_s = 0.0;
  Style style = Style::kFlat;
  real vib_hz = 4.0;     // oscillating style rate
  real phase0 = 0.0;     // contour phase offset
  uint64_t seed = 0;

  // contour frequency at time t (Hz), defined over the whole utterance
  real f0_at(real t) const;
};

struct GroundTruth {
  dsp::F0Track f0;                 // 25 Hz, exact synthesis contour, 0 in gaps
  std::vector<int> vowel_25hz;     // -1 for silence
  // sample ranges per vowel segment, for deriving labels at other rates
  struct Seg {
    int start = 0, end = 0, vowel = 0;
  };
  std::vector<Seg> sample_segs;
  std::vector<int> vowel_labels_at(int n_frames, int hop) const;
};

struct SynthResult {
  dsp::Waveform wav;
  GroundTruth truth;
};

SpeakerSpec sample_speaker(uint64_t seed);
// rejection-sampled so pairwise neutral-formant distance >= min_sep (Hz)
std::vector<SpeakerSpec> sample_speaker_set(int n, uint64_t seed,
                                            real min_sep = 150.0);
UtteranceSpec sample_utterance(const SpeakerSpec& spk, uint64_t seed);
SynthResult synth_utterance(const UtteranceSpec& spec, int sample_rate = 16000);

struct ManifestEntry {
  std::string path;
  std::string speaker_id;
  std::string split;  // train / dev / test
};

// Writes WAVs, ground-truth sidecars, a speakers.tsv, and the manifest.
// Test speakers are disjoint from train speakers; utterance-hash split for
// train/dev. Returns the manifest entries in file order.
std::vector<ManifestEntry> build_corpus(int n_speakers, int n_utts_per_speaker,
                                        uint64_t seed, const std::string& out_dir);

std::vector<ManifestEntry> read_manifest(const std::string& path);
std::vector<SpeakerSpec> read_speakers(const std::string& path);
GroundTruth read_ground_truth(const std::string& wav_path);

}  // namespace pfvc::corpus
