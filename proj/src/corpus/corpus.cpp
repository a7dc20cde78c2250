#include "pfvc/corpus/corpus.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pfvc/core/rng.hpp"

namespace pfvc::corpus {

const char* const kVowelNames[kNumVowels] = {"a", "e", "u", "i"};

// canonical (F1, F2) in Hz; F3 carries speaker identity, not vowel identity,
// so every vowel pair must differ clearly within F1/F2
const real kVowelFormants[kNumVowels][3] = {
    {730.0, 1090.0, 2500.0},  // a
    {450.0, 1650.0, 2500.0},  // e
    {300.0, 850.0, 2500.0},   // u
    {270.0, 1950.0, 2500.0},  // i
};
const real kNeutralFormants[3] = {500.0, 1500.0, 2500.0};

namespace {

constexpr real kPi = 3.14159265358979323846;
constexpr real kLn2Over12 = 0.05776226504666211;  // ln(2)/12, semitone -> log

// std of the contour shape over one utterance, per style
constexpr real kShapeStd[kNumStyles] = {0.0, 0.28867513459481287,
                                        0.28867513459481287, 0.35355339059327373};

struct Biquad {
  real b0 = 1.0, a1 = 0.0, a2 = 0.0;
  real y1 = 0.0, y2 = 0.0;

  static Biquad resonator(real freq, real bw, int sr) {
    Biquad q;
    const real r = std::exp(-kPi * bw / sr);
    const real w = 2.0 * kPi * freq / sr;
    q.a1 = 2.0 * r * std::cos(w);
    q.a2 = -r * r;
    // normalize gain at the resonance frequency to ~1
    const std::complex<real> z = std::polar<real>(1.0, -w);
    q.b0 = std::abs(std::complex<real>(1.0, 0.0) - q.a1 * z + (-q.a2) * z * z);
    return q;
  }

  real step(real x) {
    const real y = b0 * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

// bandlimited pulse train via the Dirichlet closed form
real pulse(real theta, int n_harm) {
  const real s = std::sin(0.5 * theta);
  if (std::fabs(s) < 1e-7) return 1.0;
  const real v = 0.5 * (std::sin((n_harm + 0.5) * theta) / s - 1.0);
  return v / n_harm;
}

}  // namespace

real SpeakerSpec::style_strength() const {
  real s = 0.0;
  for (int i = 0; i < kNumStyles; ++i) s += style_weights[i] * kShapeStd[i];
  return s * pitch_range_st * kLn2Over12;
}

real UtteranceSpec::f0_at(real t) const {
  real shape = 0.0;
  const real u = total_s > 0 ? t / total_s : 0.0;
  switch (style) {
    case Style::kFlat: shape = 0.0; break;
    case Style::kRising: shape = u - 0.5; break;
    case Style::kFalling: shape = 0.5 - u; break;
    case Style::kOscillating:
      shape = 0.5 * std::sin(2.0 * kPi * vib_hz * t + phase0);
      break;
  }
  return speaker.base_pitch * std::pow(2.0, speaker.pitch_range_st * shape / 12.0);
}

SpeakerSpec sample_speaker(uint64_t seed) {
  Rng rng(seed);
  SpeakerSpec s;
  s.base_pitch = std::exp(rng.uniform(std::log(100.0), std::log(230.0)));
  s.pitch_range_st = rng.uniform(1.0, 6.0);
  // speaker identity lives in F3 (plus tilt and the high resonance); F1/F2
  // warps stay small so vowel classes remain stable across speakers
  s.formants = {rng.uniform(488.0, 512.0), rng.uniform(1460.0, 1540.0),
                rng.uniform(3300.0, 5000.0)};
  s.bandwidths = {rng.uniform(60.0, 90.0), rng.uniform(90.0, 130.0),
                  rng.uniform(130.0, 190.0)};
  s.tilt_cutoff_hz = std::exp(rng.uniform(std::log(500.0), std::log(2500.0)));
  s.hires_freq = rng.uniform(4200.0, 6800.0);
  s.hires_bw = rng.uniform(300.0, 600.0);
  s.hires_gain = rng.uniform(1.0, 4.0);

  const int dominant = rng.uniform_int(0, kNumStyles - 1);
  const real w = rng.uniform(0.6, 0.9);
  for (int i = 0; i < kNumStyles; ++i)
    s.style_weights[i] = (1.0 - w) / (kNumStyles - 1);
  s.style_weights[dominant] = w;
  return s;
}

std::vector<SpeakerSpec> sample_speaker_set(int n, uint64_t seed, real min_sep) {
  // F3 carries most of the separation; stratified placement makes the
  // contract reachable for any n that fits the range, and the rejection
  // check below still enforces it
  const real f3_lo = 3300.0, f3_hi = 5000.0;
  const real stratum = (f3_hi - f3_lo) / std::max(n, 1);
  std::vector<SpeakerSpec> out;
  Rng rng(seed);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(0, i)]);

  int attempts = 0;
  while (static_cast<int>(out.size()) < n) {
    if (++attempts > 10000)
      throw std::runtime_error("sample_speaker_set: separation unreachable");
    SpeakerSpec cand = sample_speaker(rng.u64());
    const int k = static_cast<int>(out.size());
    const real jitter = std::max(0.0, (stratum - min_sep) / 2.0 - 1.0);
    cand.formants[2] = f3_lo + (order[k] + 0.5) * stratum + rng.uniform(-jitter, jitter);
    bool ok = true;
    for (const auto& other : out) {
      real d2 = 0.0;
      for (int i = 0; i < 3; ++i) {
        const real d = cand.formants[i] - other.formants[i];
        d2 += d * d;
      }
      if (std::sqrt(d2) < min_sep) {
        ok = false;
        break;
      }
    }
    if (ok) {
      cand.id = "spk" + std::string(out.size() < 10 ? "0" : "") +
                std::to_string(out.size());
      out.push_back(std::move(cand));
    }
  }
  return out;
}

UtteranceSpec sample_utterance(const SpeakerSpec& spk, uint64_t seed) {
  Rng rng(seed);
  UtteranceSpec u;
  u.speaker = spk;
  u.seed = seed;

  // draw the contour style from the speaker's mixture
  real r = rng.uniform();
  int style = kNumStyles - 1;
  real acc = 0.0;
  for (int i = 0; i < kNumStyles; ++i) {
    acc += spk.style_weights[i];
    if (r < acc) {
      style = i;
      break;
    }
  }
  u.style = static_cast<Style>(style);
  u.vib_hz = rng.uniform(2.5, 5.5);
  u.phase0 = rng.uniform(0.0, 2.0 * kPi);

  const int n_vowels = rng.uniform_int(2, 6);
  real t = rng.uniform(0.06, 0.12);  // leading silence
  int prev = -1;
  for (int i = 0; i < n_vowels; ++i) {
    int v = rng.uniform_int(0, kNumVowels - 1);
    if (v == prev) v = (v + 1) % kNumVowels;
    prev = v;
    const real dur = rng.uniform(0.25, 0.65);
    u.segs.push_back({t, dur, v});
    t += dur + rng.uniform(0.08, 0.15);
  }
  u.total_s = std::min(t + rng.uniform(0.04, 0.10), 5.0);
  return u;
}

SynthResult synth_utterance(const UtteranceSpec& spec, int sr) {
  const int n = static_cast<int>(std::lround(spec.total_s * sr));
  std::vector<real> source(n, 0.0);

  // voiced source: bandlimited pulse train following the contour, faded at
  // segment edges
  const real fade_s = 0.012;
  real theta = 0.0;
  for (const auto& seg : spec.segs) {
    const int s0 = static_cast<int>(seg.start_s * sr);
    const int s1 = std::min(n, static_cast<int>((seg.start_s + seg.dur_s) * sr));
    for (int i = s0; i < s1; ++i) {
      const real t = static_cast<real>(i) / sr;
      const real f0 = spec.f0_at(t);
      theta += 2.0 * kPi * f0 / sr;
      if (theta > 2.0 * kPi) theta -= 2.0 * kPi;
      const int n_harm = std::max(1, static_cast<int>(7600.0 / f0));
      real fade = 1.0;
      const real into = (i - s0) / (fade_s * sr);
      const real outof = (s1 - 1 - i) / (fade_s * sr);
      if (into < 1.0) fade *= 0.5 - 0.5 * std::cos(kPi * std::max(into, 0.0));
      if (outof < 1.0) fade *= 0.5 - 0.5 * std::cos(kPi * std::max(outof, 0.0));
      source[i] = fade * pulse(theta, n_harm);
    }
  }

  // per-segment formant cascade; filter state persists so resonances ring
  // into the gaps naturally
  std::vector<real> y(n, 0.0);
  Biquad f1, f2, f3;
  int seg_idx = -1;
  for (int i = 0; i < n; ++i) {
    const real t = static_cast<real>(i) / sr;
    int cur = -1;
    for (size_t k = 0; k < spec.segs.size(); ++k)
      if (t >= spec.segs[k].start_s && t < spec.segs[k].start_s + spec.segs[k].dur_s) {
        cur = static_cast<int>(k);
        break;
      }
    if (cur >= 0 && cur != seg_idx) {
      seg_idx = cur;
      const int v = spec.segs[cur].vowel;
      for (int fi = 0; fi < 3; ++fi) {
        // F1/F2 are the vowel pattern warped by the speaker; F3 is the
        // speaker's own resonance
        const real warped = fi < 2 ? kVowelFormants[v][fi] *
                                         (spec.speaker.formants[fi] / kNeutralFormants[fi])
                                   : spec.speaker.formants[2];
        Biquad fresh = Biquad::resonator(warped, spec.speaker.bandwidths[fi], sr);
        Biquad* dst = fi == 0 ? &f1 : fi == 1 ? &f2 : &f3;
        fresh.y1 = dst->y1;
        fresh.y2 = dst->y2;
        *dst = fresh;
      }
    }
    y[i] = f3.step(f2.step(f1.step(source[i])));
  }

  // speaker tilt (one-pole lowpass) plus a parallel high resonance
  const real c = std::exp(-2.0 * kPi * spec.speaker.tilt_cutoff_hz / sr);
  Biquad hires = Biquad::resonator(spec.speaker.hires_freq, spec.speaker.hires_bw, sr);
  real lp = 0.0;
  for (int i = 0; i < n; ++i) {
    lp = (1.0 - c) * y[i] + c * lp;
    y[i] = lp + 0.08 * spec.speaker.hires_gain * hires.step(lp);
  }

  real peak = 1e-9;
  for (real v : y) peak = std::max(peak, std::fabs(v));
  for (auto& v : y) v *= 0.5 / peak;

  SynthResult out;
  out.wav.sample_rate = sr;
  out.wav.samples = std::move(y);

  // exact ground truth at the 25 Hz pitch frame rate
  const int hop25 = sr / 25;
  const int n25 = dsp::frame_count(n, hop25);
  out.truth.f0.frame_rate = 25.0;
  out.truth.f0.f0_hz.assign(n25, 0.0);
  out.truth.f0.voiced.assign(n25, 0);
  out.truth.vowel_25hz.assign(n25, -1);
  for (const auto& seg : spec.segs)
    out.truth.sample_segs.push_back({static_cast<int>(seg.start_s * sr),
                                     std::min(n, static_cast<int>((seg.start_s + seg.dur_s) * sr)),
                                     seg.vowel});
  for (int fi = 0; fi < n25; ++fi) {
    const int center = fi * hop25;
    for (const auto& seg : out.truth.sample_segs)
      if (center >= seg.start && center < seg.end) {
        out.truth.f0.f0_hz[fi] = spec.f0_at(static_cast<real>(center) / sr);
        out.truth.f0.voiced[fi] = 1;
        out.truth.vowel_25hz[fi] = seg.vowel;
        break;
      }
  }
  return out;
}

std::vector<int> GroundTruth::vowel_labels_at(int n_frames, int hop) const {
  std::vector<int> labels(n_frames, -1);
  for (int t = 0; t < n_frames; ++t) {
    const int center = t * hop;
    for (const auto& seg : sample_segs)
      if (center >= seg.start && center < seg.end) {
        labels[t] = seg.vowel;
        break;
      }
  }
  return labels;
}

namespace {

void write_ground_truth(const GroundTruth& gt, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("corpus: cannot write " + path);
  f << "# f0_hz voiced vowel\n";
  for (int i = 0; i < gt.f0.frames(); ++i)
    f << gt.f0.f0_hz[i] << ' ' << int(gt.f0.voiced[i]) << ' ' << gt.vowel_25hz[i]
      << '\n';
  f << "# segs";
  for (const auto& s : gt.sample_segs)
    f << ' ' << s.start << ':' << s.end << ':' << s.vowel;
  f << '\n';
}

void write_speakers(const std::vector<SpeakerSpec>& spks, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  f.precision(17);
  f << "# id base_pitch range_st f1 f2 f3 b1 b2 b3 tilt hires_f hires_bw hires_g "
       "w_flat w_rise w_fall w_osc style_strength\n";
  for (const auto& s : spks) {
    f << s.id << '\t' << s.base_pitch << '\t' << s.pitch_range_st;
    for (real v : s.formants) f << '\t' << v;
    for (real v : s.bandwidths) f << '\t' << v;
    f << '\t' << s.tilt_cutoff_hz << '\t' << s.hires_freq << '\t' << s.hires_bw
      << '\t' << s.hires_gain;
    for (real v : s.style_weights) f << '\t' << v;
    f << '\t' << s.style_strength() << '\n';
  }
}

}  // namespace

std::vector<ManifestEntry> build_corpus(int n_speakers, int n_utts_per_speaker,
                                        uint64_t seed, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto speakers = sample_speaker_set(n_speakers, seed);

  // zero-shot split: the last fifth of speakers is test-only
  const int n_test_spk = std::max(1, (n_speakers + 4) / 5);
  std::vector<ManifestEntry> manifest;

  Rng rng(seed ^ 0xc2b2ae3d27d4eb4fULL);
  for (int si = 0; si < n_speakers; ++si) {
    const bool test_spk = si >= n_speakers - n_test_spk;
    for (int ui = 0; ui < n_utts_per_speaker; ++ui) {
      const uint64_t utt_seed = rng.split(static_cast<uint64_t>(si) << 20 | ui).u64();
      auto spec = sample_utterance(speakers[si], utt_seed);
      auto synth = synth_utterance(spec);

      char name[64];
      std::snprintf(name, sizeof name, "%s_utt%03d.wav", speakers[si].id.c_str(), ui);
      const std::string wav_path = (fs::path(out_dir) / name).string();
      dsp::write_wav(synth.wav, wav_path);
      write_ground_truth(synth.truth, wav_path + ".truth");

      std::string split;
      if (test_spk) {
        split = "test";
      } else {
        const uint64_t h = fnv1a(name, std::strlen(name));
        split = (h % 8 == 0) ? "dev" : "train";
      }
      manifest.push_back({wav_path, speakers[si].id, split});
    }
  }

  write_speakers(speakers, (fs::path(out_dir) / "speakers.tsv").string());
  std::ofstream mf((fs::path(out_dir) / "manifest.tsv").string(), std::ios::trunc);
  for (const auto& e : manifest)
    mf << fs::path(e.path).filename().string() << '\t' << e.speaker_id << '\t'
       << e.split << '\n';
  return manifest;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("corpus: cannot open manifest: " + path);
  const auto dir = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    ManifestEntry e;
    std::string file;
    if (!std::getline(is, file, '\t') || !std::getline(is, e.speaker_id, '\t') ||
        !std::getline(is, e.split))
      throw std::runtime_error("corpus: malformed manifest line: " + line);
    e.path = (dir / file).string();
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<SpeakerSpec> read_speakers(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("corpus: cannot open speakers file: " + path);
  std::vector<SpeakerSpec> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    SpeakerSpec s;
    is >> s.id >> s.base_pitch >> s.pitch_range_st;
    for (auto& v : s.formants) is >> v;
    for (auto& v : s.bandwidths) is >> v;
    is >> s.tilt_cutoff_hz >> s.hires_freq >> s.hires_bw >> s.hires_gain;
    for (auto& v : s.style_weights) is >> v;
    if (!is) throw std::runtime_error("corpus: malformed speakers line: " + line);
    out.push_back(std::move(s));
  }
  return out;
}

GroundTruth read_ground_truth(const std::string& wav_path) {
  const std::string path = wav_path + ".truth";
  std::ifstream f(path);
  if (!f) throw std::runtime_error("corpus: missing ground truth sidecar: " + path);
  GroundTruth gt;
  gt.f0.frame_rate = 25.0;
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("# segs", 0) == 0) {
      std::istringstream is(line.substr(6));
      std::string tok;
      while (is >> tok) {
        GroundTruth::Seg seg;
        if (std::sscanf(tok.c_str(), "%d:%d:%d", &seg.start, &seg.end, &seg.vowel) == 3)
          gt.sample_segs.push_back(seg);
      }
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    real f0;
    int voiced, vowel;
    if (is >> f0 >> voiced >> vowel) {
      gt.f0.f0_hz.push_back(f0);
      gt.f0.voiced.push_back(static_cast<uint8_t>(voiced));
      gt.vowel_25hz.push_back(vowel);
    }
  }
  return gt;
}

}  // namespace pfvc::corpus
