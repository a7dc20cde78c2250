#pragma once

#include <string>
#include <vector>

#include "pfvc/core/checkpoint.hpp"
#include "pfvc/core/nn.hpp"
#include "pfvc/dsp/dsp.hpp"

namespace pfvc::pitch {

using core::Graph;
using core::Parameter;
using core::Tensor;
using core::real;

struct SmnF0Track {
  std::vector<real> values;      // log f - speaker mean; 0 at unvoiced steps
  std::vector<uint8_t> voiced;
  real speaker_log_mean = 0.0;
  int frames() const { return static_cast<int>(values.size()); }
};

// arithmetic mean of log f0 over voiced frames of all tracks
real speaker_log_mean(const std::vector<dsp::F0Track>& tracks);
real utterance_log_mean(const dsp::F0Track& track);  // per-utterance proxy

SmnF0Track smn_logf0(const dsp::F0Track& track, real speaker_log_mean);

struct PitchTokenSeq {
  std::vector<int> ids;          // codebook indices in [0, codebook_size)
  std::vector<uint8_t> voiced;   // carried out of band
  static constexpr real kRate = 25.0;
  int length() const { return static_cast<int>(ids.size()); }
};

struct PitchVqvaeConfig {
  int codebook_size = 64;
  int code_dim = 128;
  int hidden = 128;
  int kernel = 5;
  real recon_weight = 1.0;
  real commit_weight = 0.15;
  real vq_weight = 0.05;
  bool ema = true;
  real ema_decay = 0.99;
  int restart_window = 200;  // steps a code may starve before reseeding
};

struct PitchCodebook {
  Tensor codes;                 // [size x dim]
  std::vector<real> ema_counts;
  Tensor ema_sums;
  std::vector<int64_t> usage;   // cumulative assignments
  std::vector<int> last_used;   // training step of last assignment
};

struct QuantizeResult {
  std::vector<int> ids;
  Tensor quantized;  // [T x dim]
  int restarts = 0;
};

class PitchVqvae {
 public:
  PitchVqvae(const PitchVqvaeConfig& cfg, const Rng& rng);

  // x is [T x 2]: (SMN value with 0 at unvoiced, voiced flag)
  int encode(Graph& g, int x);
  // quantized latents -> (recon id, voicing logit id)
  std::pair<int, int> decode(Graph& g, int q);

  // nearest-code assignment; in training mode also applies EMA statistics
  // updates and dead-code restarts
  QuantizeResult quantize(const Tensor& latents, bool training, Rng* restart_rng);

  // full loss on one track; returns the loss node. Parts are exposed for
  // tests via last_parts.
  struct LossParts {
    real recon = 0, voicing = 0, commit = 0, vq = 0, total = 0;
  };
  int loss(Graph& g, const SmnF0Track& track, bool training, Rng* restart_rng);
  LossParts last_parts;

  std::vector<Parameter*> params();  // gradient-trained parameters
  void save_into(core::Checkpoint& ck) const;
  void load_from(const core::Checkpoint& ck);

  static Tensor input_features(const SmnF0Track& track);

  PitchVqvaeConfig cfg;
  PitchCodebook codebook;
  int train_steps = 0;

 private:
  core::Conv1d e1_, e2_, e3_, d1_, d2_;
  core::Conv1d d_smn_, d_voice_;
  Parameter codebook_param_;  // gradient path when EMA is disabled
};

// 25 Hz tokens for a waveform; emits floor(samples / (sr/25)) steps
PitchTokenSeq tokenize_utterance(const dsp::Waveform& w, real speaker_log_mean,
                                 PitchVqvae& model, const dsp::F0Config& f0cfg);

// debug dump: one line per utterance, space-separated ids, "U" suffix on
// unvoiced steps
std::string format_token_line(const PitchTokenSeq& seq);

}  // namespace pfvc::pitch
