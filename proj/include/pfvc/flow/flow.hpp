#pragma once

#include <functional>
#include <vector>

#include "pfvc/core/checkpoint.hpp"
#include "pfvc/core/nn.hpp"
#include "pfvc/pitch/pitch_vqvae.hpp"
#include "pfvc/timbre/timbre.hpp"

namespace pfvc::flow {

using core::Graph;
using core::Parameter;
using core::Tensor;
using core::real;
using pfvc::Rng;

struct FlowConfig {
  // flow matching / sampling
  real sigma_min = 1e-4;
  int ode_steps = 10;
  real cfg_scale = 1.0;       // alpha in (1+a)*v_cond - a*v_uncond
  real cond_dropout_p = 0.2;  // condition -> null during training
  real mask_ratio_lo = 0.3;
  real mask_ratio_hi = 0.7;
  int mask_spans_min = 1;
  int mask_spans_max = 3;
  bool midpoint = false;  // false = Euler

  // architecture
  int n_mels = 80;
  int d_model = 128;
  int d_spk = 64;
  int hidden = 256;
  int blocks = 4;
  int kernel = 5;
  int sem_blocks = 2;
  int time_dim = 64;
  int sem_vocab = 16;    // semantic token count (k-means K)
  int pitch_codes = 64;  // pitch codebook size

  // ablations
  bool use_pitch = true;
  bool use_timbre_tokens = true;

  // affine normalization applied to log-mels at the flow boundary so the
  // data space is roughly unit scale against the N(0, I) prior
  real mel_mean = -3.4;
  real mel_std = 4.3;
};

inline Tensor normalize_mel(const Tensor& mel, const FlowConfig& cfg) {
  Tensor out = mel;
  for (auto& v : out.v) v = (v - cfg.mel_mean) / cfg.mel_std;
  return out;
}
inline Tensor denormalize_mel(const Tensor& mel, const FlowConfig& cfg) {
  Tensor out = mel;
  for (auto& v : out.v) v = v * cfg.mel_std + cfg.mel_mean;
  return out;
}

// phi_t(x) = (1 - (1 - sigma_min) t) x0 + t x1
Tensor ot_flow(const Tensor& x0, const Tensor& x1, real t, real sigma_min);
// u = x1 - (1 - sigma_min) x0, constant in t
Tensor ot_target(const Tensor& x0, const Tensor& x1, real sigma_min);
// (1 + alpha) v_cond - alpha v_uncond
Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, real alpha);

// fixed-step integration from t=0 to t=1; `post_step` (if set) runs after
// every state update, including initialization
Tensor integrate_ode(const std::function<Tensor(const Tensor&, real)>& field,
                     Tensor x0, int steps, bool midpoint,
                     const std::function<void(Tensor&)>& post_step = nullptr);

struct MaskedPitch {
  std::vector<int> ids;         // with null tokens in masked spans
  std::vector<uint8_t> voiced;  // 0/1, or 2 where nulled
  std::vector<uint8_t> masked;  // 1 inside masked spans
};

// replaces 1..3 contiguous spans (total fraction drawn from the configured
// range) with the null token; positions before `protect_prefix` are never
// masked
MaskedPitch mask_pitch_spans(const pitch::PitchTokenSeq& seq, const FlowConfig& cfg,
                             uint64_t seed, int protect_prefix = 0);

inline int null_pitch_id(const FlowConfig& cfg) { return cfg.pitch_codes; }
constexpr int kVoicedNull = 2;

// nearest-neighbor upsampling index from mel frame to 25 Hz pitch step
inline int pitch_index_for_frame(int mel_frame, int n_pitch) {
  const int j = static_cast<int>(mel_frame * 0.4);
  return j < n_pitch ? j : (n_pitch > 0 ? n_pitch - 1 : 0);
}

// Conformer-style encoder over semantic ids: self-attention, cross-attention
// to the timbre tokens, a conv module, and a feed-forward, all pre-norm with
// residuals.
class SemanticEncoder {
 public:
  SemanticEncoder() = default;
  SemanticEncoder(const FlowConfig& cfg, const Rng& rng);
  // timbre_tokens < 0 (or use_timbre_tokens=false) skips the cross-attention
  int encode(Graph& g, const std::vector<int>& sem_ids, int timbre_tokens);
  std::vector<Parameter*> params();
  void save_into(core::Checkpoint& ck) const;
  void load_from(const core::Checkpoint& ck);

 private:
  struct Block {
    core::Attention self_attn, cross_attn;
    core::Conv1d cv1, cv2;
    core::Linear ff1, ff2;
    core::LayerNorm ln1, ln2, ln3, ln4;
  };
  FlowConfig cfg_;
  core::Embedding tok_emb_;
  std::vector<Block> blocks_;
  core::LayerNorm out_ln_;
};

// pitch token + voicing embedding, upsampled to the mel frame rate
class PitchEmbedder {
 public:
  PitchEmbedder() = default;
  PitchEmbedder(const FlowConfig& cfg, const Rng& rng);
  int embed(Graph& g, const std::vector<int>& ids, const std::vector<uint8_t>& voiced,
            int n_mel_frames);
  std::vector<Parameter*> params();
  void save_into(core::Checkpoint& ck) const;
  void load_from(const core::Checkpoint& ck);

 private:
  core::Embedding tok_emb_, voice_emb_;
};

// v_t = f(x_t, t; conditions): conv + self-attention blocks over the
// channel-concatenated input with a sinusoidal time embedding per block
class FlowDecoder {
 public:
  FlowDecoder() = default;
  FlowDecoder(const FlowConfig& cfg, const Rng& rng);
  int field(Graph& g, int xt, int sem, int pitch, int spk_rows, real t);
  std::vector<Parameter*> params();
  void save_into(core::Checkpoint& ck) const;
  void load_from(const core::Checkpoint& ck);

 private:
  struct Block {
    core::Linear time_proj;
    core::Conv1d cv1, cv2;
    core::Attention attn;
    core::LayerNorm ln1, ln2;
  };
  FlowConfig cfg_;
  core::Linear in_proj_, out_proj_;
  core::LayerNorm out_ln_;
  std::vector<Block> blocks_;
};

// The trainable conversion model: timbre encoder, semantic encoder, pitch
// embedder, flow decoder, and the learned null-condition embeddings.
class CondFlow {
 public:
  CondFlow() = default;
  CondFlow(const FlowConfig& cfg, const Rng& rng);

  FlowConfig cfg;
  timbre::TimbreEncoder timbre_enc;
  SemanticEncoder semantic;
  PitchEmbedder pitch_emb;
  FlowDecoder decoder;
  Parameter null_semantic;  // [1 x d_model]

  std::vector<Parameter*> params();
  void save_into(core::Checkpoint& ck) const;
  void load_from(const core::Checkpoint& ck);
};

// Assembled (value-level) condition for sampling.
struct SampledCond {
  Tensor semantic;   // [T x d_model]
  Tensor pitch;      // [T x d_model]
  Tensor spk;        // [1 x d_spk]
  int prompt_len = 0;
  Tensor prompt_mel;  // [prompt_len x n_mels]
  int frames = 0;
};

// run the encoders once and freeze the condition streams
SampledCond assemble_condition(CondFlow& model, const std::vector<int>& sem_ids,
                               const std::vector<int>& pitch_ids,
                               const std::vector<uint8_t>& pitch_voiced,
                               const Tensor& ref_mel, int prompt_len,
                               const Tensor& prompt_mel);

// CFG-guided ODE sampling of a mel spectrogram
Tensor sample_ode(CondFlow& model, const SampledCond& cond, const FlowConfig& cfg,
                  uint64_t seed);

// One training item: everything precomputed outside the graph.
struct TrainItem {
  Tensor mel;                    // x1 [T x 80]
  std::vector<int> sem_ids;      // [T]
  pitch::PitchTokenSeq pitch_tokens;
  Tensor ref_mel;                // timbre reference
};

struct StepInfo {
  real loss = 0.0;
  bool uncond = false;
  int prompt_len = 0;
};

// builds the graph for one training example and returns the loss node;
// t/x0/masking/prompt are drawn from `rng` unless `fixed_t` >= 0 and
// `fixed_x0`/`fixed_choices` are provided (tests use this for oracles)
int cfm_loss(Graph& g, CondFlow& model, const TrainItem& item, const FlowConfig& cfg,
             Rng& rng, StepInfo* info = nullptr, real fixed_t = -1.0,
             const Tensor* fixed_x0 = nullptr, bool force_cond = false,
             int force_prompt_len = -1);

}  // namespace pfvc::flow
