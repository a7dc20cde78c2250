#include "pfvc/flow/flow.hpp"

#include <cmath>
#include <stdexcept>

namespace pfvc::flow {

Tensor ot_flow(const Tensor& x0, const Tensor& x1, real t, real sigma_min) {
  if (!x0.same_shape(x1))
    throw std::runtime_error("ot_flow: shape mismatch " + x0.shape_str() + " vs " +
                             x1.shape_str());
  Tensor out = x0;
  // algebraically 1 - (1 - sigma_min) t, written so both endpoints are exact
  const real a = (1.0 - t) + sigma_min * t;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a * x0.v[i] + t * x1.v[i];
  return out;
}

Tensor ot_target(const Tensor& x0, const Tensor& x1, real sigma_min) {
  if (!x0.same_shape(x1))
    throw std::runtime_error("ot_target: shape mismatch " + x0.shape_str() + " vs " +
                             x1.shape_str());
  Tensor out = x0;
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = x1.v[i] - (1.0 - sigma_min) * x0.v[i];
  return out;
}

Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, real alpha) {
  if (!v_cond.same_shape(v_uncond))
    throw std::runtime_error("cfg_combine: shape mismatch " + v_cond.shape_str() +
                             " vs " + v_uncond.shape_str());
  Tensor out = v_cond;
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = (1.0 + alpha) * v_cond.v[i] - alpha * v_uncond.v[i];
  return out;
}

Tensor integrate_ode(const std::function<Tensor(const Tensor&, real)>& field,
                     Tensor x0, int steps, bool midpoint,
                     const std::function<void(Tensor&)>& post_step) {
  if (steps < 1) throw std::runtime_error("integrate_ode: steps must be >= 1");
  Tensor x = std::move(x0);
  if (post_step) post_step(x);
  const real dt = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    const real t = static_cast<real>(k) / steps;
    if (midpoint) {
      Tensor v1 = field(x, t);
      Tensor xm = x;
      for (size_t i = 0; i < x.v.size(); ++i) xm.v[i] += 0.5 * dt * v1.v[i];
      Tensor v2 = field(xm, t + 0.5 * dt);
      for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += dt * v2.v[i];
    } else {
      Tensor v = field(x, t);
      for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += dt * v.v[i];
    }
    if (post_step) post_step(x);
  }
  return x;
}

MaskedPitch mask_pitch_spans(const pitch::PitchTokenSeq& seq, const FlowConfig& cfg,
                             uint64_t seed, int protect_prefix) {
  const int n = seq.length();
  MaskedPitch out;
  out.ids = seq.ids;
  out.voiced.assign(seq.voiced.begin(), seq.voiced.end());
  out.masked.assign(n, 0);
  const int maskable = n - protect_prefix;
  if (maskable <= 0) return out;

  Rng rng(seed);
  const real ratio = rng.uniform(cfg.mask_ratio_lo, cfg.mask_ratio_hi);
  int total = static_cast<int>(std::lround(ratio * maskable));
  if (total <= 0) return out;
  if (total > maskable) total = maskable;

  const int max_spans = std::min(cfg.mask_spans_max, total);
  const int n_spans =
      std::max(cfg.mask_spans_min, std::min(max_spans,
                                            rng.uniform_int(cfg.mask_spans_min,
                                                            cfg.mask_spans_max)));
  // split the mask budget across spans, then place each span in free space
  std::vector<int> span_len(n_spans, total / n_spans);
  for (int i = 0; i < total % n_spans; ++i) ++span_len[i];

  for (int s = 0; s < n_spans; ++s) {
    const int len = span_len[s];
    if (len <= 0) continue;
    // collect candidate starts with no overlap with existing spans
    std::vector<int> starts;
    for (int st = protect_prefix; st + len <= n; ++st) {
      bool free = true;
      for (int i = st; i < st + len; ++i)
        if (out.masked[i]) {
          free = false;
          break;
        }
      if (free) starts.push_back(st);
    }
    if (starts.empty()) continue;
    const int st = starts[rng.uniform_int(0, static_cast<int>(starts.size()) - 1)];
    for (int i = st; i < st + len; ++i) {
      out.masked[i] = 1;
      out.ids[i] = null_pitch_id(cfg);
      out.voiced[i] = kVoicedNull;
    }
  }
  return out;
}

SemanticEncoder::SemanticEncoder(const FlowConfig& cfg, const Rng& rng) : cfg_(cfg) {
  const int d = cfg.d_model;
  tok_emb_ = core::Embedding("sem.tok", cfg.sem_vocab, d, rng);
  for (int b = 0; b < cfg.sem_blocks; ++b) {
    const std::string p = "sem.b" + std::to_string(b);
    Block blk;
    blk.self_attn = core::Attention(p + ".self", d, d, d, rng);
    blk.cross_attn = core::Attention(p + ".cross", d, d, d, rng);
    blk.cv1 = core::Conv1d(p + ".cv1", d, d, 3, rng);
    blk.cv2 = core::Conv1d(p + ".cv2", d, d, 3, rng);
    blk.ff1 = core::Linear(p + ".ff1", d, 2 * d, rng);
    blk.ff2 = core::Linear(p + ".ff2", 2 * d, d, rng);
    blk.ln1 = core::LayerNorm(p + ".ln1", d);
    blk.ln2 = core::LayerNorm(p + ".ln2", d);
    blk.ln3 = core::LayerNorm(p + ".ln3", d);
    blk.ln4 = core::LayerNorm(p + ".ln4", d);
    blocks_.push_back(std::move(blk));
  }
  out_ln_ = core::LayerNorm("sem.out_ln", d);
}

int SemanticEncoder::encode(Graph& g, const std::vector<int>& sem_ids,
                            int timbre_tokens) {
  int h = tok_emb_.out(g, sem_ids);
  for (auto& blk : blocks_) {
    int n1 = blk.ln1.out(g, h);
    h = g.add(h, blk.self_attn.out(g, n1, n1));
    if (timbre_tokens >= 0 && cfg_.use_timbre_tokens) {
      int n2 = blk.ln2.out(g, h);
      h = g.add(h, blk.cross_attn.out(g, n2, timbre_tokens));
    }
    int n3 = blk.ln3.out(g, h);
    h = g.add(h, blk.cv2.out(g, g.gelu(blk.cv1.out(g, n3))));
    int n4 = blk.ln4.out(g, h);
    h = g.add(h, blk.ff2.out(g, g.gelu(blk.ff1.out(g, n4))));
  }
  return out_ln_.out(g, h);
}

std::vector<Parameter*> SemanticEncoder::params() {
  std::vector<Parameter*> ps;
  tok_emb_.params(ps);
  for (auto& blk : blocks_) {
    blk.self_attn.params(ps);
    if (cfg_.use_timbre_tokens) blk.cross_attn.params(ps);
    blk.cv1.params(ps);
    blk.cv2.params(ps);
    blk.ff1.params(ps);
    blk.ff2.params(ps);
    blk.ln1.params(ps);
    blk.ln2.params(ps);
    blk.ln3.params(ps);
    blk.ln4.params(ps);
  }
  out_ln_.params(ps);
  return ps;
}

namespace {

void put_params(core::Checkpoint& ck, const std::vector<Parameter*>& ps) {
  for (const auto* p : ps) ck.put(p->name, p->value);
}
void get_params(const core::Checkpoint& ck, const std::vector<Parameter*>& ps) {
  for (auto* p : ps) p->value = ck.require(p->name);
}

}  // namespace

void SemanticEncoder::save_into(core::Checkpoint& ck) const {
  put_params(ck, const_cast<SemanticEncoder*>(this)->params());
}
void SemanticEncoder::load_from(const core::Checkpoint& ck) { get_params(ck, params()); }

PitchEmbedder::PitchEmbedder(const FlowConfig& cfg, const Rng& rng) {
  tok_emb_ = core::Embedding("pitchcond.tok", cfg.pitch_codes + 1, cfg.d_model, rng);
  voice_emb_ = core::Embedding("pitchcond.voice", 3, cfg.d_model, rng);
}

int PitchEmbedder::embed(Graph& g, const std::vector<int>& ids,
                         const std::vector<uint8_t>& voiced, int n_mel_frames) {
  const int np = static_cast<int>(ids.size());
  std::vector<int> up_ids(n_mel_frames), up_voice(n_mel_frames);
  for (int i = 0; i < n_mel_frames; ++i) {
    const int j = pitch_index_for_frame(i, np);
    up_ids[i] = np > 0 ? ids[j] : 0;
    up_voice[i] = np > 0 ? voiced[j] : kVoicedNull;
  }
  return g.add(tok_emb_.out(g, up_ids), voice_emb_.out(g, up_voice));
}

std::vector<Parameter*> PitchEmbedder::params() {
  std::vector<Parameter*> ps;
  tok_emb_.params(ps);
  voice_emb_.params(ps);
  return ps;
}
void PitchEmbedder::save_into(core::Checkpoint& ck) const {
  put_params(ck, const_cast<PitchEmbedder*>(this)->params());
}
void PitchEmbedder::load_from(const core::Checkpoint& ck) { get_params(ck, params()); }

FlowDecoder::FlowDecoder(const FlowConfig& cfg, const Rng& rng) : cfg_(cfg) {
  const int h = cfg.hidden;
  const int in_dim = cfg.n_mels + cfg.d_model + (cfg.use_pitch ? cfg.d_model : 0) +
                     cfg.d_spk;
  in_proj_ = core::Linear("dec.in", in_dim, h, rng);
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = "dec.b" + std::to_string(b);
    Block blk;
    blk.time_proj = core::Linear(p + ".time", cfg.time_dim, h, rng);
    blk.cv1 = core::Conv1d(p + ".cv1", h, h, cfg.kernel, rng);
    blk.cv2 = core::Conv1d(p + ".cv2", h, h, cfg.kernel, rng);
    blk.attn = core::Attention(p + ".attn", h, h, h, rng);
    blk.ln1 = core::LayerNorm(p + ".ln1", h);
    blk.ln2 = core::LayerNorm(p + ".ln2", h);
    blocks_.push_back(std::move(blk));
  }
  out_ln_ = core::LayerNorm("dec.out_ln", h);
  out_proj_ = core::Linear("dec.out", h, cfg.n_mels, rng);
}

int FlowDecoder::field(Graph& g, int xt, int sem, int pitch, int spk_rows, real t) {
  const int frames = g.val(xt).rows();
  if (g.val(sem).rows() != frames ||
      (cfg_.use_pitch && g.val(pitch).rows() != frames) ||
      g.val(spk_rows).rows() != frames)
    throw std::runtime_error("vector_field: condition length mismatch with x");
  std::vector<int> parts = {xt, sem};
  if (cfg_.use_pitch) parts.push_back(pitch);
  parts.push_back(spk_rows);
  int h = in_proj_.out(g, g.concat_cols(parts));

  const Tensor temb = core::sinusoidal_embedding(t, cfg_.time_dim);
  for (auto& blk : blocks_) {
    int te = blk.time_proj.out(g, g.input(temb));  // [1 x hidden]
    h = g.add(h, te);                              // row broadcast
    int n1 = blk.ln1.out(g, h);
    h = g.add(h, blk.cv2.out(g, g.gelu(blk.cv1.out(g, n1))));
    int n2 = blk.ln2.out(g, h);
    h = g.add(h, blk.attn.out(g, n2, n2));
  }
  return out_proj_.out(g, out_ln_.out(g, h));
}

std::vector<Parameter*> FlowDecoder::params() {
  std::vector<Parameter*> ps;
  in_proj_.params(ps);
  for (auto& blk : blocks_) {
    blk.time_proj.params(ps);
    blk.cv1.params(ps);
    blk.cv2.params(ps);
    blk.attn.params(ps);
    blk.ln1.params(ps);
    blk.ln2.params(ps);
  }
  out_ln_.params(ps);
  out_proj_.params(ps);
  return ps;
}
void FlowDecoder::save_into(core::Checkpoint& ck) const {
  put_params(ck, const_cast<FlowDecoder*>(this)->params());
}
void FlowDecoder::load_from(const core::Checkpoint& ck) { get_params(ck, params()); }

CondFlow::CondFlow(const FlowConfig& c, const Rng& rng)
    : cfg(c),
      timbre_enc(timbre::TimbreConfig{c.n_mels, c.d_model, c.d_spk, 64,
                                      c.use_timbre_tokens},
                 rng),
      semantic(c, rng),
      pitch_emb(c, rng),
      decoder(c, rng),
      null_semantic("flow.null_semantic",
                    core::init_normal("flow.null_semantic", {1, c.d_model}, 0.05, rng)) {}

std::vector<Parameter*> CondFlow::params() {
  std::vector<Parameter*> ps = timbre_enc.params();
  auto add = [&](std::vector<Parameter*> more) {
    ps.insert(ps.end(), more.begin(), more.end());
  };
  add(semantic.params());
  if (cfg.use_pitch) add(pitch_emb.params());
  add(decoder.params());
  ps.push_back(&null_semantic);
  return ps;
}

void CondFlow::save_into(core::Checkpoint& ck) const {
  timbre_enc.save_into(ck);
  semantic.save_into(ck);
  pitch_emb.save_into(ck);
  decoder.save_into(ck);
  ck.put(null_semantic.name, null_semantic.value);
}

void CondFlow::load_from(const core::Checkpoint& ck) {
  timbre_enc.load_from(ck);
  semantic.load_from(ck);
  pitch_emb.load_from(ck);
  decoder.load_from(ck);
  null_semantic.value = ck.require(null_semantic.name);
}

SampledCond assemble_condition(CondFlow& model, const std::vector<int>& sem_ids,
                               const std::vector<int>& pitch_ids,
                               const std::vector<uint8_t>& pitch_voiced,
                               const Tensor& ref_mel, int prompt_len,
                               const Tensor& prompt_mel) {
  SampledCond cond;
  cond.frames = static_cast<int>(sem_ids.size());
  cond.prompt_len = prompt_len;
  cond.prompt_mel = prompt_mel;

  Graph g;
  int th = model.timbre_enc.feature_encoder(g, g.input(ref_mel));
  int ttok = model.cfg.use_timbre_tokens ? model.timbre_enc.extract_tokens(g, th) : -1;
  int spk = model.timbre_enc.global_embedding(g, th);
  int sem = model.semantic.encode(g, sem_ids, ttok);
  int pit = model.pitch_emb.embed(g, pitch_ids, pitch_voiced, cond.frames);

  cond.semantic = g.val(sem);
  cond.pitch = g.val(pit);
  cond.spk = g.val(spk);
  return cond;
}

namespace {

Tensor null_pitch_embedding(CondFlow& model, int frames) {
  Graph g;
  std::vector<int> ids(std::max(1, frames / 2), null_pitch_id(model.cfg));
  std::vector<uint8_t> voiced(ids.size(), kVoicedNull);
  int pit = model.pitch_emb.embed(g, ids, voiced, frames);
  return g.val(pit);
}

}  // namespace

Tensor sample_ode(CondFlow& model, const SampledCond& cond, const FlowConfig& cfg,
                  uint64_t seed) {
  const int t_frames = cond.frames;
  const int mels = cfg.n_mels;

  Rng rng(seed);
  Tensor x0 = Tensor::zeros({t_frames, mels});
  for (auto& v : x0.v) v = rng.normal();

  Tensor null_sem = Tensor::zeros({t_frames, cfg.d_model});
  for (int i = 0; i < t_frames; ++i)
    for (int j = 0; j < cfg.d_model; ++j)
      null_sem(i, j) = model.null_semantic.value(0, j);
  Tensor null_pit = null_pitch_embedding(model, t_frames);
  Tensor zero_spk = Tensor::zeros({t_frames, cfg.d_spk});

  Tensor spk_rows = Tensor::zeros({t_frames, cfg.d_spk});
  for (int i = 0; i < t_frames; ++i)
    for (int j = 0; j < cfg.d_spk; ++j) spk_rows(i, j) = cond.spk(0, j);

  auto eval_field = [&](const Tensor& x, real t, bool with_cond) {
    Graph g;
    int v = model.decoder.field(g, g.input(x), g.input(with_cond ? cond.semantic : null_sem),
                                g.input(with_cond ? cond.pitch : null_pit),
                                g.input(with_cond ? spk_rows : zero_spk), t);
    return g.val(v);
  };

  auto field = [&](const Tensor& x, real t) {
    Tensor v_cond = eval_field(x, t, true);
    if (cfg.cfg_scale == 0.0) return v_cond;
    Tensor v_uncond = eval_field(x, t, false);
    return cfg_combine(v_cond, v_uncond, cfg.cfg_scale);
  };

  auto clamp_prompt = [&](Tensor& x) {
    for (int i = 0; i < cond.prompt_len; ++i)
      for (int j = 0; j < mels; ++j) x(i, j) = cond.prompt_mel(i, j);
  };

  return integrate_ode(field, std::move(x0), cfg.ode_steps, cfg.midpoint,
                       cond.prompt_len > 0 ? std::function<void(Tensor&)>(clamp_prompt)
                                           : nullptr);
}

int cfm_loss(Graph& g, CondFlow& model, const TrainItem& item, const FlowConfig& cfg,
             Rng& rng, StepInfo* info, real fixed_t, const Tensor* fixed_x0,
             bool force_cond, int force_prompt_len) {
  const int t_frames = item.mel.rows();
  const int mels = cfg.n_mels;

  const bool uncond = force_cond ? false : rng.uniform() < cfg.cond_dropout_p;
  int prompt_len;
  if (force_prompt_len >= 0) {
    prompt_len = force_prompt_len;
  } else {
    prompt_len = (uncond || rng.uniform() < 0.3)
                     ? 0
                     : static_cast<int>(rng.uniform(0.15, 0.45) * t_frames);
  }

  // timbre streams from the reference utterance
  int th = model.timbre_enc.feature_encoder(g, g.input(item.ref_mel));
  int ttok = model.cfg.use_timbre_tokens ? model.timbre_enc.extract_tokens(g, th) : -1;
  int spk = model.timbre_enc.global_embedding(g, th);

  int sem;
  if (uncond) {
    sem = g.broadcast_rows(g.param(model.null_semantic), t_frames);
  } else {
    sem = model.semantic.encode(g, item.sem_ids, ttok);
  }

  // pitch stream: masked spans outside the prompt prefix; fully null when
  // unconditional
  const int prompt_p25 = static_cast<int>(prompt_len * 0.4);
  int pit = -1;
  std::vector<int> pids;
  std::vector<uint8_t> pvoiced;
  if (uncond) {
    pids.assign(std::max(1, item.pitch_tokens.length()), null_pitch_id(cfg));
    pvoiced.assign(pids.size(), kVoicedNull);
  } else {
    auto masked = mask_pitch_spans(item.pitch_tokens, cfg, rng.u64(), prompt_p25);
    pids = std::move(masked.ids);
    pvoiced = std::move(masked.voiced);
  }
  if (cfg.use_pitch) pit = model.pitch_emb.embed(g, pids, pvoiced, t_frames);

  int spk_rows;
  if (uncond) {
    spk_rows = g.input(Tensor::zeros({t_frames, cfg.d_spk}));
  } else {
    spk_rows = g.broadcast_rows(spk, t_frames);
  }

  const real t = fixed_t >= 0.0 ? fixed_t : rng.uniform();
  Tensor x0 = Tensor::zeros({t_frames, mels});
  if (fixed_x0) {
    x0 = *fixed_x0;
  } else {
    for (auto& v : x0.v) v = rng.normal();
  }

  Tensor xt = ot_flow(x0, item.mel, t, cfg.sigma_min);
  for (int i = 0; i < prompt_len; ++i)
    for (int j = 0; j < mels; ++j) xt(i, j) = item.mel(i, j);
  Tensor u = ot_target(x0, item.mel, cfg.sigma_min);

  int v = model.decoder.field(g, g.input(xt), sem,
                              cfg.use_pitch ? pit : g.input(Tensor::zeros({t_frames, cfg.d_model})),
                              spk_rows, t);

  Tensor loss_mask = Tensor::zeros({t_frames, mels});
  for (int i = prompt_len; i < t_frames; ++i)
    for (int j = 0; j < mels; ++j) loss_mask(i, j) = 1.0;
  int loss = core::masked_mse(g, v, g.input(u), loss_mask);

  if (info) {
    info->loss = g.val(loss).v[0];
    info->uncond = uncond;
    info->prompt_len = prompt_len;
  }
  return loss;
}

}  // namespace pfvc::flow
