#include "pfvc/pitch/pitch_vqvae.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pfvc::pitch {

real speaker_log_mean(const std::vector<dsp::F0Track>& tracks) {
  real sum = 0.0;
  int64_t n = 0;
  for (const auto& t : tracks)
    for (int i = 0; i < t.frames(); ++i)
      if (t.voiced[i] && t.f0_hz[i] > 0.0) {
        sum += std::log(t.f0_hz[i]);
        ++n;
      }
  if (n == 0)
    throw std::runtime_error("speaker_log_mean: undefined speaker mean (no voiced frames)");
  return sum / n;
}

real utterance_log_mean(const dsp::F0Track& track) {
  return speaker_log_mean({track});
}

SmnF0Track smn_logf0(const dsp::F0Track& track, real mean) {
  SmnF0Track out;
  out.speaker_log_mean = mean;
  out.values.assign(track.frames(), 0.0);
  out.voiced.assign(track.voiced.begin(), track.voiced.end());
  for (int i = 0; i < track.frames(); ++i)
    if (track.voiced[i] && track.f0_hz[i] > 0.0)
      out.values[i] = std::log(track.f0_hz[i]) - mean;
  return out;
}

PitchVqvae::PitchVqvae(const PitchVqvaeConfig& c, const Rng& rng) : cfg(c) {
  const int h = cfg.hidden, k = cfg.kernel;
  e1_ = core::Conv1d("pitch.enc1", 2, h, k, rng);
  e2_ = core::Conv1d("pitch.enc2", h, h, k, rng);
  e3_ = core::Conv1d("pitch.enc3", h, cfg.code_dim, k, rng);
  d1_ = core::Conv1d("pitch.dec1", cfg.code_dim, h, k, rng);
  d2_ = core::Conv1d("pitch.dec2", h, h, k, rng);
  d_smn_ = core::Conv1d("pitch.dec_smn", h, 1, k, rng);
  d_voice_ = core::Conv1d("pitch.dec_voice", h, 1, k, rng);

  codebook.codes = core::init_normal("pitch.codebook", {cfg.codebook_size, cfg.code_dim},
                                     0.5, rng);
  codebook.ema_counts.assign(cfg.codebook_size, 0.0);
  codebook.ema_sums = Tensor::zeros({cfg.codebook_size, cfg.code_dim});
  codebook.usage.assign(cfg.codebook_size, 0);
  codebook.last_used.assign(cfg.codebook_size, 0);
  codebook_param_ = Parameter("pitch.codebook", codebook.codes);
}

int PitchVqvae::encode(Graph& g, int x) {
  int h = g.gelu(e1_.out(g, x));
  h = g.gelu(e2_.out(g, h));
  return e3_.out(g, h);
}

std::pair<int, int> PitchVqvae::decode(Graph& g, int q) {
  int h = g.gelu(d1_.out(g, q));
  h = g.gelu(d2_.out(g, h));
  return {d_smn_.out(g, h), d_voice_.out(g, h)};
}

QuantizeResult PitchVqvae::quantize(const Tensor& latents, bool training,
                                    Rng* restart_rng) {
  const int t = latents.rows(), d = latents.cols(), k = cfg.codebook_size;
  if (d != cfg.code_dim)
    throw std::runtime_error("quantize: latent dim mismatch");
  const Tensor& codes = cfg.ema ? codebook.codes : codebook_param_.value;

  QuantizeResult res;
  res.ids.assign(t, 0);
  res.quantized = Tensor::zeros({t, d});
#pragma omp parallel for schedule(static)
  for (int i = 0; i < t; ++i) {
    real best = 1e300;
    int best_c = 0;
    for (int c = 0; c < k; ++c) {
      real s = 0.0;
      for (int j = 0; j < d; ++j) {
        const real diff = latents(i, j) - codes(c, j);
        s += diff * diff;
      }
      if (s < best) {
        best = s;
        best_c = c;
      }
    }
    res.ids[i] = best_c;
    for (int j = 0; j < d; ++j) res.quantized(i, j) = codes(best_c, j);
  }

  if (!training) return res;

  ++train_steps;
  for (int i = 0; i < t; ++i) {
    ++codebook.usage[res.ids[i]];
    codebook.last_used[res.ids[i]] = train_steps;
  }
  if (cfg.ema) {
    // counts <- g*counts + (1-g)*assignments; sums likewise
    const real g = cfg.ema_decay;
    std::vector<real> batch_counts(k, 0.0);
    Tensor batch_sums = Tensor::zeros({k, d});
    for (int i = 0; i < t; ++i) {
      batch_counts[res.ids[i]] += 1.0;
      for (int j = 0; j < d; ++j) batch_sums(res.ids[i], j) += latents(i, j);
    }
    for (int c = 0; c < k; ++c) {
      codebook.ema_counts[c] = g * codebook.ema_counts[c] + (1.0 - g) * batch_counts[c];
      for (int j = 0; j < d; ++j)
        codebook.ema_sums(c, j) = g * codebook.ema_sums(c, j) + (1.0 - g) * batch_sums(c, j);
      if (codebook.ema_counts[c] > 1e-5)
        for (int j = 0; j < d; ++j)
          codebook.codes(c, j) = codebook.ema_sums(c, j) / codebook.ema_counts[c];
    }
  }
  // dead-code restarts from random batch latents
  if (restart_rng && train_steps > cfg.restart_window) {
    for (int c = 0; c < k; ++c) {
      if (train_steps - codebook.last_used[c] <= cfg.restart_window) continue;
      const int src = restart_rng->uniform_int(0, t - 1);
      for (int j = 0; j < d; ++j) {
        codebook.codes(c, j) = latents(src, j);
        codebook.ema_sums(c, j) = latents(src, j);
      }
      codebook.ema_counts[c] = 1.0;
      codebook.last_used[c] = train_steps;
      ++res.restarts;
      if (!cfg.ema)
        for (int j = 0; j < d; ++j) codebook_param_.value(c, j) = latents(src, j);
    }
  }
  return res;
}

Tensor PitchVqvae::input_features(const SmnF0Track& track) {
  Tensor x = Tensor::zeros({track.frames(), 2});
  for (int i = 0; i < track.frames(); ++i) {
    x(i, 0) = track.voiced[i] ? track.values[i] : 0.0;
    x(i, 1) = track.voiced[i] ? 1.0 : 0.0;
  }
  return x;
}

int PitchVqvae::loss(Graph& g, const SmnF0Track& track, bool training,
                     Rng* restart_rng) {
  const int t = track.frames();
  int x = g.input(input_features(track));
  int latents = encode(g, x);

  QuantizeResult q = quantize(g.val(latents), training, restart_rng);
  int q_st = g.straight_through(latents, q.quantized);
  auto [recon, voice_logit] = decode(g, q_st);

  Tensor target = Tensor::zeros({t, 1}), vmask = Tensor::zeros({t, 1});
  Tensor vtarget = Tensor::zeros({t, 1});
  for (int i = 0; i < t; ++i) {
    target(i, 0) = track.voiced[i] ? track.values[i] : 0.0;
    vmask(i, 0) = track.voiced[i] ? 1.0 : 0.0;
    vtarget(i, 0) = track.voiced[i] ? 1.0 : 0.0;
  }

  // voiced-masked reconstruction + voicing cross-entropy
  int l_recon = core::masked_mse(g, recon, g.input(target), vmask);
  int vt = g.input(vtarget);
  int l_voice = g.mean_all(g.sub(g.softplus(voice_logit), g.mul(voice_logit, vt)));

  int l_commit = core::mse(g, latents, g.input(q.quantized));

  int total = g.add(g.add(g.scale(l_recon, cfg.recon_weight), l_voice),
                    g.scale(l_commit, cfg.commit_weight));
  if (!cfg.ema) {
    int codes = g.param(codebook_param_);
    int gathered = g.embedding(codes, q.ids);
    int l_vq = core::mse(g, gathered, g.input(g.val(latents)));
    total = g.add(total, g.scale(l_vq, cfg.vq_weight));
    last_parts.vq = g.val(l_vq).v[0];
  } else {
    last_parts.vq = 0.0;
  }
  last_parts.recon = g.val(l_recon).v[0];
  last_parts.voicing = g.val(l_voice).v[0];
  last_parts.commit = g.val(l_commit).v[0];
  last_parts.total = g.val(total).v[0];
  return total;
}

std::vector<Parameter*> PitchVqvae::params() {
  std::vector<Parameter*> ps;
  e1_.params(ps);
  e2_.params(ps);
  e3_.params(ps);
  d1_.params(ps);
  d2_.params(ps);
  d_smn_.params(ps);
  d_voice_.params(ps);
  if (!cfg.ema) ps.push_back(&codebook_param_);
  return ps;
}

void PitchVqvae::save_into(core::Checkpoint& ck) const {
  for (const auto* layer : {&e1_, &e2_, &e3_, &d1_, &d2_, &d_smn_, &d_voice_}) {
    ck.put(layer->w.name, layer->w.value);
    ck.put(layer->b.name, layer->b.value);
  }
  ck.put("pitch.codebook.codes", cfg.ema ? codebook.codes : codebook_param_.value);
  Tensor counts = Tensor::zeros({1, cfg.codebook_size});
  Tensor usage = Tensor::zeros({1, cfg.codebook_size});
  for (int c = 0; c < cfg.codebook_size; ++c) {
    counts(0, c) = codebook.ema_counts[c];
    usage(0, c) = static_cast<real>(codebook.usage[c]);
  }
  ck.put("pitch.codebook.ema_counts", counts);
  ck.put("pitch.codebook.usage", usage);
  ck.put("pitch.codebook.ema_sums", codebook.ema_sums);
  ck.put("pitch.train_steps", Tensor::scalar(static_cast<real>(train_steps)));
}

void PitchVqvae::load_from(const core::Checkpoint& ck) {
  for (auto* layer : {&e1_, &e2_, &e3_, &d1_, &d2_, &d_smn_, &d_voice_}) {
    layer->w.value = ck.require(layer->w.name);
    layer->b.value = ck.require(layer->b.name);
  }
  codebook.codes = ck.require("pitch.codebook.codes");
  codebook_param_.value = codebook.codes;
  const Tensor& counts = ck.require("pitch.codebook.ema_counts");
  const Tensor& usage = ck.require("pitch.codebook.usage");
  for (int c = 0; c < cfg.codebook_size; ++c) {
    codebook.ema_counts[c] = counts(0, c);
    codebook.usage[c] = static_cast<int64_t>(usage(0, c));
  }
  codebook.ema_sums = ck.require("pitch.codebook.ema_sums");
  train_steps = static_cast<int>(ck.require("pitch.train_steps").v[0]);
}

PitchTokenSeq tokenize_utterance(const dsp::Waveform& w, real spk_log_mean,
                                 PitchVqvae& model, const dsp::F0Config& f0cfg) {
  if (model.train_steps == 0)
    throw std::runtime_error("tokenize_utterance: model checkpoint is untrained");
  auto track = dsp::estimate_f0(w, f0cfg);
  SmnF0Track smn = smn_logf0(track, spk_log_mean);

  // emit exactly floor(len / hop) steps (25 per full second)
  const int hop = static_cast<int>(std::lround(w.sample_rate / f0cfg.frame_rate));
  const int n_tokens = static_cast<int>(w.samples.size()) / hop;
  smn.values.resize(n_tokens);
  smn.voiced.resize(n_tokens);

  Graph g;
  int latents = model.encode(g, g.input(PitchVqvae::input_features(smn)));
  auto q = model.quantize(g.val(latents), false, nullptr);

  PitchTokenSeq seq;
  seq.ids = std::move(q.ids);
  seq.voiced.assign(smn.voiced.begin(), smn.voiced.end());
  return seq;
}

std::string format_token_line(const PitchTokenSeq& seq) {
  std::ostringstream os;
  for (int i = 0; i < seq.length(); ++i) {
    if (i) os << ' ';
    os << seq.ids[i];
    if (!seq.voiced[i]) os << 'U';
  }
  return os.str();
}

}  // namespace pfvc::pitch
