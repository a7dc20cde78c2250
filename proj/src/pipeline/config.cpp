#include "pfvc/pipeline/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pfvc/core/rng.hpp"

namespace pfvc::pipeline {

PipelineConfig::PipelineConfig() {
  defaults_ = {
      {"run.seed", "1"},

      {"corpus.n_speakers", "10"},
      {"corpus.n_utts", "20"},

      {"dsp.sample_rate", "16000"},
      {"dsp.frame", "1024"},
      {"dsp.hop", "256"},
      {"dsp.n_mels", "80"},
      {"dsp.fmin", "0"},
      {"dsp.fmax", "8000"},
      {"dsp.log_floor", "1e-5"},
      {"dsp.griffin_lim_iters", "32"},

      {"f0.f_min", "60"},
      {"f0.f_max", "600"},
      {"f0.frame_rate", "25"},
      {"f0.threshold", "0.15"},

      {"content.n_mels", "20"},
      {"content.fmin", "250"},
      {"content.fmax", "2100"},
      {"content.n_cepstra", "13"},
      {"content.smooth_hz", "340"},
      {"content.k", "16"},

      {"pitch.codebook_size", "64"},
      {"pitch.code_dim", "128"},
      {"pitch.hidden", "128"},
      {"pitch.kernel", "5"},
      {"pitch.ema", "true"},
      {"pitch.ema_decay", "0.99"},
      {"pitch.restart_window", "200"},
      {"pitch.recon_weight", "1.0"},
      {"pitch.commit_weight", "0.15"},
      {"pitch.vq_weight", "0.05"},

      {"flow.sigma_min", "1e-4"},
      {"flow.ode_steps", "10"},
      {"flow.cfg_scale", "1.0"},
      {"flow.cond_dropout_p", "0.2"},
      {"flow.mask_ratio_lo", "0.3"},
      {"flow.mask_ratio_hi", "0.7"},
      {"flow.mask_spans_min", "1"},
      {"flow.mask_spans_max", "3"},
      {"flow.midpoint", "false"},
      {"flow.d_model", "128"},
      {"flow.d_spk", "64"},
      {"flow.hidden", "256"},
      {"flow.blocks", "4"},
      {"flow.kernel", "5"},
      {"flow.sem_blocks", "2"},
      {"flow.time_dim", "64"},
      {"flow.use_pitch", "true"},
      {"flow.use_timbre_tokens", "true"},
      {"flow.mel_mean", "-3.4"},
      {"flow.mel_std", "4.3"},

      {"train.pitch_steps", "2500"},
      {"train.pitch_lr", "1e-3"},
      {"train.cfm_steps", "3000"},
      {"train.cfm_lr", "3e-4"},
      {"train.crop", "96"},
      {"train.grad_clip", "1.0"},

      {"eval.pairs", "50"},
  };
  values_ = defaults_;
}

void PipelineConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
    line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: missing '=' at " + path + ":" +
                               std::to_string(lineno));
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
    value.erase(value.begin(), std::find_if(value.begin(), value.end(), notspace));
    set(key, value);
  }
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (!defaults_.count(key))
    throw std::runtime_error("config: unknown key \"" + key + "\"");
  values_[key] = value;
}

std::string PipelineConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw std::runtime_error("config: unknown key \"" + key + "\"");
  return it->second;
}

int PipelineConfig::get_int(const std::string& key) const {
  return static_cast<int>(std::llround(get_real(key)));
}

double PipelineConfig::get_real(const std::string& key) const {
  const std::string v = get(key);
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::runtime_error("config: key \"" + key + "\" has non-numeric value \"" +
                             v + "\"");
  }
}

bool PipelineConfig::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error("config: key \"" + key + "\" has non-boolean value \"" + v +
                           "\"");
}

std::string PipelineConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

namespace {

std::string hex64(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string PipelineConfig::full_hash() const {
  const std::string s = serialize();
  return hex64(fnv1a(s.data(), s.size()));
}

std::string PipelineConfig::model_hash() const {
  static const char* const kModelKeys[] = {
      "dsp.sample_rate", "dsp.frame", "dsp.hop", "dsp.n_mels", "dsp.fmin",
      "dsp.fmax", "dsp.log_floor", "f0.f_min", "f0.f_max", "f0.frame_rate",
      "content.n_mels", "content.fmin", "content.fmax", "content.n_cepstra",
      "content.smooth_hz", "content.k", "pitch.codebook_size", "pitch.code_dim",
      "pitch.hidden", "pitch.kernel", "flow.d_model", "flow.d_spk", "flow.hidden",
      "flow.blocks", "flow.kernel", "flow.sem_blocks", "flow.time_dim",
      "flow.use_pitch", "flow.use_timbre_tokens", "flow.mel_mean", "flow.mel_std"};
  std::ostringstream os;
  for (const char* k : kModelKeys) os << k << " = " << get(k) << "\n";
  const std::string s = os.str();
  return hex64(fnv1a(s.data(), s.size()));
}

dsp::MelConfig PipelineConfig::mel_config() const {
  dsp::MelConfig m;
  m.sample_rate = get_int("dsp.sample_rate");
  m.frame = get_int("dsp.frame");
  m.hop = get_int("dsp.hop");
  m.n_mels = get_int("dsp.n_mels");
  m.fmin = get_real("dsp.fmin");
  m.fmax = get_real("dsp.fmax");
  m.log_floor = get_real("dsp.log_floor");
  return m;
}

dsp::F0Config PipelineConfig::f0_config() const {
  dsp::F0Config f;
  f.f_min = get_real("f0.f_min");
  f.f_max = get_real("f0.f_max");
  f.frame_rate = get_real("f0.frame_rate");
  f.threshold = get_real("f0.threshold");
  return f;
}

content::ContentConfig PipelineConfig::content_config() const {
  content::ContentConfig c;
  c.n_mels = get_int("content.n_mels");
  c.fmin = get_real("content.fmin");
  c.fmax = get_real("content.fmax");
  c.n_cepstra = get_int("content.n_cepstra");
  c.smooth_hz = get_real("content.smooth_hz");
  c.k = get_int("content.k");
  return c;
}

pitch::PitchVqvaeConfig PipelineConfig::pitch_config() const {
  pitch::PitchVqvaeConfig p;
  p.codebook_size = get_int("pitch.codebook_size");
  p.code_dim = get_int("pitch.code_dim");
  p.hidden = get_int("pitch.hidden");
  p.kernel = get_int("pitch.kernel");
  p.ema = get_bool("pitch.ema");
  p.ema_decay = get_real("pitch.ema_decay");
  p.restart_window = get_int("pitch.restart_window");
  p.recon_weight = get_real("pitch.recon_weight");
  p.commit_weight = get_real("pitch.commit_weight");
  p.vq_weight = get_real("pitch.vq_weight");
  return p;
}

flow::FlowConfig PipelineConfig::flow_config() const {
  flow::FlowConfig f;
  f.sigma_min = get_real("flow.sigma_min");
  f.ode_steps = get_int("flow.ode_steps");
  f.cfg_scale = get_real("flow.cfg_scale");
  f.cond_dropout_p = get_real("flow.cond_dropout_p");
  f.mask_ratio_lo = get_real("flow.mask_ratio_lo");
  f.mask_ratio_hi = get_real("flow.mask_ratio_hi");
  f.mask_spans_min = get_int("flow.mask_spans_min");
  f.mask_spans_max = get_int("flow.mask_spans_max");
  f.midpoint = get_bool("flow.midpoint");
  f.n_mels = get_int("dsp.n_mels");
  f.d_model = get_int("flow.d_model");
  f.d_spk = get_int("flow.d_spk");
  f.hidden = get_int("flow.hidden");
  f.blocks = get_int("flow.blocks");
  f.kernel = get_int("flow.kernel");
  f.sem_blocks = get_int("flow.sem_blocks");
  f.time_dim = get_int("flow.time_dim");
  f.sem_vocab = get_int("content.k");
  f.pitch_codes = get_int("pitch.codebook_size");
  f.use_pitch = get_bool("flow.use_pitch");
  f.use_timbre_tokens = get_bool("flow.use_timbre_tokens");
  f.mel_mean = get_real("flow.mel_mean");
  f.mel_std = get_real("flow.mel_std");
  return f;
}

flow::CfmTrainConfig PipelineConfig::cfm_train_config() const {
  flow::CfmTrainConfig t;
  t.steps = get_int("train.cfm_steps");
  t.lr = get_real("train.cfm_lr");
  t.crop = get_int("train.crop");
  t.grad_clip = get_real("train.grad_clip");
  t.seed = seed();
  return t;
}

}  // namespace pfvc::pipeline
