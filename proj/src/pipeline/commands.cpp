#include "pfvc/pipeline/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "pfvc/core/optim.hpp"
#include "pfvc/flow/train_cfm.hpp"
#include "pfvc/timbre/timbre.hpp"

namespace pfvc::pipeline {

namespace fs = std::filesystem;
using core::Graph;
using pfvc::Rng;
using core::Tensor;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct CorpusInfo {
  std::vector<corpus::ManifestEntry> manifest;
  std::vector<corpus::SpeakerSpec> speakers;
  std::string dir;

  int speaker_index(const std::string& id) const {
    for (size_t i = 0; i < speakers.size(); ++i)
      if (speakers[i].id == id) return static_cast<int>(i);
    throw StageError("corpus: unknown speaker id \"" + id + "\"");
  }
};

CorpusInfo load_corpus(const std::string& dir, const char* stage) {
  const std::string manifest_path = (fs::path(dir) / "manifest.tsv").string();
  if (!fs::exists(manifest_path))
    throw StageError("stage " + std::string(stage) +
                     " requires a built corpus at " + dir +
                     " (produce it with: pfvc make-corpus --out " + dir + ")");
  CorpusInfo info;
  info.dir = dir;
  info.manifest = corpus::read_manifest(manifest_path);
  info.speakers = corpus::read_speakers((fs::path(dir) / "speakers.tsv").string());
  return info;
}

void require_artifact(const std::string& path, const char* stage, const char* artifact,
                      const std::string& hint) {
  if (!fs::exists(path))
    throw StageError("stage " + std::string(stage) + " requires artifact " + artifact +
                     " at " + path + " (produce it with: " + hint + ")");
}

}  // namespace

void write_run_log(const PipelineConfig& cfg, const std::string& command,
                   const std::string& notes, const std::string& runs_dir) {
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::gmtime(&now));
  fs::path dir = fs::path(runs_dir) / (std::string(stamp) + "-" + cfg.full_hash());
  int suffix = 0;
  while (fs::exists(dir))
    dir = fs::path(runs_dir) /
          (std::string(stamp) + "-" + cfg.full_hash() + "-" + std::to_string(++suffix));
  fs::create_directories(dir);
  std::ofstream log(dir / "run.log", std::ios::trunc);
  log << "command: " << command << "\n"
      << "config_hash: " << cfg.full_hash() << "\n"
      << "model_hash: " << cfg.model_hash() << "\n"
      << "seed: " << cfg.seed() << "\n"
      << (notes.empty() ? "" : "notes: " + notes + "\n") << "--- resolved config ---\n"
      << cfg.serialize();
}

void cmd_make_corpus(const PipelineConfig& cfg, const std::string& out_dir) {
  corpus::build_corpus(cfg.get_int("corpus.n_speakers"), cfg.get_int("corpus.n_utts"),
                       cfg.seed(), out_dir);
}

namespace {

struct F0Cache {
  std::vector<dsp::F0Track> tracks;  // aligned with manifest order
};

F0Cache extract_all_f0(const CorpusInfo& info, const dsp::F0Config& fc) {
  F0Cache cache;
  cache.tracks.resize(info.manifest.size());
  for (size_t i = 0; i < info.manifest.size(); ++i)
    cache.tracks[i] = dsp::estimate_f0(dsp::read_wav(info.manifest[i].path), fc);
  return cache;
}

// per-speaker mean of log f0 over the speaker's train-split tracks
std::vector<real> train_speaker_means(const CorpusInfo& info, const F0Cache& cache) {
  std::vector<real> means(info.speakers.size(), 0.0);
  for (size_t s = 0; s < info.speakers.size(); ++s) {
    std::vector<dsp::F0Track> tracks;
    for (size_t i = 0; i < info.manifest.size(); ++i)
      if (info.manifest[i].speaker_id == info.speakers[s].id &&
          info.manifest[i].split == "train")
        tracks.push_back(cache.tracks[i]);
    if (tracks.empty()) continue;  // test-only speaker: mean never used in training
    means[s] = pitch::speaker_log_mean(tracks);
  }
  return means;
}

std::pair<real, real> pitch_eval(pitch::PitchVqvae& model,
                                 const std::vector<pitch::SmnF0Track>& tracks) {
  real se = 0.0;
  int64_t n_voiced = 0;
  int64_t voice_correct = 0, n_total = 0;
  for (const auto& track : tracks) {
    Graph g;
    int lat = model.encode(g, g.input(pitch::PitchVqvae::input_features(track)));
    auto q = model.quantize(g.val(lat), false, nullptr);
    int q_in = g.input(q.quantized);
    auto [recon, vlogit] = model.decode(g, q_in);
    const Tensor& r = g.val(recon);
    const Tensor& vl = g.val(vlogit);
    for (int i = 0; i < track.frames(); ++i) {
      if (track.voiced[i]) {
        const real d = r(i, 0) - track.values[i];
        se += d * d;
        ++n_voiced;
      }
      const bool pred = vl(i, 0) > 0.0;
      voice_correct += pred == (track.voiced[i] != 0);
      ++n_total;
    }
  }
  const real rmse = n_voiced ? std::sqrt(se / n_voiced) : 0.0;
  const real acc = n_total ? static_cast<real>(voice_correct) / n_total : 0.0;
  return {rmse, acc};
}

}  // namespace

PitchTrainResult cmd_train_pitch(const PipelineConfig& cfg, const std::string& corpus_dir,
                                 const std::string& out_ckpt, bool verbose) {
  auto info = load_corpus(corpus_dir, "train-pitch");
  const auto fc = cfg.f0_config();
  auto cache = extract_all_f0(info, fc);
  auto means = train_speaker_means(info, cache);

  std::vector<pitch::SmnF0Track> train_tracks, dev_tracks;
  for (size_t i = 0; i < info.manifest.size(); ++i) {
    const auto& e = info.manifest[i];
    if (e.split == "test") continue;
    const int spk = info.speaker_index(e.speaker_id);
    auto smn = pitch::smn_logf0(cache.tracks[i], means[spk]);
    (e.split == "train" ? train_tracks : dev_tracks).push_back(std::move(smn));
  }
  if (train_tracks.empty()) throw StageError("train-pitch: corpus has no train split");
  if (dev_tracks.empty()) dev_tracks.push_back(train_tracks.back());

  pitch::PitchVqvae model(cfg.pitch_config(), Rng(cfg.seed()));
  auto ps = model.params();
  core::Adam opt(ps, {.lr = cfg.get_real("train.pitch_lr"),
                      .grad_clip = cfg.get_real("train.grad_clip")});
  Rng root(cfg.seed() ^ 0x5151515151515151ULL);
  Rng restart_rng(cfg.seed() ^ 0xabcdef12345ULL);

  const int steps = cfg.get_int("train.pitch_steps");
  real window = 0.0;
  for (int step = 0; step < steps; ++step) {
    Rng rng = root.split(step);
    const auto& track = train_tracks[rng.uniform_int(0, static_cast<int>(train_tracks.size()) - 1)];
    opt.zero_grad();
    Graph g;
    int loss = model.loss(g, track, true, &restart_rng);
    g.backward(loss);
    opt.step();
    window += model.last_parts.total;
    if (verbose && (step + 1) % 500 == 0) {
      std::printf("  pitch step %5d/%d  loss %.4f\n", step + 1, steps, window / 500);
      std::fflush(stdout);
      window = 0.0;
    }
  }

  PitchTrainResult result;
  auto [rmse, acc] = pitch_eval(model, dev_tracks);
  result.dev_rmse = rmse;
  result.dev_voicing_acc = acc;
  int64_t total_usage = 0;
  for (auto u : model.codebook.usage) total_usage += u;
  int active = 0;
  for (auto u : model.codebook.usage)
    active += total_usage > 0 && static_cast<real>(u) / total_usage > 0.001;
  result.codebook_usage = static_cast<real>(active) / model.cfg.codebook_size;

  core::Checkpoint ck;
  ck.config_hash = cfg.model_hash();
  model.save_into(ck);
  Tensor mt = Tensor::zeros({1, static_cast<int>(means.size())});
  for (size_t i = 0; i < means.size(); ++i) mt(0, static_cast<int>(i)) = means[i];
  ck.put("pitch.speaker_log_means", mt);
  core::save_checkpoint(ck, out_ckpt);

  if (verbose)
    std::printf("train-pitch: dev rmse %.4f, voicing acc %.3f, usage %.2f\n",
                result.dev_rmse, result.dev_voicing_acc, result.codebook_usage);
  return result;
}

void cmd_fit_content(const PipelineConfig& cfg, const std::string& corpus_dir,
                     const std::string& out_ckpt) {
  auto info = load_corpus(corpus_dir, "fit-content");
  const auto cc = cfg.content_config();

  std::vector<Tensor> feats;
  int rows = 0;
  for (const auto& e : info.manifest) {
    if (e.split != "train") continue;
    auto f = content::frame_features(dsp::read_wav(e.path), cc);
    rows += f.rows();
    feats.push_back(std::move(f));
  }
  if (feats.empty()) throw StageError("fit-content: corpus has no train split");
  Tensor pool = Tensor::zeros({rows, feats[0].cols()});
  int off = 0;
  for (const auto& f : feats) {
    for (int i = 0; i < f.rows(); ++i)
      for (int j = 0; j < f.cols(); ++j) pool(off + i, j) = f(i, j);
    off += f.rows();
  }
  auto model = content::kmeans_fit(pool, cc.k, cfg.seed());

  core::Checkpoint ck;
  ck.config_hash = cfg.model_hash();
  ck.put("content.centroids", model.centroids);
  ck.put("content.fit_seed", Tensor::scalar(static_cast<real>(model.fit_seed)));
  core::save_checkpoint(ck, out_ckpt);
}

namespace {

pitch::PitchVqvae load_pitch_model(const PipelineConfig& cfg, const std::string& path,
                                   std::vector<real>* speaker_means = nullptr) {
  require_artifact(path, "this stage", "the pitch checkpoint",
                   "pfvc train-pitch --corpus <dir> --out " + path);
  auto ck = core::load_checkpoint(path, cfg.model_hash());
  pitch::PitchVqvae model(cfg.pitch_config(), Rng(0));
  model.load_from(ck);
  if (speaker_means) {
    const Tensor& mt = ck.require("pitch.speaker_log_means");
    speaker_means->assign(mt.v.begin(), mt.v.end());
  }
  return model;
}

content::KMeansModel load_content_model(const PipelineConfig& cfg,
                                        const std::string& path) {
  require_artifact(path, "this stage", "the content checkpoint",
                   "pfvc fit-content --corpus <dir> --out " + path);
  auto ck = core::load_checkpoint(path, cfg.model_hash());
  content::KMeansModel model;
  model.centroids = ck.require("content.centroids");
  model.fit_seed = static_cast<uint64_t>(ck.require("content.fit_seed").v[0]);
  return model;
}

}  // namespace

void cmd_train_cfm(const PipelineConfig& cfg, const std::string& corpus_dir,
                   const std::string& pitch_ckpt, const std::string& content_ckpt,
                   const std::string& out_ckpt, bool verbose) {
  auto info = load_corpus(corpus_dir, "train-cfm");
  std::vector<real> means;
  auto pitch_model = load_pitch_model(cfg, pitch_ckpt, &means);
  auto kmeans = load_content_model(cfg, content_ckpt);

  const auto mc = cfg.mel_config();
  const auto fc = cfg.f0_config();
  const auto cc = cfg.content_config();

  std::vector<flow::TrainItem> items;
  std::map<std::string, std::vector<int>> groups;
  for (const auto& e : info.manifest) {
    if (e.split != "train") continue;
    auto wav = dsp::read_wav(e.path);
    flow::TrainItem item;
    item.mel = flow::normalize_mel(dsp::mel_spectrogram(wav, mc).data, cfg.flow_config());
    item.sem_ids = content::tokenize(content::frame_features(wav, cc), kmeans);
    const int spk = info.speaker_index(e.speaker_id);
    item.pitch_tokens = pitch::tokenize_utterance(wav, means[spk], pitch_model, fc);
    item.ref_mel = item.mel;
    groups[e.speaker_id].push_back(static_cast<int>(items.size()));
    items.push_back(std::move(item));
  }
  if (items.empty()) throw StageError("train-cfm: corpus has no train split");
  std::vector<std::vector<int>> by_speaker;
  for (auto& [id, g] : groups) by_speaker.push_back(g);

  flow::CondFlow model(cfg.flow_config(), Rng(cfg.seed()));
  auto stats = flow::train_cfm(model, items, by_speaker, cfg.cfm_train_config(), verbose);
  if (verbose)
    std::printf("train-cfm: loss %.4f -> %.4f\n", stats.first_loss, stats.last_avg_loss);

  core::Checkpoint ck;
  ck.config_hash = cfg.model_hash();
  model.save_into(ck);
  core::save_checkpoint(ck, out_ckpt);
}

LoadedModels load_models(const PipelineConfig& cfg, const std::string& pitch_ckpt,
                         const std::string& content_ckpt, const std::string& cfm_ckpt) {
  auto pitch_model = load_pitch_model(cfg, pitch_ckpt);
  auto kmeans = load_content_model(cfg, content_ckpt);
  require_artifact(cfm_ckpt, "this stage", "the conversion checkpoint",
                   "pfvc train-cfm --corpus <dir> --pitch <ckpt> --content <ckpt> --out " +
                       cfm_ckpt);
  auto ck = core::load_checkpoint(cfm_ckpt, cfg.model_hash());
  flow::CondFlow flow_model(cfg.flow_config(), Rng(0));
  flow_model.load_from(ck);
  return LoadedModels(std::move(pitch_model), std::move(kmeans), std::move(flow_model));
}

dsp::Waveform convert_one(const PipelineConfig& cfg, LoadedModels& models,
                          const dsp::Waveform& source, const dsp::Waveform& prompt,
                          uint64_t seed) {
  if (prompt.duration_s() < 0.5)
    throw StageError("convert: insufficient prompt (need at least 0.5 s)");
  const auto mc = cfg.mel_config();
  const auto fc = cfg.f0_config();
  const auto cc = cfg.content_config();
  flow::FlowConfig fcfg = cfg.flow_config();

  const auto mel_s = dsp::mel_spectrogram(source, mc);
  const auto mel_p = dsp::mel_spectrogram(prompt, mc);

  auto ids_p = content::tokenize(content::frame_features(prompt, cc), models.kmeans);
  auto ids_s = content::tokenize(content::frame_features(source, cc), models.kmeans);
  std::vector<int> sem_ids = ids_p;
  sem_ids.insert(sem_ids.end(), ids_s.begin(), ids_s.end());

  // prompt pitch tokens (per-utterance mean stands in for the unseen-speaker
  // expectation); source pitch replaced by null tokens, voicing kept
  auto track_p = dsp::estimate_f0(prompt, fc);
  real mean_p;
  try {
    mean_p = pitch::utterance_log_mean(track_p);
  } catch (const std::exception&) {
    throw StageError("convert: prompt has no voiced frames");
  }
  auto ptoks = pitch::tokenize_utterance(prompt, mean_p, models.pitch_model, fc);

  auto track_s = dsp::estimate_f0(source, fc);
  const int hop25 = static_cast<int>(std::lround(source.sample_rate / fc.frame_rate));
  const int ns = static_cast<int>(source.samples.size()) / hop25;

  std::vector<int> pitch_ids = ptoks.ids;
  std::vector<uint8_t> pitch_voiced(ptoks.voiced.begin(), ptoks.voiced.end());
  for (int i = 0; i < ns; ++i) {
    pitch_ids.push_back(flow::null_pitch_id(fcfg));
    pitch_voiced.push_back(i < track_s.frames() ? track_s.voiced[i]
                                                : static_cast<uint8_t>(0));
  }

  const Tensor mel_p_norm = flow::normalize_mel(mel_p.data, fcfg);
  auto cond = flow::assemble_condition(models.flow_model, sem_ids, pitch_ids,
                                       pitch_voiced, mel_p_norm, mel_p.frames(),
                                       mel_p_norm);
  Tensor mel_full = flow::denormalize_mel(
      flow::sample_ode(models.flow_model, cond, fcfg, seed), fcfg);

  dsp::MelSpectrogram out_mel;
  out_mel.n_mels = mc.n_mels;
  out_mel.hop = mc.hop;
  out_mel.frame = mc.frame;
  out_mel.data = Tensor::zeros({mel_s.frames(), mc.n_mels});
  for (int i = 0; i < mel_s.frames(); ++i)
    for (int j = 0; j < mc.n_mels; ++j)
      out_mel.data(i, j) = mel_full(mel_p.frames() + i, j);

  return dsp::griffin_lim(out_mel, mc, cfg.get_int("dsp.griffin_lim_iters"),
                          seed ^ 0x6c62272e07bb0142ULL);
}

void cmd_convert(const PipelineConfig& cfg, LoadedModels& models,
                 const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw StageError("convert: cannot open manifest: " + manifest_path);
  std::string line;
  uint64_t index = 0;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string src, prm, out;
    if (!std::getline(is, src, '\t') || !std::getline(is, prm, '\t') ||
        !std::getline(is, out))
      throw StageError("convert: malformed manifest line: " + line);
    auto source = dsp::read_wav(src);
    auto prompt = dsp::read_wav(prm);
    auto converted = convert_one(cfg, models, source, prompt, cfg.seed() + index);
    dsp::write_wav(converted, out);
    ++index;
  }
}

namespace {

struct EvalPair {
  int source_idx, prompt_idx;
};

std::vector<EvalPair> make_pairs(const CorpusInfo& info, int n_pairs) {
  std::vector<int> test_idx;
  for (size_t i = 0; i < info.manifest.size(); ++i)
    if (info.manifest[i].split == "test") test_idx.push_back(static_cast<int>(i));
  if (test_idx.size() < 2) throw StageError("eval: test split is empty or too small");

  std::vector<EvalPair> pairs;
  int guard = 0;
  for (int i = 0; static_cast<int>(pairs.size()) < n_pairs; ++i) {
    if (++guard > 100 * n_pairs)
      throw StageError("eval: cannot build cross-speaker pairs (single test speaker?)");
    const int s = test_idx[i % test_idx.size()];
    const int p = test_idx[(i * 7 + 3) % test_idx.size()];
    if (info.manifest[s].speaker_id == info.manifest[p].speaker_id) continue;
    pairs.push_back({s, p});
  }
  return pairs;
}

}  // namespace

EvalReport cmd_eval(const PipelineConfig& cfg, LoadedModels& models,
                    const std::string& corpus_dir, const std::string& report_path,
                    const EvalOptions& opt, bool verbose) {
  auto info = load_corpus(corpus_dir, "eval");
  const auto mc = cfg.mel_config();
  const auto fc = cfg.f0_config();
  const auto cc = cfg.content_config();

  PipelineConfig eval_cfg = cfg;
  if (opt.ode_steps) eval_cfg.set("flow.ode_steps", std::to_string(*opt.ode_steps));

  // per-speaker envelope centroids from ground-truth audio
  std::map<std::string, std::pair<Tensor, int>> env_acc;
  for (const auto& e : info.manifest) {
    auto env = envelope_of(dsp::mel_spectrogram(dsp::read_wav(e.path), mc));
    auto it = env_acc.find(e.speaker_id);
    if (it == env_acc.end()) {
      env_acc.emplace(e.speaker_id, std::make_pair(env, 1));
    } else {
      for (size_t j = 0; j < env.v.size(); ++j) it->second.first.v[j] += env.v[j];
      ++it->second.second;
    }
  }
  std::vector<Tensor> centroids;
  std::vector<std::string> centroid_ids;
  for (auto& [id, acc] : env_acc) {
    Tensor c = acc.first;
    for (auto& v : c.v) v /= acc.second;
    centroids.push_back(std::move(c));
    centroid_ids.push_back(id);
  }

  auto pairs = make_pairs(info, opt.n_pairs);

  EvalReport report;
  std::vector<real> xs, ys;
  for (size_t k = 0; k < pairs.size(); ++k) {
    const auto& src_e = info.manifest[pairs[k].source_idx];
    const auto& prm_e = info.manifest[pairs[k].prompt_idx];
    auto source = dsp::read_wav(src_e.path);
    auto prompt = dsp::read_wav(prm_e.path);
    auto converted = convert_one(eval_cfg, models, source, prompt, cfg.seed() + k);

    EvalRow row;
    row.source = fs::path(src_e.path).filename().string();
    row.prompt = fs::path(prm_e.path).filename().string();
    row.source_speaker = src_e.speaker_id;
    row.prompt_speaker = prm_e.speaker_id;

    // content: token agreement between source audio and converted audio
    auto ids_src = content::tokenize(content::frame_features(source, cc), models.kmeans);
    auto ids_cnv = content::tokenize(content::frame_features(converted, cc), models.kmeans);
    const int n = static_cast<int>(std::min(ids_src.size(), ids_cnv.size()));
    int agree = 0;
    for (int i = 0; i < n; ++i) agree += ids_src[i] == ids_cnv[i];
    row.content_match = n ? static_cast<real>(agree) / n : 0.0;

    // timbre: envelope classification against speaker centroids
    auto env = envelope_of(dsp::mel_spectrogram(converted, mc));
    const int pred = classify_envelope(env, centroids);
    row.envelope_pred_is_prompt = centroid_ids[pred] == prm_e.speaker_id;

    // pitch style: converted SMN-logF0 spread vs the prompt speaker's
    // contour-style parameter
    auto track = dsp::estimate_f0(converted, fc);
    real smn_std = 0.0;
    try {
      auto smn = pitch::smn_logf0(track, pitch::utterance_log_mean(track));
      real sum = 0.0, sum2 = 0.0;
      int nv = 0;
      for (int i = 0; i < smn.frames(); ++i)
        if (smn.voiced[i]) {
          sum += smn.values[i];
          sum2 += smn.values[i] * smn.values[i];
          ++nv;
        }
      if (nv > 1) smn_std = std::sqrt(std::max(sum2 / nv - (sum / nv) * (sum / nv), 0.0));
    } catch (const std::exception&) {
      smn_std = 0.0;  // conversion produced no voiced frames
    }
    row.converted_smn_std = smn_std;
    row.prompt_style_param =
        info.speakers[info.speaker_index(prm_e.speaker_id)].style_strength();

    xs.push_back(row.prompt_style_param);
    ys.push_back(row.converted_smn_std);
    report.content_match_rate += row.content_match;
    report.envelope_classification_accuracy += row.envelope_pred_is_prompt;
    report.rows.push_back(std::move(row));
    if (verbose && (k + 1) % 10 == 0) {
      std::printf("  eval pair %zu/%zu\n", k + 1, pairs.size());
      std::fflush(stdout);
    }
  }
  report.content_match_rate /= pairs.size();
  report.envelope_classification_accuracy /= pairs.size();
  report.pitch_style_correlation = pearson(xs, ys);

  int64_t total_usage = 0;
  for (auto u : models.pitch_model.codebook.usage) total_usage += u;
  int active = 0;
  for (auto u : models.pitch_model.codebook.usage)
    active += total_usage > 0 && static_cast<real>(u) / total_usage > 0.001;
  report.codebook_usage =
      static_cast<real>(active) / models.pitch_model.cfg.codebook_size;

  if (!report_path.empty()) report.write_tsv(report_path);
  if (verbose) std::printf("%s\n", report.summary_line().c_str());
  return report;
}

std::vector<SweepRow> cmd_step_sweep(const PipelineConfig& cfg, LoadedModels& models,
                                     const std::string& corpus_dir,
                                     const std::vector<int>& steps, int n_pairs) {
  auto info = load_corpus(corpus_dir, "eval");
  const auto cc = cfg.content_config();
  auto pairs = make_pairs(info, n_pairs);

  std::vector<SweepRow> rows;
  for (int s : steps) {
    PipelineConfig run_cfg = cfg;
    run_cfg.set("flow.ode_steps", std::to_string(s));
    SweepRow row;
    row.ode_steps = s;
    const double t0 = now_s();
    for (size_t k = 0; k < pairs.size(); ++k) {
      auto source = dsp::read_wav(info.manifest[pairs[k].source_idx].path);
      auto prompt = dsp::read_wav(info.manifest[pairs[k].prompt_idx].path);
      auto converted = convert_one(run_cfg, models, source, prompt, cfg.seed() + k);
      auto ids_src =
          content::tokenize(content::frame_features(source, cc), models.kmeans);
      auto ids_cnv =
          content::tokenize(content::frame_features(converted, cc), models.kmeans);
      const int n = static_cast<int>(std::min(ids_src.size(), ids_cnv.size()));
      int agree = 0;
      for (int i = 0; i < n; ++i) agree += ids_src[i] == ids_cnv[i];
      row.content_match += n ? static_cast<real>(agree) / n : 0.0;
    }
    row.wall_s = now_s() - t0;
    row.content_match /= pairs.size();
    rows.push_back(row);
  }
  return rows;
}

core::GradcheckReport run_gradcheck_suite(real rtol, uint64_t seed) {
  core::GradcheckReport merged;
  Rng rng(seed);

  auto run_block = [&](const std::string& label, std::vector<core::Parameter*> ps,
                       const std::function<real(bool)>& loss) {
    auto rep = core::gradcheck(ps, loss, rtol, 12, rng.u64());
    for (auto& b : rep.blocks) {
      b.name = label + "/" + b.name;
      merged.pass = merged.pass && b.pass;
      merged.blocks.push_back(std::move(b));
    }
  };

  auto random_tensor = [&](std::vector<int> shape, real lo = -1.0, real hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.v) x = rng.uniform(lo, hi);
    return t;
  };

  {  // conv1d
    core::Conv1d conv("conv", 3, 4, 5, Rng(rng.u64()), 1, -1, 2);
    Tensor x = random_tensor({11, 3});
    Tensor w = random_tensor({11, 4});
    std::vector<core::Parameter*> ps;
    conv.params(ps);
    run_block("conv1d", ps, [&](bool wg) {
      Graph g;
      int l = g.sum_all(g.mul(conv.out(g, g.input(x)), g.input(w)));
      if (wg) {
        for (auto* p : ps) p->zero_grad();
        g.backward(l);
      }
      return g.val(l).v[0];
    });
  }
  {  // attention
    core::Attention attn("attn", 6, 7, 8, Rng(rng.u64()));
    Tensor q = random_tensor({5, 6}), kv = random_tensor({9, 7}), w = random_tensor({5, 6});
    std::vector<core::Parameter*> ps;
    attn.params(ps);
    run_block("attention", ps, [&](bool wg) {
      Graph g;
      int l = g.sum_all(g.mul(attn.out(g, g.input(q), g.input(kv)), g.input(w)));
      if (wg) {
        for (auto* p : ps) p->zero_grad();
        g.backward(l);
      }
      return g.val(l).v[0];
    });
  }
  {  // layer norm
    core::LayerNorm ln("ln", 9);
    Tensor x = random_tensor({6, 9}, -2.0, 3.0), w = random_tensor({6, 9});
    std::vector<core::Parameter*> ps;
    ln.params(ps);
    run_block("layer_norm", ps, [&](bool wg) {
      Graph g;
      int l = g.sum_all(g.mul(ln.out(g, g.input(x)), g.input(w)));
      if (wg) {
        for (auto* p : ps) p->zero_grad();
        g.backward(l);
      }
      return g.val(l).v[0];
    });
  }
  {  // conformer block (semantic encoder) and flow decoder
    flow::FlowConfig fcfg;
    fcfg.n_mels = 5;
    fcfg.d_model = 8;
    fcfg.d_spk = 4;
    fcfg.hidden = 10;
    fcfg.blocks = 1;
    fcfg.kernel = 3;
    fcfg.sem_blocks = 1;
    fcfg.time_dim = 8;
    fcfg.sem_vocab = 5;
    fcfg.pitch_codes = 6;

    flow::SemanticEncoder sem(fcfg, Rng(rng.u64()));
    std::vector<int> ids = {0, 1, 2, 3, 4, 1, 2};
    Tensor tokens = random_tensor({4, 8});
    Tensor wgt = random_tensor({7, 8});
    auto sps = sem.params();
    run_block("conformer_block", sps, [&](bool wg) {
      Graph g;
      int l = g.sum_all(g.mul(sem.encode(g, ids, g.input(tokens)), g.input(wgt)));
      if (wg) {
        for (auto* p : sps) p->zero_grad();
        g.backward(l);
      }
      return g.val(l).v[0];
    });

    flow::FlowDecoder dec(fcfg, Rng(rng.u64()));
    Tensor xt = random_tensor({7, 5}), semc = random_tensor({7, 8});
    Tensor pit = random_tensor({7, 8}), spk = random_tensor({7, 4});
    Tensor dw = random_tensor({7, 5});
    auto dps = dec.params();
    run_block("flow_decoder", dps, [&](bool wg) {
      Graph g;
      int v = dec.field(g, g.input(xt), g.input(semc), g.input(pit), g.input(spk), 0.4);
      int l = g.sum_all(g.mul(v, g.input(dw)));
      if (wg) {
        for (auto* p : dps) p->zero_grad();
        g.backward(l);
      }
      return g.val(l).v[0];
    });
  }
  {  // ASP
    timbre::TimbreConfig tcfg;
    tcfg.n_mels = 6;
    tcfg.d_model = 8;
    tcfg.d_spk = 4;
    tcfg.n_tokens = 5;
    timbre::TimbreEncoder enc(tcfg, Rng(rng.u64()));
    Tensor mel = random_tensor({9, 6}, -4.0, 2.0);
    Tensor w = random_tensor({1, 4});
    auto ps = enc.params();
    run_block("asp", ps, [&](bool wg) {
      Graph g;
      int e = enc.global_embedding(g, enc.feature_encoder(g, g.input(mel)));
      int l = g.sum_all(g.mul(e, g.input(w)));
      if (wg) {
        for (auto* p : ps) p->zero_grad();
        g.backward(l);
      }
      return g.val(l).v[0];
    });
  }
  {  // VQ straight-through path (frozen quantization offset)
    pitch::PitchVqvaeConfig pcfg;
    pcfg.hidden = 8;
    pcfg.code_dim = 6;
    pcfg.codebook_size = 4;
    pcfg.kernel = 3;
    pitch::PitchVqvae vq(pcfg, Rng(rng.u64()));
    pitch::SmnF0Track track;
    Rng tr(rng.u64());
    for (int i = 0; i < 12; ++i) {
      track.voiced.push_back(tr.uniform() < 0.8 ? 1 : 0);
      track.values.push_back(track.voiced[i] ? tr.uniform(-0.3, 0.3) : 0.0);
    }
    Tensor delta0, q0;
    {
      Graph g;
      int lat = vq.encode(g, g.input(pitch::PitchVqvae::input_features(track)));
      auto q = vq.quantize(g.val(lat), false, nullptr);
      q0 = q.quantized;
      delta0 = q.quantized;
      for (size_t i = 0; i < delta0.v.size(); ++i) delta0.v[i] -= g.val(lat).v[i];
    }
    Tensor target = Tensor::zeros({track.frames(), 1}), vmask = target;
    for (int i = 0; i < track.frames(); ++i) {
      target(i, 0) = track.voiced[i] ? track.values[i] : 0.0;
      vmask(i, 0) = track.voiced[i] ? 1.0 : 0.0;
    }
    auto ps = vq.params();
    run_block("vq_straight_through", ps, [&](bool wg) {
      Graph g;
      int lat = vq.encode(g, g.input(pitch::PitchVqvae::input_features(track)));
      int q_st = g.add(lat, g.input(delta0));
      auto [recon, vlogit] = vq.decode(g, q_st);
      int l = core::masked_mse(g, recon, g.input(target), vmask);
      int vt = g.input(vmask);
      l = g.add(l, g.mean_all(g.sub(g.softplus(vlogit), g.mul(vlogit, vt))));
      l = g.add(l, g.scale(core::mse(g, lat, g.input(q0)), vq.cfg.commit_weight));
      if (wg) {
        for (auto* p : ps) p->zero_grad();
        g.backward(l);
      }
      return g.val(l).v[0];
    });
  }
  return merged;
}

}  // namespace pfvc::pipeline
