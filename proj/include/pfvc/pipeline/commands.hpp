#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pfvc/content/content.hpp"
#include "pfvc/core/gradcheck.hpp"
#include "pfvc/corpus/corpus.hpp"
#include "pfvc/flow/flow.hpp"
#include "pfvc/pipeline/config.hpp"
#include "pfvc/pipeline/eval.hpp"
#include "pfvc/pitch/pitch_vqvae.hpp"

namespace pfvc::pipeline {

// missing stage dependency or bad invocation; the CLI prints the message and
// exits nonzero
struct StageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_run_log(const PipelineConfig& cfg, const std::string& command,
                   const std::string& notes, const std::string& runs_dir = "runs");

void cmd_make_corpus(const PipelineConfig& cfg, const std::string& out_dir);

struct PitchTrainResult {
  real dev_rmse = 0.0;        // voiced SMN reconstruction error, held-out
  real dev_voicing_acc = 0.0;
  real codebook_usage = 0.0;  // fraction of codes above the usage threshold
};
PitchTrainResult cmd_train_pitch(const PipelineConfig& cfg, const std::string& corpus_dir,
                                 const std::string& out_ckpt, bool verbose = true);

void cmd_fit_content(const PipelineConfig& cfg, const std::string& corpus_dir,
                     const std::string& out_ckpt);

void cmd_train_cfm(const PipelineConfig& cfg, const std::string& corpus_dir,
                   const std::string& pitch_ckpt, const std::string& content_ckpt,
                   const std::string& out_ckpt, bool verbose = true);

// loads every artifact needed for conversion
struct LoadedModels {
  pitch::PitchVqvae pitch_model;
  content::KMeansModel kmeans;
  flow::CondFlow flow_model;
  LoadedModels(pitch::PitchVqvae p, content::KMeansModel k, flow::CondFlow f)
      : pitch_model(std::move(p)), kmeans(std::move(k)), flow_model(std::move(f)) {}
};
LoadedModels load_models(const PipelineConfig& cfg, const std::string& pitch_ckpt,
                         const std::string& content_ckpt, const std::string& cfm_ckpt);

dsp::Waveform convert_one(const PipelineConfig& cfg, LoadedModels& models,
                          const dsp::Waveform& source, const dsp::Waveform& prompt,
                          uint64_t seed);

void cmd_convert(const PipelineConfig& cfg, LoadedModels& models,
                 const std::string& manifest_path);

struct EvalOptions {
  int n_pairs = 50;
  std::optional<int> ode_steps;  // override for sweeps
};
EvalReport cmd_eval(const PipelineConfig& cfg, LoadedModels& models,
                    const std::string& corpus_dir, const std::string& report_path,
                    const EvalOptions& opt = {}, bool verbose = true);

struct SweepRow {
  int ode_steps = 0;
  real wall_s = 0.0;
  real content_match = 0.0;
};
std::vector<SweepRow> cmd_step_sweep(const PipelineConfig& cfg, LoadedModels& models,
                                     const std::string& corpus_dir,
                                     const std::vector<int>& steps, int n_pairs);

core::GradcheckReport run_gradcheck_suite(real rtol = 1e-4, uint64_t seed = 7);

}  // namespace pfvc::pipeline
