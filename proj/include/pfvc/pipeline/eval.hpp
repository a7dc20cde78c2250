#pragma once

#include <string>
#include <vector>

#include "pfvc/dsp/dsp.hpp"

namespace pfvc::pipeline {

using core::Tensor;
using core::real;

struct EvalRow {
  std::string source, prompt;
  std::string source_speaker, prompt_speaker;
  real content_match = 0.0;
  int envelope_pred_is_prompt = 0;
  real converted_smn_std = 0.0;
  real prompt_style_param = 0.0;
};

struct EvalReport {
  real pitch_style_correlation = 0.0;
  real content_match_rate = 0.0;
  real envelope_classification_accuracy = 0.0;
  real codebook_usage = 0.0;
  std::vector<EvalRow> rows;

  std::string summary_line() const;
  void write_tsv(const std::string& path) const;
};

real pearson(const std::vector<real>& x, const std::vector<real>& y);

// utterance-level spectral envelope: the mel-frame average of the log-mel
Tensor envelope_of(const dsp::MelSpectrogram& mel);

// nearest centroid by squared distance; returns the index
int classify_envelope(const Tensor& env, const std::vector<Tensor>& centroids);

}  // namespace pfvc::pipeline
