#include "pfvc/pipeline/eval.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pfvc::pipeline {

std::string EvalReport::summary_line() const {
  std::ostringstream os;
  os.precision(4);
  os << "SUMMARY r=" << pitch_style_correlation << " content=" << content_match_rate
     << " envelope=" << envelope_classification_accuracy << " usage=" << codebook_usage;
  return os.str();
}

void EvalReport::write_tsv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("eval: cannot write report: " + path);
  f << "source\tprompt\tsource_speaker\tprompt_speaker\tcontent_match\t"
       "envelope_is_prompt\tconverted_smn_std\tprompt_style_param\n";
  f.precision(6);
  for (const auto& r : rows)
    f << r.source << '\t' << r.prompt << '\t' << r.source_speaker << '\t'
      << r.prompt_speaker << '\t' << r.content_match << '\t'
      << r.envelope_pred_is_prompt << '\t' << r.converted_smn_std << '\t'
      << r.prompt_style_param << '\n';
  f << summary_line() << '\n';
}

real pearson(const std::vector<real>& x, const std::vector<real>& y) {
  const size_t n = x.size();
  if (n == 0 || y.size() != n) return 0.0;
  real mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  real sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    const real dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const real denom = std::sqrt(sxx * syy);
  if (!(denom > 0.0)) return 0.0;
  return sxy / denom;
}

Tensor envelope_of(const dsp::MelSpectrogram& mel) {
  Tensor env = Tensor::zeros({1, mel.n_mels});
  const int t = std::max(mel.frames(), 1);
  for (int i = 0; i < mel.frames(); ++i)
    for (int m = 0; m < mel.n_mels; ++m) env(0, m) += mel.data(i, m);
  for (auto& v : env.v) v /= t;
  return env;
}

int classify_envelope(const Tensor& env, const std::vector<Tensor>& centroids) {
  int best = 0;
  real best_d = 1e300;
  for (size_t c = 0; c < centroids.size(); ++c) {
    real d = 0.0;
    for (size_t j = 0; j < env.v.size(); ++j) {
      const real diff = env.v[j] - centroids[c].v[j];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace pfvc::pipeline
