#pragma once

#include <vector>

#include "pfvc/core/checkpoint.hpp"
#include "pfvc/core/nn.hpp"

namespace pfvc::timbre {

using core::Graph;
using core::Parameter;
using pfvc::Rng;
using core::Tensor;
using core::real;

struct TimbreConfig {
  int n_mels = 80;
  int d_model = 128;
  int d_spk = 64;
  int n_tokens = 64;
  bool use_tokens = true;  // ablation: when false, only the global embedding
};

// Dilated-conv feature encoder with multilayer aggregation, 64 learned-query
// cross-attention timbre tokens, and attentive statistical pooling for the
// global speaker embedding.
class TimbreEncoder {
 public:
  TimbreEncoder() = default;
  TimbreEncoder(const TimbreConfig& cfg, const Rng& rng);

  // mel [T x n_mels] -> hidden [T x d_model]
  int feature_encoder(Graph& g, int mel);
  // hidden -> [n_tokens x d_model]; throws on an empty sequence
  int extract_tokens(Graph& g, int hidden);
  // hidden -> [1 x d_spk], unit-normalized
  int global_embedding(Graph& g, int hidden);

  std::vector<Parameter*> params();
  void save_into(core::Checkpoint& ck) const;
  void load_from(const core::Checkpoint& ck);

  TimbreConfig cfg;

 private:
  core::Linear in_proj_;
  core::Conv1d c1_, c2_, c3_;
  core::Linear mfa_;
  Parameter queries_;
  core::Linear tok_k_, tok_v_;
  core::Linear asp_h_, asp_s_;
  core::Linear spk_out_;
};

}  // namespace pfvc::timbre
