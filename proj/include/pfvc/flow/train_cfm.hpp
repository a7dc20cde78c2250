#pragma once

#include <vector>

#include "pfvc/flow/flow.hpp"

namespace pfvc::flow {

struct CfmTrainConfig {
  int steps = 3000;
  real lr = 3e-4;
  real grad_clip = 1.0;
  int crop = 96;  // mel frames per training example (multiple of 5 enforced)
  uint64_t seed = 1;
  int log_every = 200;
};

struct TrainStats {
  real first_loss = 0.0;
  real last_avg_loss = 0.0;  // mean over the final log window
};

// items grouped per speaker so the timbre reference can come from a different
// utterance of the same speaker
TrainStats train_cfm(CondFlow& model, const std::vector<TrainItem>& items,
                     const std::vector<std::vector<int>>& by_speaker,
                     const CfmTrainConfig& tc, bool verbose = true);

}  // namespace pfvc::flow
