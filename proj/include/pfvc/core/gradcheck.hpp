#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pfvc/core/graph.hpp"

namespace pfvc::core {

struct GradcheckBlock {
  std::string name;
  real max_rel_err = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GradcheckBlock> blocks;
  bool pass = true;
  std::string summary() const;
};

// Central finite differences against graph backward. `loss` must be a pure
// deterministic function of the parameter values: called with with_grad=true
// it must also run backward so Parameter::grad is filled. Large blocks are
// probed on a deterministic entry subsample.
GradcheckReport gradcheck(const std::vector<Parameter*>& params,
                          const std::function<real(bool with_grad)>& loss,
                          real rtol = 1e-4, int max_entries_per_block = 24,
                          uint64_t seed = 0);

}  // namespace pfvc::core
