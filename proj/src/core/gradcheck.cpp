#include "pfvc/core/gradcheck.hpp"

#include <cmath>
#include <sstream>

#include "pfvc/core/rng.hpp"

namespace pfvc::core {

std::string GradcheckReport::summary() const {
  std::ostringstream os;
  for (const auto& b : blocks)
    os << (b.pass ? "  ok   " : "  FAIL ") << b.name
       << "  max_rel_err=" << b.max_rel_err << "\n";
  os << (pass ? "gradcheck: all blocks pass" : "gradcheck: FAILURES present") << "\n";
  return os.str();
}

GradcheckReport gradcheck(const std::vector<Parameter*>& params,
                          const std::function<real(bool)>& loss, real rtol,
                          int max_entries_per_block, uint64_t seed) {
  GradcheckReport report;

  for (auto* p : params) p->zero_grad();
  loss(true);
  std::vector<std::vector<real>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad.v);

  Rng rng(seed ^ 0x9d2c5680u);
  for (size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    GradcheckBlock block;
    block.name = p.name;

    const int n = static_cast<int>(p.value.v.size());
    std::vector<int> entries;
    if (n <= max_entries_per_block) {
      for (int i = 0; i < n; ++i) entries.push_back(i);
    } else {
      Rng er = rng.split(fnv1a(p.name.data(), p.name.size()));
      for (int i = 0; i < max_entries_per_block; ++i)
        entries.push_back(er.uniform_int(0, n - 1));
    }

    for (int idx : entries) {
      const real x0 = p.value.v[idx];
      const real eps = 1e-5 * std::max(1.0, std::fabs(x0));
      p.value.v[idx] = x0 + eps;
      const real lp = loss(false);
      p.value.v[idx] = x0 - eps;
      const real lm = loss(false);
      p.value.v[idx] = x0;
      const real fd = (lp - lm) / (2.0 * eps);
      const real an = analytic[k][idx];
      const real rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-6});
      if (rel > block.max_rel_err) block.max_rel_err = rel;
    }
    block.pass = block.max_rel_err <= rtol;
    report.pass = report.pass && block.pass;
    report.blocks.push_back(std::move(block));
  }
  return report;
}

}  // namespace pfvc::core
