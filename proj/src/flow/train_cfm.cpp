#include "pfvc/flow/train_cfm.hpp"

#include <cstdio>
#include <stdexcept>

#include "pfvc/core/optim.hpp"

namespace pfvc::flow {

namespace {

// crop a training item to `len` mel frames starting at a pitch-aligned
// offset, slicing the 25 Hz token stream to match
TrainItem crop_item(const TrainItem& full, int start, int len) {
  TrainItem out;
  const int t_total = full.mel.rows();
  len = std::min(len, t_total - start);
  out.mel = Tensor::zeros({len, full.mel.cols()});
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < full.mel.cols(); ++j) out.mel(i, j) = full.mel(start + i, j);
  out.sem_ids.assign(full.sem_ids.begin() + start, full.sem_ids.begin() + start + len);

  const int p_start = static_cast<int>(start * 0.4);
  const int p_need = pitch_index_for_frame(len - 1, 1 << 30) + 1;
  const int p_end = std::min(full.pitch_tokens.length(), p_start + p_need);
  out.pitch_tokens.ids.assign(full.pitch_tokens.ids.begin() + p_start,
                              full.pitch_tokens.ids.begin() + p_end);
  out.pitch_tokens.voiced.assign(full.pitch_tokens.voiced.begin() + p_start,
                                 full.pitch_tokens.voiced.begin() + p_end);
  if (out.pitch_tokens.ids.empty()) {
    out.pitch_tokens.ids.push_back(0);
    out.pitch_tokens.voiced.push_back(0);
  }
  out.ref_mel = full.ref_mel;
  return out;
}

}  // namespace

TrainStats train_cfm(CondFlow& model, const std::vector<TrainItem>& items,
                     const std::vector<std::vector<int>>& by_speaker,
                     const CfmTrainConfig& tc, bool verbose) {
  if (items.empty()) throw std::runtime_error("train_cfm: no training items");
  const int crop = std::max(5, tc.crop - tc.crop % 5);

  std::vector<Parameter*> ps = model.params();
  core::Adam opt(ps, {.lr = tc.lr, .grad_clip = tc.grad_clip});
  Rng root(tc.seed);

  TrainStats stats;
  real window_sum = 0.0;
  int window_n = 0;

  for (int step = 0; step < tc.steps; ++step) {
    Rng rng = root.split(step);

    const int idx = rng.uniform_int(0, static_cast<int>(items.size()) - 1);
    const TrainItem& full = items[idx];

    // timbre reference: another utterance of the same speaker when available
    const TrainItem* ref_src = &full;
    for (const auto& group : by_speaker) {
      bool found = false;
      for (int gi : group)
        if (gi == idx) {
          found = true;
          break;
        }
      if (found && group.size() > 1) {
        int pick = idx;
        while (pick == idx) pick = group[rng.uniform_int(0, static_cast<int>(group.size()) - 1)];
        ref_src = &items[pick];
        break;
      }
      if (found) break;
    }

    const int t_total = full.mel.rows();
    int start = 0;
    if (t_total > crop) {
      const int max_start = (t_total - crop) / 5;
      start = 5 * rng.uniform_int(0, max_start);
    }
    TrainItem item = crop_item(full, start, crop);
    item.ref_mel = ref_src->mel;

    opt.zero_grad();
    Graph g;
    StepInfo info;
    int loss = cfm_loss(g, model, item, model.cfg, rng, &info);
    g.backward(loss);
    opt.step();

    if (step == 0) stats.first_loss = info.loss;
    window_sum += info.loss;
    ++window_n;
    if (verbose && tc.log_every > 0 && (step + 1) % tc.log_every == 0) {
      std::printf("  cfm step %5d/%d  loss %.4f\n", step + 1, tc.steps,
                  window_sum / window_n);
      std::fflush(stdout);
      stats.last_avg_loss = window_sum / window_n;
      window_sum = 0.0;
      window_n = 0;
    }
  }
  if (window_n > 0) stats.last_avg_loss = window_sum / window_n;
  return stats;
}

}  // namespace pfvc::flow
