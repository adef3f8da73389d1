#pragma once

#include <string>
#include <vector>

#include "chanalign/harness/dataset.hpp"
#include "chanalign/model.hpp"
#include "chanalign/nncore/optim.hpp"

namespace harness {

struct PretrainConfig {
  model::ModelConfig model;
  int epochs = 100;
  int batch_size = 64;
  nncore::AdamWConfig opt;
  nncore::LrSchedule sched;       // cycle_steps <= 0: one cycle over the run
  uint64_t seed = 1;
  int checkpoint_every = 0;       // epochs; 0 disables periodic checkpoints
  std::string out_dir;            // empty: keep everything in memory
};

struct StepRecord {
  int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  model::LossReport loss;
};

struct PretrainResult {
  std::vector<StepRecord> history;
  std::string checkpoint_path;  // empty if out_dir was empty
};

// Joint contrastive + reconstruction training over the pretrain split.
// Batches pair each sample's environment and channel modalities; partial
// trailing batches are dropped (the contrastive target is the diagonal of
// a square batch). Deterministic per seed.
PretrainResult run_pretraining(const PretrainConfig& cfg, const Dataset& data,
                               model::PretrainModel& m);

// One optimization step on explicit batch tensors; exposed for tests.
model::LossReport pretrain_step(model::PretrainModel& m, nncore::AdamW& opt, double lr,
                                const nncore::Tensor& edges, const nncore::Tensor& env,
                                const nncore::Tensor& csi);

void write_history_csv(const std::vector<StepRecord>& history, const std::string& path);

}  // namespace harness
