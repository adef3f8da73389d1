#pragma once

#include <string>
#include <vector>

#include "chanalign/harness/dataset.hpp"
#include "chanalign/harness/evals.hpp"
#include "chanalign/model.hpp"

namespace harness {

enum class BaselineKind {
  AreaSpecificRecon,  // CFENN+CRNN from scratch per adapt area
  AreaGeneralRecon,   // CFENN+CRNN from scratch on the pretrain split
  TaskSpecific,       // encoder + one head from scratch per (area, task)
  TaskGeneral,        // encoder + three heads, combined loss, per area
  PositionMlp,        // MLP on raw positions -> beam index, per area
};

BaselineKind baseline_kind_from(const std::string& name);
std::string baseline_kind_name(BaselineKind kind);

struct BenchRow {
  std::string method;
  std::string task;         // csi_feedback | position | los | beam
  int area_id = -1;
  std::string metric_name;  // nmse_db | cdf90_m | accuracy | top1
  double metric = 0;
  int64_t tuned_params = 0;
  int64_t total_params = 0;
  uint64_t seed = 0;
  double wall_s = 0;
};

struct BaselineOptions {
  model::ModelConfig model;  // dims for from-scratch encoders
  int epochs = 20;
  int batch_size = 64;
  double max_lr = 5e-4;
  double train_frac = 0.8;
  int head_epochs = 300;
  int max_areas = -1;  // limit adapt areas (-1: all)
};

// Fills model dims (map/csi sizes) from the dataset geometry.
model::ModelConfig model_config_for(const Dataset& ds, const model::ModelConfig& base);

std::vector<BenchRow> run_baseline(BaselineKind kind, const Dataset& ds, uint64_t seed,
                                   const BaselineOptions& opts);

// Equal-parameter MLP on flattened raw CSI for the position task, matched
// to `param_budget` (the TOFT head size).
std::vector<BenchRow> run_raw_csi_position_mlp(const Dataset& ds, uint64_t seed,
                                               const BaselineOptions& opts,
                                               int64_t param_budget);

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path);

}  // namespace harness
