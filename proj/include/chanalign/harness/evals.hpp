#pragma once

#include <cstdint>

#include "chanalign/adapt.hpp"
#include "chanalign/harness/dataset.hpp"

namespace harness {

struct ZslSuiteResult {
  double accuracy = 0;
  double baseline = 0;  // majority class or chance level
  int n = 0;
};

// In-batch matching over the adapt split; batches are drawn within areas.
ZslSuiteResult eval_matching(model::PretrainModel& m, const Dataset& ds, int batch = 16,
                             uint64_t seed = 0);

// Two-candidate LOS/NLOS decision per sample (env records differing only
// in the LOS flag). Baseline is the majority class rate.
ZslSuiteResult eval_zsl_los(model::PretrainModel& m, const Dataset& ds, int max_samples = -1);

// Scale sensing among {0.8s, s, 1.2s}; baseline 1/3.
ZslSuiteResult eval_zsl_scale(model::PretrainModel& m, const Dataset& ds, int max_samples = -1);

// True UE position among k-1 decoy positions from the same area;
// baseline 1/k.
ZslSuiteResult eval_zsl_multiuser(model::PretrainModel& m, const Dataset& ds, int k = 5,
                                  uint64_t seed = 0, int max_samples = -1);

// Mean frozen CSI-feedback NMSE (dB) over the adapt split.
double eval_feedback_nmse(model::PretrainModel& m, const Dataset& ds, int max_samples = -1);

enum class ToftModality { Csi, Position };

struct ToftSplit {
  adapt::TaskData train, test;
};

// Frozen-encoder embeddings plus labels for one area, deterministically
// split into train/test.
ToftSplit build_toft_data(model::PretrainModel& m, const Dataset& ds, const AreaRecord& area,
                          ToftModality modality, double train_frac = 0.8, uint64_t seed = 0);

// Raw-feature baselines over the identical split: flattened CSI, or raw
// pixel positions.
ToftSplit build_raw_csi_data(const Dataset& ds, const AreaRecord& area, double train_frac = 0.8,
                             uint64_t seed = 0);
ToftSplit build_raw_position_data(const Dataset& ds, const AreaRecord& area,
                                  double train_frac = 0.8, uint64_t seed = 0);

// Largest hidden width whose MLP parameter count stays within budget.
int matched_hidden_width(int in_dim, int out_dim, int hidden_layers, int64_t budget);

}  // namespace harness
