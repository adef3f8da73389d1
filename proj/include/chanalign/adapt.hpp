#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "chanalign/channel.hpp"
#include "chanalign/model.hpp"
#include "chanalign/scenegen.hpp"

namespace adapt {

// ---- batch tensor assembly -------------------------------------------------

nncore::Tensor edge_batch_tensor(const std::vector<const scenegen::EdgeMap*>& maps);
nncore::Tensor env_batch_tensor(const std::vector<scenegen::EnvRecord>& recs);
nncore::Tensor csi_batch_tensor(const std::vector<const channel::RealCsiTensor*>& items);

// ---- zero-shot classification ----------------------------------------------

struct ZslResult {
  int index = 0;
  std::vector<double> probabilities;
};

// Embeds K >= 2 environment candidates through the frozen EPNN and the
// query CSI through the frozen CFENN, softmaxes the scaled similarities.
ZslResult zsl_classify(model::PretrainModel& m, const nncore::Tensor& cand_edges,
                       const nncore::Tensor& cand_envs, const nncore::Tensor& query_csi);

// Same rule on precomputed embeddings (rows need not be re-normalized).
ZslResult zsl_from_embeddings(const std::vector<std::vector<double>>& candidates,
                              const std::vector<double>& query, double logit_scale);

// Fraction of rows whose argmax hits the diagonal of the B x B similarity
// matrix, averaged over both directions.
double matching_accuracy(const nncore::Tensor& i_pe, const nncore::Tensor& i_wc);
double zsl_matching_accuracy(model::PretrainModel& m, const nncore::Tensor& edges,
                             const nncore::Tensor& envs, const nncore::Tensor& csi);

// ---- frozen CSI feedback ----------------------------------------------------

// CRNN(CFENN features) vs the input; per-sample NMSE in dB.
std::vector<double> csi_feedback_roundtrip(model::PretrainModel& m,
                                           const std::vector<const channel::RealCsiTensor*>& csi);
double csi_feedback_roundtrip(model::PretrainModel& m, const channel::RealCsiTensor& csi);

// ---- downstream task losses (value forms) ------------------------------------

// (1/2N) sum((x_hat-x)^2 + (y_hat-y)^2)
double positioning_loss(const std::vector<std::array<double, 2>>& pred,
                        const std::vector<std::array<double, 2>>& label);

// Binary cross-entropy, z=1 meaning NLOS; p clamped to [1e-7, 1-1e-7].
double los_loss(const std::vector<double>& p, const std::vector<int>& z);

// -(1/N) sum_ij m_ij (1-q_ij)^gamma ln q_ij with one-hot m given as label
// indices. Rows of q must sum to 1 (1e-6).
double beam_focal_loss(const std::vector<std::vector<double>>& q, const std::vector<int>& labels,
                       double gamma);

// ---- multi-BS concatenation --------------------------------------------------

// Embeds each CSI independently through the frozen CFENN and concatenates
// in the given order.
std::vector<double> multi_bs_embed(model::PretrainModel& m,
                                   const std::vector<const channel::RealCsiTensor*>& csis);

// ---- task-oriented fine-tuning ------------------------------------------------

struct TaskHeadConfig {
  int in_dim = 64;
  int hidden = 48;
  int hidden_layers = 2;
  int out_dim = 2;
};

// Lightweight MLP head: interleaved linear and quickGELU layers.
class TaskHead {
 public:
  TaskHead(const TaskHeadConfig& cfg, uint64_t seed);
  nncore::Tensor forward(const nncore::Tensor& x) const;
  nncore::ParameterStore& params() { return ps_; }
  const TaskHeadConfig& cfg() const { return cfg_; }
  int64_t param_count() const { return ps_.total_parameters(); }

 private:
  TaskHeadConfig cfg_;
  nncore::ParameterStore ps_;
  std::vector<nncore::Linear> layers_;
};

enum class TaskKind { Position, Los, Beam };

// Embedding rows plus per-sample labels; inputs are frozen-encoder
// outputs (or raw features for baselines).
struct TaskData {
  int n = 0, in_dim = 0;
  std::vector<double> inputs;          // n * in_dim
  std::vector<std::array<double, 2>> pos_px;
  std::vector<int> los;
  std::vector<int> beam;
  std::vector<double> scale_m_per_px;  // meters-per-pixel per sample
};

struct ToftResult {
  std::vector<double> epoch_losses;
  double final_metric = 0;             // CDF90 meters / accuracy / top-1
  std::vector<double> test_errors_m;   // position task only
  int64_t head_params = 0;
  int64_t encoder_params = 0;
};

// Task loss as a differentiable graph over raw network outputs
// (position: MSE halves; los: BCE over sigmoid logits; beam: focal over
// softmax logits).
nncore::Tensor task_loss_graph(const nncore::Tensor& outputs, const TaskData& labels,
                               TaskKind task, double focal_gamma = 2.0);

// Task metric from raw outputs: CDF90 meters (position, optionally
// exporting per-sample errors), accuracy (los), top-1 (beam).
double task_metric_from_outputs(const nncore::Tensor& outputs, const TaskData& labels,
                                TaskKind task, std::vector<double>* errors_m = nullptr);

// Supervised full-batch training of the head only. The encoder must be
// frozen; any gradient reaching it or any parameter drift is a contract
// violation and throws. Heads above 1% of the frozen parameter count are
// rejected.
ToftResult toft_train(TaskHead& head, model::PretrainModel& frozen_encoder, const TaskData& train,
                      const TaskData& test, TaskKind task, int epochs, uint64_t seed,
                      double lr = 1e-3, double focal_gamma = 2.0);

// Generic MLP trainer used by raw-input baselines: same loop and losses as
// toft_train, no encoder contract.
ToftResult train_head_raw(TaskHead& head, const TaskData& train, const TaskData& test,
                          TaskKind task, int epochs, uint64_t seed, double lr = 1e-3,
                          double focal_gamma = 2.0);

}  // namespace adapt
