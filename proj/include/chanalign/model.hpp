#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chanalign/nncore/layers.hpp"

namespace model {

struct ModelConfig {
  int embed_dim = 64;
  int rab_depth = 4;
  int heads = 4;
  int map_px = 64;
  int map_patch_px = 8;
  int env_dim = 8;
  int csi_nt = 32, csi_nc = 64;
  int csi_patch_ant = 4, csi_patch_sc = 8;
  bool msnn_enabled = false;
  bool temperature_enabled = true;
  double logit_scale_init = 14.29;
  double logit_scale_min = 1.0, logit_scale_max = 100.0;

  int map_tokens() const { return (map_px / map_patch_px) * (map_px / map_patch_px); }
  int csi_tokens() const { return (csi_nt / csi_patch_ant) * (csi_nc / csi_patch_sc); }
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& json);
};

// Two-tower environment/channel encoder pair with a channel-reconstruction
// decoder. When msnn_enabled, both towers run the same shared RAB stack;
// otherwise each tower owns its stack.
class PretrainModel {
 public:
  PretrainModel(const ModelConfig& cfg, uint64_t seed);

  // edge_maps [B,1,P,P] + env records [B,8] -> unit-norm embeddings [B,D].
  nncore::Tensor epnn_forward(const nncore::Tensor& edge_maps, const nncore::Tensor& env);
  // csi [B,2,Nt,Nc] -> unit-norm embeddings [B,D].
  nncore::Tensor cfenn_forward(const nncore::Tensor& csi);
  // Channel feature before L2 normalization; this is what the decoder
  // consumes, since normalization discards the scale the reconstruction
  // needs.
  nncore::Tensor cfenn_features(const nncore::Tensor& csi);
  // features [B,D] -> reconstructed CSI tensor [B,2,Nt,Nc].
  nncore::Tensor crnn_forward(const nncore::Tensor& features);

  // Contrastive logit scale: a clamped learnable scalar, or constant 1
  // when the temperature is disabled.
  nncore::Tensor logit_scale() const;
  // Projects the raw scale parameter back into its clamp interval
  // (called after optimizer steps).
  void project_logit_scale();

  nncore::ParameterStore& params() { return ps_; }
  const nncore::ParameterStore& params() const { return ps_; }
  const ModelConfig& cfg() const { return cfg_; }
  void set_frozen(bool frozen) { ps_.set_requires_grad(!frozen); }

 private:
  nncore::Tensor tower_trunk(nncore::Tensor seq, const std::vector<nncore::Rab>& own_stack);

  ModelConfig cfg_;
  nncore::ParameterStore ps_;

  nncore::PatchEmbed2d ep_patch_;
  nncore::Linear ep_env_;
  nncore::Tensor ep_class_, ep_pos_;
  std::vector<nncore::Rab> ep_rabs_;
  nncore::LayerNorm ep_lnf_;
  nncore::Linear ep_proj_;

  nncore::PatchEmbed2d cf_patch_;
  nncore::Tensor cf_class_, cf_pos_;
  std::vector<nncore::Rab> cf_rabs_;
  nncore::LayerNorm cf_lnf_;
  nncore::Linear cf_proj_;

  std::vector<nncore::Rab> ms_rabs_;  // shared stack when msnn_enabled

  nncore::Linear cr_up_;
  nncore::Tensor cr_pos_;
  std::vector<nncore::Rab> cr_rabs_;
  nncore::LayerNorm cr_lnf_;
  nncore::Linear cr_head_;

  nncore::Tensor logit_scale_;
};

struct SimilarityPair {
  nncore::Tensor m_pe_wc;  // logit_scale * I_pe I_wc^T
  nncore::Tensor m_wc_pe;  // exact transpose of the above
};

// Rows of both inputs must be unit-norm (checked to 1e-6).
SimilarityPair similarity_matrices(const nncore::Tensor& i_pe, const nncore::Tensor& i_wc,
                                   const nncore::Tensor& logit_scale);

struct ContrastiveLoss {
  nncore::Tensor l_pe_wc, l_wc_pe, l_c;
};

// Per-row softmax cross-entropy against the diagonal, both directions,
// averaged.
ContrastiveLoss contrastive_loss(const SimilarityPair& sim);

// Mean over samples of the per-sample squared Euclidean reconstruction
// error.
nncore::Tensor reconstruction_loss(const nncore::Tensor& h_hat, const nncore::Tensor& h);

nncore::Tensor pretrain_loss(const nncore::Tensor& l_c, const nncore::Tensor& l_r);

struct LossReport {
  double l_pe_wc = 0, l_wc_pe = 0, l_c = 0, l_r = 0, total = 0;
};

}  // namespace model
