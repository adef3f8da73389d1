#include "chanalign/model.hpp"

#include <cmath>
#include <json.hpp>
#include <stdexcept>

namespace model {

using nncore::Tensor;

void ModelConfig::validate() const {
  if (embed_dim % heads != 0)
    throw std::invalid_argument("ModelConfig: heads must divide embed_dim");
  if (map_px % map_patch_px != 0)
    throw std::invalid_argument("ModelConfig: map patch must divide map size");
  if (csi_nt % csi_patch_ant != 0 || csi_nc % csi_patch_sc != 0)
    throw std::invalid_argument("ModelConfig: csi patch must divide csi dims");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["embed_dim"] = embed_dim;
  j["rab_depth"] = rab_depth;
  j["heads"] = heads;
  j["map_px"] = map_px;
  j["map_patch_px"] = map_patch_px;
  j["env_dim"] = env_dim;
  j["csi_nt"] = csi_nt;
  j["csi_nc"] = csi_nc;
  j["csi_patch_ant"] = csi_patch_ant;
  j["csi_patch_sc"] = csi_patch_sc;
  j["msnn_enabled"] = msnn_enabled;
  j["temperature_enabled"] = temperature_enabled;
  j["logit_scale_init"] = logit_scale_init;
  j["logit_scale_min"] = logit_scale_min;
  j["logit_scale_max"] = logit_scale_max;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& json) {
  nlohmann::json j = nlohmann::json::parse(json);
  ModelConfig c;
  c.embed_dim = j.at("embed_dim");
  c.rab_depth = j.at("rab_depth");
  c.heads = j.at("heads");
  c.map_px = j.at("map_px");
  c.map_patch_px = j.at("map_patch_px");
  c.env_dim = j.at("env_dim");
  c.csi_nt = j.at("csi_nt");
  c.csi_nc = j.at("csi_nc");
  c.csi_patch_ant = j.at("csi_patch_ant");
  c.csi_patch_sc = j.at("csi_patch_sc");
  c.msnn_enabled = j.at("msnn_enabled");
  c.temperature_enabled = j.at("temperature_enabled");
  c.logit_scale_init = j.at("logit_scale_init");
  c.logit_scale_min = j.at("logit_scale_min");
  c.logit_scale_max = j.at("logit_scale_max");
  return c;
}

PretrainModel::PretrainModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg), ps_(seed) {
  cfg_.validate();
  int d = cfg_.embed_dim;

  ep_patch_ = nncore::PatchEmbed2d(ps_, "epnn.patch", 1, cfg_.map_patch_px, cfg_.map_patch_px, d);
  ep_env_ = nncore::Linear(ps_, "epnn.env", cfg_.env_dim, d);
  ep_class_ = ps_.create("epnn.class", {d}, nncore::Init::TruncNormal);
  ep_pos_ = ps_.create("epnn.pos", {cfg_.map_tokens() + 2, d}, nncore::Init::TruncNormal);
  if (!cfg_.msnn_enabled)
    for (int i = 0; i < cfg_.rab_depth; i++)
      ep_rabs_.emplace_back(ps_, "epnn.rab" + std::to_string(i), d, cfg_.heads);
  ep_lnf_ = nncore::LayerNorm(ps_, "epnn.ln_final", d);
  ep_proj_ = nncore::Linear(ps_, "epnn.proj", d, d);

  cf_patch_ =
      nncore::PatchEmbed2d(ps_, "cfenn.patch", 2, cfg_.csi_patch_ant, cfg_.csi_patch_sc, d);
  cf_class_ = ps_.create("cfenn.class", {d}, nncore::Init::TruncNormal);
  cf_pos_ = ps_.create("cfenn.pos", {cfg_.csi_tokens() + 1, d}, nncore::Init::TruncNormal);
  if (!cfg_.msnn_enabled)
    for (int i = 0; i < cfg_.rab_depth; i++)
      cf_rabs_.emplace_back(ps_, "cfenn.rab" + std::to_string(i), d, cfg_.heads);
  cf_lnf_ = nncore::LayerNorm(ps_, "cfenn.ln_final", d);
  cf_proj_ = nncore::Linear(ps_, "cfenn.proj", d, d);

  if (cfg_.msnn_enabled)
    for (int i = 0; i < cfg_.rab_depth; i++)
      ms_rabs_.emplace_back(ps_, "msnn.rab" + std::to_string(i), d, cfg_.heads);

  cr_up_ = nncore::Linear(ps_, "crnn.up", d, cfg_.csi_tokens() * d);
  cr_pos_ = ps_.create("crnn.pos", {cfg_.csi_tokens(), d}, nncore::Init::TruncNormal);
  for (int i = 0; i < cfg_.rab_depth; i++)
    cr_rabs_.emplace_back(ps_, "crnn.rab" + std::to_string(i), d, cfg_.heads);
  cr_lnf_ = nncore::LayerNorm(ps_, "crnn.ln_final", d);
  cr_head_ = nncore::Linear(ps_, "crnn.head", d, 2 * cfg_.csi_patch_ant * cfg_.csi_patch_sc);

  if (cfg_.temperature_enabled) {
    logit_scale_ = ps_.create("logit_scale", {1}, nncore::Init::Zeros);
    logit_scale_.data()[0] = cfg_.logit_scale_init;
  }
}

Tensor PretrainModel::tower_trunk(Tensor seq, const std::vector<nncore::Rab>& own_stack) {
  const auto& stack = cfg_.msnn_enabled ? ms_rabs_ : own_stack;
  for (const auto& rab : stack) seq = rab.forward(seq);
  return seq;
}

Tensor PretrainModel::epnn_forward(const Tensor& edge_maps, const Tensor& env) {
  if (edge_maps.ndim() != 4 || edge_maps.dim(1) != 1 || edge_maps.dim(2) != cfg_.map_px ||
      edge_maps.dim(3) != cfg_.map_px)
    throw std::invalid_argument("epnn_forward: edge map shape mismatch");
  if (env.ndim() != 2 || env.dim(1) != cfg_.env_dim || env.dim(0) != edge_maps.dim(0))
    throw std::invalid_argument("epnn_forward: env record shape mismatch");
  int b = edge_maps.dim(0);

  // Fixed input conditioning: pixel coordinates to [0,1], heights and
  // scale to O(1).
  std::vector<double> factors = {1.0 / cfg_.map_px, 1.0 / cfg_.map_px, 0.1,
                                 1.0 / cfg_.map_px, 1.0 / cfg_.map_px, 0.1,
                                 1.0,               0.1};
  std::vector<double> tile(static_cast<size_t>(b) * cfg_.env_dim);
  for (int i = 0; i < b; i++)
    std::copy(factors.begin(), factors.end(), tile.begin() + static_cast<int64_t>(i) * 8);
  Tensor env_scaled = nncore::mul(env, Tensor::from_vector({b, cfg_.env_dim}, tile));

  Tensor tokens = ep_patch_.forward(edge_maps);  // [B,S,D]
  Tensor env_token = nncore::reshape(ep_env_.forward(env_scaled), {b, 1, cfg_.embed_dim});
  Tensor seq = nncore::concat_tokens(nncore::expand_token(ep_class_, b),
                                     nncore::concat_tokens(tokens, env_token));
  seq = nncore::pos_add(seq, ep_pos_);
  seq = tower_trunk(seq, ep_rabs_);
  Tensor feat = ep_proj_.forward(ep_lnf_.forward(nncore::slice_token(seq, 0)));
  return nncore::l2_normalize_rows(feat);
}

Tensor PretrainModel::cfenn_features(const Tensor& csi) {
  if (csi.ndim() != 4 || csi.dim(1) != 2 || csi.dim(2) != cfg_.csi_nt || csi.dim(3) != cfg_.csi_nc)
    throw std::invalid_argument("cfenn_features: csi tensor shape mismatch");
  int b = csi.dim(0);
  Tensor tokens = cf_patch_.forward(csi);
  Tensor seq = nncore::concat_tokens(nncore::expand_token(cf_class_, b), tokens);
  seq = nncore::pos_add(seq, cf_pos_);
  seq = tower_trunk(seq, cf_rabs_);
  return cf_proj_.forward(cf_lnf_.forward(nncore::slice_token(seq, 0)));
}

Tensor PretrainModel::cfenn_forward(const Tensor& csi) {
  return nncore::l2_normalize_rows(cfenn_features(csi));
}

Tensor PretrainModel::crnn_forward(const Tensor& features) {
  if (features.ndim() != 2 || features.dim(1) != cfg_.embed_dim)
    throw std::invalid_argument("crnn_forward: feature shape mismatch");
  int b = features.dim(0);
  Tensor seq = nncore::reshape(cr_up_.forward(features), {b, cfg_.csi_tokens(), cfg_.embed_dim});
  seq = nncore::pos_add(seq, cr_pos_);
  for (const auto& rab : cr_rabs_) seq = rab.forward(seq);
  Tensor patches = cr_head_.forward(cr_lnf_.forward(seq));
  return nncore::row2im(patches, 2, cfg_.csi_nt, cfg_.csi_nc, cfg_.csi_patch_ant,
                        cfg_.csi_patch_sc);
}

Tensor PretrainModel::logit_scale() const {
  if (!cfg_.temperature_enabled) return Tensor::scalar(1.0);
  return nncore::clamp(logit_scale_, cfg_.logit_scale_min, cfg_.logit_scale_max);
}

void PretrainModel::project_logit_scale() {
  if (!cfg_.temperature_enabled) return;
  double& v = logit_scale_.data()[0];
  v = std::min(std::max(v, cfg_.logit_scale_min), cfg_.logit_scale_max);
}

SimilarityPair similarity_matrices(const Tensor& i_pe, const Tensor& i_wc,
                                   const Tensor& logit_scale) {
  if (i_pe.ndim() != 2 || i_wc.ndim() != 2 || i_pe.shape() != i_wc.shape())
    throw std::invalid_argument("similarity_matrices: embedding shape mismatch");
  auto check_rows = [](const Tensor& t, const char* label) {
    int n = t.dim(0), d = t.dim(1);
    nncore::ConstMatMap m(t.data().data(), n, d);
    for (int r = 0; r < n; r++)
      if (std::abs(m.row(r).norm() - 1.0) > 1e-6)
        throw std::invalid_argument(std::string("similarity_matrices: unnormalized rows in ") +
                                    label);
  };
  check_rows(i_pe, "i_pe");
  check_rows(i_wc, "i_wc");
  SimilarityPair sim;
  sim.m_pe_wc = nncore::scale_by(nncore::matmul(i_pe, nncore::transpose2d(i_wc)), logit_scale);
  sim.m_wc_pe = nncore::transpose2d(sim.m_pe_wc);
  return sim;
}

ContrastiveLoss contrastive_loss(const SimilarityPair& sim) {
  if (sim.m_pe_wc.ndim() != 2 || sim.m_pe_wc.dim(0) != sim.m_pe_wc.dim(1))
    throw std::invalid_argument("contrastive_loss: similarity matrix must be square");
  int b = sim.m_pe_wc.dim(0);
  std::vector<int> diag(static_cast<size_t>(b));
  for (int i = 0; i < b; i++) diag[static_cast<size_t>(i)] = i;
  ContrastiveLoss out;
  out.l_pe_wc = nncore::softmax_cross_entropy(sim.m_pe_wc, diag);
  out.l_wc_pe = nncore::softmax_cross_entropy(sim.m_wc_pe, diag);
  out.l_c = nncore::scale(nncore::add(out.l_pe_wc, out.l_wc_pe), 0.5);
  return out;
}

Tensor reconstruction_loss(const Tensor& h_hat, const Tensor& h) {
  if (h_hat.shape() != h.shape())
    throw std::invalid_argument("reconstruction_loss: shape mismatch");
  int n = h_hat.dim(0);
  Tensor d = nncore::sub(h_hat, h);
  return nncore::scale(nncore::sum(nncore::mul(d, d)), 1.0 / n);
}

Tensor pretrain_loss(const Tensor& l_c, const Tensor& l_r) { return nncore::add(l_c, l_r); }

}  // namespace model
