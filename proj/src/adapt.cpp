#include "chanalign/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "chanalign/errors.hpp"
#include "chanalign/harness/metrics.hpp"
#include "chanalign/nncore/optim.hpp"

namespace adapt {

using nncore::Tensor;

Tensor edge_batch_tensor(const std::vector<const scenegen::EdgeMap*>& maps) {
  if (maps.empty()) throw std::invalid_argument("edge_batch_tensor: empty batch");
  int n = static_cast<int>(maps.size());
  int px = maps[0]->size_px;
  std::vector<double> data(static_cast<size_t>(n) * px * px);
  for (int i = 0; i < n; i++) {
    if (maps[static_cast<size_t>(i)]->size_px != px)
      throw std::invalid_argument("edge_batch_tensor: mixed map sizes");
    const auto& e = maps[static_cast<size_t>(i)]->edges;
    for (size_t j = 0; j < e.size(); j++)
      data[static_cast<size_t>(i) * px * px + j] = e[j] ? 1.0 : 0.0;
  }
  return Tensor::from_vector({n, 1, px, px}, data);
}

Tensor env_batch_tensor(const std::vector<scenegen::EnvRecord>& recs) {
  if (recs.empty()) throw std::invalid_argument("env_batch_tensor: empty batch");
  int n = static_cast<int>(recs.size());
  std::vector<double> data;
  data.reserve(static_cast<size_t>(n) * 8);
  for (const auto& r : recs) {
    auto a = r.as_array();
    data.insert(data.end(), a.begin(), a.end());
  }
  return Tensor::from_vector({n, 8}, data);
}

Tensor csi_batch_tensor(const std::vector<const channel::RealCsiTensor*>& items) {
  if (items.empty()) throw std::invalid_argument("csi_batch_tensor: empty batch");
  int n = static_cast<int>(items.size());
  int nt = items[0]->n_t, nc = items[0]->n_c;
  std::vector<double> data;
  data.reserve(static_cast<size_t>(n) * 2 * nt * nc);
  for (const auto* t : items) {
    if (t->n_t != nt || t->n_c != nc)
      throw std::invalid_argument("csi_batch_tensor: mixed csi shapes");
    data.insert(data.end(), t->t.begin(), t->t.end());
  }
  return Tensor::from_vector({n, 2, nt, nc}, data);
}

namespace {

std::vector<double> softmax(const std::vector<double>& x) {
  double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> e(x.size());
  double z = 0;
  for (size_t i = 0; i < x.size(); i++) {
    e[i] = std::exp(x[i] - mx);
    z += e[i];
  }
  for (double& v : e) v /= z;
  return e;
}

int argmax_lowest(const std::vector<double>& x) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(x.size()); i++)
    if (x[static_cast<size_t>(i)] > x[static_cast<size_t>(best)]) best = i;
  return best;
}

}  // namespace

ZslResult zsl_from_embeddings(const std::vector<std::vector<double>>& candidates,
                              const std::vector<double>& query, double logit_scale) {
  if (candidates.size() < 2) throw std::invalid_argument("zsl: need at least 2 candidates");
  std::vector<double> sims(candidates.size());
  for (size_t k = 0; k < candidates.size(); k++) {
    if (candidates[k].size() != query.size())
      throw std::invalid_argument("zsl: embedding dim mismatch");
    double s = 0;
    for (size_t j = 0; j < query.size(); j++) s += candidates[k][j] * query[j];
    sims[k] = logit_scale * s;
  }
  ZslResult res;
  res.probabilities = softmax(sims);
  res.index = argmax_lowest(res.probabilities);
  return res;
}

ZslResult zsl_classify(model::PretrainModel& m, const nncore::Tensor& cand_edges,
                       const nncore::Tensor& cand_envs, const nncore::Tensor& query_csi) {
  int k = cand_envs.dim(0);
  if (k < 2) throw std::invalid_argument("zsl_classify: need at least 2 candidates");
  Tensor i_pe = m.epnn_forward(cand_edges, cand_envs);
  Tensor i_wc = m.cfenn_forward(query_csi);
  std::vector<std::vector<double>> cands(static_cast<size_t>(k));
  int d = i_pe.dim(1);
  for (int i = 0; i < k; i++)
    cands[static_cast<size_t>(i)].assign(i_pe.data().data() + static_cast<int64_t>(i) * d,
                                         i_pe.data().data() + static_cast<int64_t>(i + 1) * d);
  std::vector<double> q(i_wc.data().data(), i_wc.data().data() + d);
  return zsl_from_embeddings(cands, q, m.logit_scale().item());
}

double matching_accuracy(const Tensor& i_pe, const Tensor& i_wc) {
  if (i_pe.ndim() != 2 || i_pe.shape() != i_wc.shape())
    throw std::invalid_argument("matching_accuracy: shape mismatch");
  int b = i_pe.dim(0), d = i_pe.dim(1);
  if (b == 0) throw std::invalid_argument("matching_accuracy: empty batch");
  nncore::ConstMatMap pe(i_pe.data().data(), b, d);
  nncore::ConstMatMap wc(i_wc.data().data(), b, d);
  Eigen::MatrixXd sim = pe * wc.transpose();
  int hits = 0;
  for (int r = 0; r < b; r++) {
    int arg = 0;
    sim.row(r).maxCoeff(&arg);
    if (arg == r) hits++;
  }
  for (int c = 0; c < b; c++) {
    int arg = 0;
    sim.col(c).maxCoeff(&arg);
    if (arg == c) hits++;
  }
  return static_cast<double>(hits) / (2.0 * b);
}

double zsl_matching_accuracy(model::PretrainModel& m, const Tensor& edges, const Tensor& envs,
                             const Tensor& csi) {
  Tensor i_pe = m.epnn_forward(edges, envs);
  Tensor i_wc = m.cfenn_forward(csi);
  return matching_accuracy(i_pe, i_wc);
}

std::vector<double> csi_feedback_roundtrip(model::PretrainModel& m,
                                           const std::vector<const channel::RealCsiTensor*>& csi) {
  Tensor in = csi_batch_tensor(csi);
  Tensor recon = m.crnn_forward(m.cfenn_features(in));
  int n = in.dim(0), nt = in.dim(2), nc = in.dim(3);
  int64_t block = static_cast<int64_t>(2) * nt * nc;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; i++) {
    channel::RealCsiTensor hat;
    hat.n_t = nt;
    hat.n_c = nc;
    hat.t.assign(recon.data().data() + i * block, recon.data().data() + (i + 1) * block);
    out.push_back(channel::nmse_db(channel::to_complex(hat), channel::to_complex(*csi[i])));
  }
  return out;
}

double csi_feedback_roundtrip(model::PretrainModel& m, const channel::RealCsiTensor& csi) {
  return csi_feedback_roundtrip(m, {&csi})[0];
}

double positioning_loss(const std::vector<std::array<double, 2>>& pred,
                        const std::vector<std::array<double, 2>>& label) {
  if (pred.size() != label.size() || pred.empty())
    throw std::invalid_argument("positioning_loss: shape mismatch");
  double acc = 0;
  for (size_t i = 0; i < pred.size(); i++) {
    double dx = pred[i][0] - label[i][0];
    double dy = pred[i][1] - label[i][1];
    acc += dx * dx + dy * dy;
  }
  return acc / (2.0 * pred.size());
}

double los_loss(const std::vector<double>& p, const std::vector<int>& z) {
  if (p.size() != z.size() || p.empty()) throw std::invalid_argument("los_loss: shape mismatch");
  double acc = 0;
  for (size_t i = 0; i < p.size(); i++) {
    double pi = std::min(std::max(p[i], 1e-7), 1.0 - 1e-7);
    acc += z[i] ? std::log(pi) : std::log(1.0 - pi);
  }
  return -acc / p.size();
}

double beam_focal_loss(const std::vector<std::vector<double>>& q, const std::vector<int>& labels,
                       double gamma) {
  if (q.size() != labels.size() || q.empty())
    throw std::invalid_argument("beam_focal_loss: shape mismatch");
  if (gamma < 0) throw std::invalid_argument("beam_focal_loss: gamma must be >= 0");
  double acc = 0;
  for (size_t i = 0; i < q.size(); i++) {
    double row_sum = 0;
    for (double v : q[i]) row_sum += v;
    if (std::abs(row_sum - 1.0) > 1e-6)
      throw std::invalid_argument("beam_focal_loss: rows must sum to 1");
    int j = labels[i];
    if (j < 0 || j >= static_cast<int>(q[i].size()))
      throw std::invalid_argument("beam_focal_loss: label out of range");
    double qt = std::min(std::max(q[i][static_cast<size_t>(j)], 1e-12), 1.0);
    acc += std::pow(1.0 - qt, gamma) * std::log(qt);
  }
  return -acc / q.size();
}

std::vector<double> multi_bs_embed(model::PretrainModel& m,
                                   const std::vector<const channel::RealCsiTensor*>& csis) {
  if (csis.empty()) throw std::invalid_argument("multi_bs_embed: empty BS list");
  std::vector<double> out;
  for (const auto* c : csis) {
    Tensor e = m.cfenn_forward(csi_batch_tensor({c}));
    out.insert(out.end(), e.data().data(), e.data().data() + e.size());
  }
  return out;
}

TaskHead::TaskHead(const TaskHeadConfig& cfg, uint64_t seed) : cfg_(cfg), ps_(seed) {
  int in = cfg.in_dim;
  for (int i = 0; i < cfg.hidden_layers; i++) {
    layers_.emplace_back(ps_, "head.fc" + std::to_string(i), in, cfg.hidden);
    in = cfg.hidden;
  }
  layers_.emplace_back(ps_, "head.out", in, cfg.out_dim);
}

Tensor TaskHead::forward(const Tensor& x) const {
  Tensor h = x;
  for (size_t i = 0; i + 1 < layers_.size(); i++)
    h = nncore::quick_gelu(layers_[i].forward(h));
  return layers_.back().forward(h);
}

Tensor task_loss_graph(const Tensor& out, const TaskData& data, TaskKind task,
                       double focal_gamma) {
  int n = data.n;
  switch (task) {
    case TaskKind::Position: {
      std::vector<double> lbl;
      lbl.reserve(static_cast<size_t>(n) * 2);
      for (const auto& p : data.pos_px) {
        lbl.push_back(p[0]);
        lbl.push_back(p[1]);
      }
      Tensor target = Tensor::from_vector({n, 2}, lbl);
      Tensor d = nncore::sub(out, target);
      return nncore::scale(nncore::sum(nncore::mul(d, d)), 1.0 / (2.0 * n));
    }
    case TaskKind::Los: {
      Tensor p = nncore::clamp(nncore::sigmoid(out), 1e-7, 1.0 - 1e-7);
      // -(1/N) sum z ln p + (1-z) ln(1-p), via sign/offset masks
      std::vector<double> zs, os;
      for (int z : data.los) {
        zs.push_back(z ? 1.0 : -1.0);
        os.push_back(z ? 0.0 : 1.0);
      }
      Tensor sign = Tensor::from_vector({n, 1}, zs);
      Tensor offset = Tensor::from_vector({n, 1}, os);
      // z=1 -> ln(p); z=0 -> ln(1-p) = ln(offset + sign*p)
      Tensor arg = nncore::add(offset, nncore::mul(sign, p));
      return nncore::scale(nncore::sum(nncore::log(arg)), -1.0 / n);
    }
    case TaskKind::Beam: {
      int k = out.dim(1);
      Tensor q = nncore::softmax_last(out);
      std::vector<double> mask(static_cast<size_t>(n) * k, 0.0);
      for (int i = 0; i < n; i++)
        mask[static_cast<size_t>(i) * k + data.beam[static_cast<size_t>(i)]] = 1.0;
      Tensor m = Tensor::from_vector({n, k}, mask);
      Tensor one_minus_q = nncore::add_scalar(nncore::scale(q, -1.0), 1.0);
      Tensor term = nncore::mul(m, nncore::mul(nncore::pow(one_minus_q, focal_gamma),
                                               nncore::log(nncore::clamp(q, 1e-12, 1.0))));
      return nncore::scale(nncore::sum(term), -1.0 / n);
    }
  }
  throw std::invalid_argument("task_loss_graph: unknown task");
}

double task_metric_from_outputs(const Tensor& out, const TaskData& test, TaskKind task,
                                std::vector<double>* errors_m) {
  switch (task) {
    case TaskKind::Position: {
      std::vector<double> errs;
      for (int i = 0; i < test.n; i++) {
        double dx = out.data()[static_cast<int64_t>(i) * 2] - test.pos_px[static_cast<size_t>(i)][0];
        double dy =
            out.data()[static_cast<int64_t>(i) * 2 + 1] - test.pos_px[static_cast<size_t>(i)][1];
        errs.push_back(std::hypot(dx, dy) * test.scale_m_per_px[static_cast<size_t>(i)]);
      }
      if (errors_m) *errors_m = errs;
      return harness::cdf90(errs);
    }
    case TaskKind::Los: {
      int hits = 0;
      for (int i = 0; i < test.n; i++) {
        int pred = out.data()[i] > 0 ? 1 : 0;  // logit sign
        if (pred == test.los[static_cast<size_t>(i)]) hits++;
      }
      return static_cast<double>(hits) / test.n;
    }
    case TaskKind::Beam: {
      int k = out.dim(1);
      int hits = 0;
      for (int i = 0; i < test.n; i++) {
        int best = 0;
        for (int j = 1; j < k; j++)
          if (out.data()[static_cast<int64_t>(i) * k + j] >
              out.data()[static_cast<int64_t>(i) * k + best])
            best = j;
        if (best == test.beam[static_cast<size_t>(i)]) hits++;
      }
      return static_cast<double>(hits) / test.n;
    }
  }
  throw std::invalid_argument("task_metric_from_outputs: unknown task");
}

namespace {

ToftResult run_head_training(TaskHead& head, const TaskData& train, const TaskData& test,
                             TaskKind task, int epochs, uint64_t seed, double lr,
                             double focal_gamma) {
  (void)seed;  // full-batch training; the seed fixed the head init
  if (train.n <= 0) throw std::invalid_argument("head training: empty dataset");
  nncore::AdamW opt(head.params(), {});
  Tensor x = Tensor::from_vector({train.n, train.in_dim}, train.inputs);
  ToftResult res;
  for (int e = 0; e < epochs; e++) {
    head.params().zero_grad();
    Tensor loss = task_loss_graph(head.forward(x), train, task, focal_gamma);
    double lv = loss.item();
    if (!std::isfinite(lv)) throw chanalign::NumericError("head training: non-finite loss");
    nncore::backward(loss);
    opt.step(lr);
    res.epoch_losses.push_back(lv);
  }
  res.head_params = head.param_count();
  const TaskData& eval = test.n > 0 ? test : train;
  Tensor tx = Tensor::from_vector({eval.n, eval.in_dim}, eval.inputs);
  res.final_metric = task_metric_from_outputs(head.forward(tx), eval, task, &res.test_errors_m);
  return res;
}

}  // namespace

ToftResult toft_train(TaskHead& head, model::PretrainModel& frozen_encoder, const TaskData& train,
                      const TaskData& test, TaskKind task, int epochs, uint64_t seed, double lr,
                      double focal_gamma) {
  int64_t enc_params = frozen_encoder.params().total_parameters();
  if (head.param_count() * 100 > enc_params)
    throw std::invalid_argument("toft_train: head violates the 1% lightweight contract (" +
                                std::to_string(head.param_count()) + " vs encoder " +
                                std::to_string(enc_params) + ")");
  frozen_encoder.set_frozen(true);
  auto before = frozen_encoder.params().raw_bytes();

  ToftResult res = run_head_training(head, train, test, task, epochs, seed, lr, focal_gamma);

  if (!frozen_encoder.params().all_grads_zero())
    throw std::runtime_error("toft_train: gradients reached the frozen encoder");
  if (frozen_encoder.params().raw_bytes() != before)
    throw std::runtime_error("toft_train: frozen encoder parameters changed");
  res.encoder_params = enc_params;
  return res;
}

ToftResult train_head_raw(TaskHead& head, const TaskData& train, const TaskData& test,
                          TaskKind task, int epochs, uint64_t seed, double lr,
                          double focal_gamma) {
  return run_head_training(head, train, test, task, epochs, seed, lr, focal_gamma);
}

}  // namespace adapt
