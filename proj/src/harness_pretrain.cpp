#include "chanalign/harness/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "chanalign/errors.hpp"
#include "chanalign/nncore/checkpoint.hpp"

namespace harness {

model::LossReport pretrain_step(model::PretrainModel& m, nncore::AdamW& opt, double lr,
                                const nncore::Tensor& edges, const nncore::Tensor& env,
                                const nncore::Tensor& csi) {
  m.params().zero_grad();

  nncore::Tensor i_pe = m.epnn_forward(edges, env);
  nncore::Tensor feats = m.cfenn_features(csi);
  nncore::Tensor i_wc = nncore::l2_normalize_rows(feats);

  model::SimilarityPair sim = model::similarity_matrices(i_pe, i_wc, m.logit_scale());
  model::ContrastiveLoss cl = model::contrastive_loss(sim);

  nncore::Tensor recon = m.crnn_forward(feats);
  nncore::Tensor l_r = model::reconstruction_loss(recon, csi);
  nncore::Tensor total = model::pretrain_loss(cl.l_c, l_r);

  model::LossReport report;
  report.l_pe_wc = cl.l_pe_wc.item();
  report.l_wc_pe = cl.l_wc_pe.item();
  report.l_c = cl.l_c.item();
  report.l_r = l_r.item();
  report.total = total.item();
  if (!std::isfinite(report.total))
    throw chanalign::NumericError("pretraining: non-finite loss at optimizer step " +
                                  std::to_string(opt.step_count() + 1));

  nncore::backward(total);
  opt.step(lr);
  m.project_logit_scale();
  return report;
}

PretrainResult run_pretraining(const PretrainConfig& cfg, const Dataset& data,
                               model::PretrainModel& m) {
  std::vector<SampleRef> refs;
  for (size_t ai = 0; ai < data.areas.size(); ai++)
    if (data.areas[ai].split == "pretrain")
      for (size_t si = 0; si < data.areas[ai].samples.size(); si++)
        refs.emplace_back(static_cast<int>(ai), static_cast<int>(si));
  if (refs.empty()) throw chanalign::DataError("run_pretraining: pretrain split is empty");

  int64_t steps_per_epoch = static_cast<int64_t>(refs.size()) / cfg.batch_size;
  if (steps_per_epoch == 0)
    throw chanalign::DataError("run_pretraining: fewer samples than one batch");

  nncore::LrSchedule sched = cfg.sched;
  if (sched.cycle_steps <= 0) {
    sched.cycle_steps = static_cast<int>(steps_per_epoch * cfg.epochs);
    sched.warmup_steps = std::min(sched.warmup_steps, sched.cycle_steps / 10);
  }

  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  nncore::AdamW opt(m.params(), cfg.opt);
  PretrainResult res;
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; epoch++) {
    std::vector<SampleRef> order = refs;
    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (int64_t b = 0; b < steps_per_epoch; b++) {
      std::vector<SampleRef> batch(order.begin() + b * cfg.batch_size,
                                   order.begin() + (b + 1) * cfg.batch_size);
      double lr = nncore::lr_at_step(sched, step);
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = lr;
      rec.loss = pretrain_step(m, opt, lr, batch_edges(data, batch), batch_env(data, batch),
                               batch_csi(data, batch));
      res.history.push_back(rec);
      step++;
    }
    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs) {
      nncore::save_checkpoint(m.params(),
                              (std::filesystem::path(cfg.out_dir) /
                               ("ckpt_epoch_" + std::to_string(epoch + 1) + ".nnck"))
                                  .string(),
                              m.cfg().to_json());
    }
  }

  if (!cfg.out_dir.empty()) {
    res.checkpoint_path = (std::filesystem::path(cfg.out_dir) / "model.nnck").string();
    nncore::save_checkpoint(m.params(), res.checkpoint_path, m.cfg().to_json());
    write_history_csv(res.history,
                      (std::filesystem::path(cfg.out_dir) / "history.csv").string());
  }
  return res;
}

void write_history_csv(const std::vector<StepRecord>& history, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw chanalign::DataError("cannot write history csv: " + path);
  os << "step,epoch,lr,l_pe_wc,l_wc_pe,l_c,l_r,total\n";
  for (const auto& r : history)
    os << r.step << "," << r.epoch << "," << r.lr << "," << r.loss.l_pe_wc << ","
       << r.loss.l_wc_pe << "," << r.loss.l_c << "," << r.loss.l_r << "," << r.loss.total << "\n";
}

}  // namespace harness
