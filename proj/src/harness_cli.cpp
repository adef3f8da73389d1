#include "chanalign/harness/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>

#include "chanalign/errors.hpp"
#include "chanalign/harness/baselines.hpp"
#include "chanalign/harness/dataset.hpp"
#include "chanalign/harness/evals.hpp"
#include "chanalign/harness/metrics.hpp"
#include "chanalign/harness/pretrain.hpp"
#include "chanalign/nncore/checkpoint.hpp"

namespace harness {

namespace {

std::unique_ptr<model::PretrainModel> load_model(const std::string& ckpt) {
  model::ModelConfig cfg = model::ModelConfig::from_json(nncore::checkpoint_meta(ckpt));
  auto m = std::make_unique<model::PretrainModel>(cfg, 0);
  nncore::load_checkpoint(m->params(), ckpt);
  return m;
}

void print_zsl(const std::string& name, const ZslSuiteResult& r) {
  std::cout << name << ": accuracy " << r.accuracy * 100.0 << "% over " << r.n
            << " samples (baseline " << r.baseline * 100.0 << "%)\n";
}

int run_gen(const std::string& config, const std::string& out, int64_t seed_override) {
  DatasetConfig cfg = DatasetConfig::parse_file(config);
  if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
  Dataset ds = generate_dataset(cfg);
  write_dataset(ds, out);
  std::cout << "wrote " << ds.areas.size() << " areas ("
            << ds.total_samples("pretrain") << " pretrain / " << ds.total_samples("adapt")
            << " adapt samples) to " << out << "\n";
  return 0;
}

struct PretrainCliOpts {
  std::string data, out;
  uint64_t seed = 1;
  int epochs = 100;
  int batch = 64;
  int embed_dim = 64, depth = 4, heads = 4;
  int map_patch = 8, csi_patch_ant = 4, csi_patch_sc = 8;
  bool msnn = false, no_temperature = false;
  double max_lr = 5e-4, weight_decay = 0.01;
  int warmup = 200, cycle = 0;
  int ckpt_every = 0;
};

int run_pretrain_cmd(const PretrainCliOpts& o) {
  Dataset ds = read_dataset(o.data);
  model::ModelConfig mc;
  mc.embed_dim = o.embed_dim;
  mc.rab_depth = o.depth;
  mc.heads = o.heads;
  mc.map_patch_px = o.map_patch;
  mc.csi_patch_ant = o.csi_patch_ant;
  mc.csi_patch_sc = o.csi_patch_sc;
  mc.msnn_enabled = o.msnn;
  mc.temperature_enabled = !o.no_temperature;
  mc = model_config_for(ds, mc);
  mc.validate();

  PretrainConfig cfg;
  cfg.model = mc;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.opt.weight_decay = o.weight_decay;
  cfg.sched.max_lr = o.max_lr;
  cfg.sched.warmup_steps = o.warmup;
  cfg.sched.cycle_steps = o.cycle;
  cfg.seed = o.seed;
  cfg.checkpoint_every = o.ckpt_every;
  cfg.out_dir = o.out;

  model::PretrainModel m(mc, o.seed);
  std::cout << "model parameters: " << m.params().total_parameters() << "\n";
  PretrainResult res = run_pretraining(cfg, ds, m);
  const auto& last = res.history.back();
  std::cout << "finished " << res.history.size() << " steps; final l_c " << last.loss.l_c
            << ", l_r " << last.loss.l_r << ", total " << last.loss.total << "\n"
            << "checkpoint: " << res.checkpoint_path << "\n";
  return 0;
}

int run_eval_zsl(const std::string& data, const std::string& ckpt, const std::string& task,
                 int batch, int candidates, uint64_t seed, int max_samples) {
  Dataset ds = read_dataset(data);
  auto m = load_model(ckpt);
  if (task == "matching" || task == "all")
    print_zsl("matching", eval_matching(*m, ds, batch, seed));
  if (task == "los" || task == "all") print_zsl("los", eval_zsl_los(*m, ds, max_samples));
  if (task == "scale" || task == "all") print_zsl("scale", eval_zsl_scale(*m, ds, max_samples));
  if (task == "multiuser" || task == "all")
    print_zsl("multiuser", eval_zsl_multiuser(*m, ds, candidates, seed, max_samples));
  if (task == "feedback" || task == "all")
    std::cout << "feedback: mean NMSE " << eval_feedback_nmse(*m, ds, max_samples) << " dB\n";
  return 0;
}

int run_toft(const std::string& data, const std::string& ckpt, const std::string& task,
             const std::string& modality, int epochs, int head_width, double train_frac,
             uint64_t seed, const std::string& out) {
  Dataset ds = read_dataset(data);
  auto m = load_model(ckpt);
  adapt::TaskKind kind = task == "position" ? adapt::TaskKind::Position
                         : task == "los"    ? adapt::TaskKind::Los
                                            : adapt::TaskKind::Beam;
  ToftModality mod = modality == "position" ? ToftModality::Position : ToftModality::Csi;
  int out_dim = kind == adapt::TaskKind::Position ? 2
                : kind == adapt::TaskKind::Los    ? 1
                                                  : ds.radio.n_t;

  std::vector<double> metrics;
  for (const AreaRecord* area : ds.split("adapt")) {
    ToftSplit split = build_toft_data(*m, ds, *area, mod, train_frac, seed);
    adapt::TaskHeadConfig hc;
    hc.in_dim = m->cfg().embed_dim;
    hc.hidden = head_width;
    hc.out_dim = out_dim;
    adapt::TaskHead head(hc, seed ^ static_cast<uint64_t>(area->area_id));
    adapt::ToftResult res =
        adapt::toft_train(head, *m, split.train, split.test, kind, epochs, seed);
    std::cout << "area " << area->area_id << ": " << task << " metric " << res.final_metric
              << " (head " << res.head_params << " params, "
              << 100.0 * res.head_params / res.encoder_params << "% of encoder)\n";
    metrics.push_back(res.final_metric);
    if (!out.empty()) {
      std::filesystem::create_directories(out);
      nncore::save_checkpoint(head.params(),
                              (std::filesystem::path(out) /
                               ("head_" + task + "_" + modality + "_area" +
                                std::to_string(area->area_id) + ".nnck"))
                                  .string());
    }
  }
  double mean = 0;
  for (double v : metrics) mean += v;
  std::cout << "mean metric over " << metrics.size() << " areas: " << mean / metrics.size()
            << "\n";
  return 0;
}

int run_bench(const std::string& data, const std::string& ckpt, const std::string& kind,
              int epochs, int head_epochs, int max_areas, uint64_t seed,
              const std::string& out_csv) {
  Dataset ds = read_dataset(data);
  BaselineOptions opts;
  opts.epochs = epochs;
  opts.head_epochs = head_epochs;
  opts.max_areas = max_areas;
  opts.model = model_config_for(ds, opts.model);

  std::vector<BenchRow> rows;
  auto add = [&](std::vector<BenchRow> r) {
    rows.insert(rows.end(), r.begin(), r.end());
  };
  if (kind == "all") {
    for (auto k : {BaselineKind::AreaSpecificRecon, BaselineKind::AreaGeneralRecon,
                   BaselineKind::TaskSpecific, BaselineKind::TaskGeneral,
                   BaselineKind::PositionMlp})
      add(run_baseline(k, ds, seed, opts));
  } else {
    add(run_baseline(baseline_kind_from(kind), ds, seed, opts));
  }

  // Frozen-model rows for comparison when a checkpoint is supplied.
  if (!ckpt.empty()) {
    auto m = load_model(ckpt);
    double nmse = eval_feedback_nmse(*m, ds);
    BenchRow zsl_row;
    zsl_row.method = "zsl_frozen";
    zsl_row.task = "csi_feedback";
    zsl_row.metric_name = "nmse_db";
    zsl_row.metric = nmse;
    zsl_row.tuned_params = 0;
    zsl_row.total_params = m->params().total_parameters();
    zsl_row.seed = seed;
    rows.push_back(zsl_row);

    auto tasks = std::vector<std::pair<adapt::TaskKind, std::string>>{
        {adapt::TaskKind::Position, "position"},
        {adapt::TaskKind::Los, "los"},
        {adapt::TaskKind::Beam, "beam"}};
    auto areas = ds.split("adapt");
    if (max_areas > 0 && static_cast<int>(areas.size()) > max_areas)
      areas.resize(static_cast<size_t>(max_areas));
    for (const AreaRecord* area : areas) {
      for (auto& [k, name] : tasks) {
        ToftSplit split = build_toft_data(*m, ds, *area, ToftModality::Csi, opts.train_frac, seed);
        adapt::TaskHeadConfig hc;
        hc.in_dim = m->cfg().embed_dim;
        hc.out_dim = k == adapt::TaskKind::Position ? 2
                     : k == adapt::TaskKind::Los    ? 1
                                                    : ds.radio.n_t;
        adapt::TaskHead head(hc, seed ^ static_cast<uint64_t>(area->area_id));
        adapt::ToftResult res =
            adapt::toft_train(head, *m, split.train, split.test, k, head_epochs, seed);
        BenchRow row;
        row.method = "toft_csi";
        row.task = name;
        row.area_id = area->area_id;
        row.metric_name = k == adapt::TaskKind::Position ? "cdf90_m"
                          : k == adapt::TaskKind::Los    ? "accuracy"
                                                         : "top1";
        row.metric = res.final_metric;
        row.tuned_params = res.head_params;
        row.total_params = res.encoder_params + res.head_params;
        row.seed = seed;
        rows.push_back(row);
      }
    }
  }

  std::cout << "method,task,area,metric_name,metric,tuned_params\n";
  for (const auto& r : rows)
    std::cout << r.method << "," << r.task << "," << r.area_id << "," << r.metric_name << ","
              << r.metric << "," << r.tuned_params << "\n";
  if (!out_csv.empty()) {
    write_bench_csv(rows, out_csv);
    std::cout << "wrote " << out_csv << "\n";
  }
  return 0;
}

int run_diag(const std::string& data, const std::string& ckpt, const std::string& out, int pca_k,
             int max_samples, uint64_t seed) {
  Dataset ds = read_dataset(data);
  auto m = load_model(ckpt);
  std::filesystem::create_directories(out);

  std::vector<SampleRef> refs;
  for (size_t ai = 0; ai < ds.areas.size(); ai++)
    if (ds.areas[ai].split == "adapt")
      for (size_t si = 0; si < ds.areas[ai].samples.size(); si++)
        refs.emplace_back(static_cast<int>(ai), static_cast<int>(si));
  if (refs.empty()) throw chanalign::DataError("diag: adapt split is empty");
  std::mt19937_64 rng(seed);
  std::shuffle(refs.begin(), refs.end(), rng);
  if (max_samples > 0 && static_cast<int>(refs.size()) > max_samples)
    refs.resize(static_cast<size_t>(max_samples));

  int d = m->cfg().embed_dim;
  int n = static_cast<int>(refs.size());
  Eigen::MatrixXd both(2 * n, d);
  std::ofstream emb(std::filesystem::path(out) / "embeddings.csv");
  emb << "modality,area_id,sample";
  for (int j = 0; j < d; j++) emb << ",v" << j;
  emb << "\n";
  constexpr int kChunk = 64;
  for (int base = 0; base < n; base += kChunk) {
    int end = std::min(n, base + kChunk);
    std::vector<SampleRef> chunk(refs.begin() + base, refs.begin() + end);
    nncore::Tensor i_pe = m->epnn_forward(batch_edges(ds, chunk), batch_env(ds, chunk));
    nncore::Tensor i_wc = m->cfenn_forward(batch_csi(ds, chunk));
    for (int i = 0; i < end - base; i++) {
      int area_id = ds.areas[static_cast<size_t>(chunk[static_cast<size_t>(i)].first)].area_id;
      emb << "env," << area_id << "," << base + i;
      for (int j = 0; j < d; j++) {
        both(base + i, j) = i_pe.data()[static_cast<int64_t>(i) * d + j];
        emb << "," << both(base + i, j);
      }
      emb << "\n";
      emb << "csi," << area_id << "," << base + i;
      for (int j = 0; j < d; j++) {
        both(n + base + i, j) = i_wc.data()[static_cast<int64_t>(i) * d + j];
        emb << "," << both(n + base + i, j);
      }
      emb << "\n";
    }
  }

  PcaResult pca = pca_project(both, pca_k);
  std::ofstream pcsv(std::filesystem::path(out) / "pca.csv");
  pcsv << "modality,sample";
  for (int j = 0; j < pca_k; j++) pcsv << ",p" << j;
  pcsv << "\n";
  for (int i = 0; i < 2 * n; i++) {
    pcsv << (i < n ? "env" : "csi") << "," << (i < n ? i : i - n);
    for (int j = 0; j < pca_k; j++) pcsv << "," << pca.projection(i, j);
    pcsv << "\n";
  }
  std::ofstream vcsv(std::filesystem::path(out) / "pca_variance.csv");
  vcsv << "component,explained_ratio\n";
  for (int j = 0; j < pca_k; j++) vcsv << j << "," << pca.explained_ratio[static_cast<size_t>(j)] << "\n";
  std::cout << "wrote embeddings + PCA for " << n << " sample pairs to " << out << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  if (const char* threads = std::getenv("CHANALIGN_THREADS"))
    Eigen::setNbThreads(std::max(1, std::atoi(threads)));

  CLI::App app{"environment-channel contrastive pretraining and downstream benchmarks"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_config, gen_out;
  int64_t gen_seed = -1;
  gen->add_option("--config", gen_config, "key/value generation config")->required();
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--seed", gen_seed, "override the config seed");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "run contrastive + reconstruction pretraining");
  PretrainCliOpts po;
  pre->add_option("--data", po.data)->required();
  pre->add_option("--out", po.out)->required();
  pre->add_option("--seed", po.seed);
  pre->add_option("--epochs", po.epochs);
  pre->add_option("--batch", po.batch);
  pre->add_option("--embed-dim", po.embed_dim);
  pre->add_option("--depth", po.depth);
  pre->add_option("--heads", po.heads);
  pre->add_option("--map-patch", po.map_patch);
  pre->add_option("--csi-patch-ant", po.csi_patch_ant);
  pre->add_option("--csi-patch-sc", po.csi_patch_sc);
  pre->add_flag("--msnn", po.msnn, "share one RAB stack between the towers");
  pre->add_flag("--no-temperature", po.no_temperature, "fix the logit scale at 1");
  pre->add_option("--max-lr", po.max_lr);
  pre->add_option("--weight-decay", po.weight_decay);
  pre->add_option("--warmup", po.warmup);
  pre->add_option("--cycle", po.cycle, "scheduler cycle steps (0: one cycle over the run)");
  pre->add_option("--ckpt-every", po.ckpt_every, "checkpoint every N epochs");

  // eval-zsl
  auto* ez = app.add_subcommand("eval-zsl", "zero-shot evaluation suites");
  std::string ez_data, ez_ckpt, ez_task = "all";
  int ez_batch = 16, ez_cands = 5, ez_max = -1;
  uint64_t ez_seed = 0;
  ez->add_option("--data", ez_data)->required();
  ez->add_option("--ckpt", ez_ckpt)->required();
  ez->add_option("--task", ez_task)
      ->check(CLI::IsMember({"matching", "los", "scale", "multiuser", "feedback", "all"}));
  ez->add_option("--batch", ez_batch);
  ez->add_option("--candidates", ez_cands);
  ez->add_option("--seed", ez_seed);
  ez->add_option("--max-samples", ez_max);

  // toft
  auto* tf = app.add_subcommand("toft", "train a lightweight head on the frozen model");
  std::string tf_data, tf_ckpt, tf_task, tf_modality = "csi", tf_out;
  int tf_epochs = 300, tf_width = 48;
  double tf_frac = 0.8;
  uint64_t tf_seed = 1;
  tf->add_option("--data", tf_data)->required();
  tf->add_option("--ckpt", tf_ckpt)->required();
  tf->add_option("--task", tf_task)->required()->check(
      CLI::IsMember({"position", "los", "beam"}));
  tf->add_option("--modality", tf_modality)->check(CLI::IsMember({"csi", "position"}));
  tf->add_option("--epochs", tf_epochs);
  tf->add_option("--head-width", tf_width);
  tf->add_option("--train-frac", tf_frac);
  tf->add_option("--seed", tf_seed);
  tf->add_option("--out", tf_out, "save trained head checkpoints here");

  // bench
  auto* bn = app.add_subcommand("bench", "train and report baseline models");
  std::string bn_data, bn_ckpt, bn_kind = "all", bn_csv;
  int bn_epochs = 20, bn_head_epochs = 300, bn_max_areas = 2;
  uint64_t bn_seed = 1;
  bn->add_option("--data", bn_data)->required();
  bn->add_option("--ckpt", bn_ckpt, "frozen checkpoint for TOFT/ZSL comparison rows");
  bn->add_option("--kind", bn_kind)
      ->check(CLI::IsMember({"all", "area_specific_recon", "area_general_recon", "task_specific",
                             "task_general", "position_mlp"}));
  bn->add_option("--epochs", bn_epochs);
  bn->add_option("--head-epochs", bn_head_epochs);
  bn->add_option("--max-areas", bn_max_areas);
  bn->add_option("--seed", bn_seed);
  bn->add_option("--out", bn_csv, "write rows as CSV");

  // diag
  auto* dg = app.add_subcommand("diag", "export embeddings and PCA projections");
  std::string dg_data, dg_ckpt, dg_out;
  int dg_k = 2, dg_max = 512;
  uint64_t dg_seed = 0;
  dg->add_option("--data", dg_data)->required();
  dg->add_option("--ckpt", dg_ckpt)->required();
  dg->add_option("--out", dg_out)->required();
  dg->add_option("--pca-k", dg_k);
  dg->add_option("--max-samples", dg_max);
  dg->add_option("--seed", dg_seed);

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen(gen_config, gen_out, gen_seed);
    if (pre->parsed()) return run_pretrain_cmd(po);
    if (ez->parsed())
      return run_eval_zsl(ez_data, ez_ckpt, ez_task, ez_batch, ez_cands, ez_seed, ez_max);
    if (tf->parsed())
      return run_toft(tf_data, tf_ckpt, tf_task, tf_modality, tf_epochs, tf_width, tf_frac,
                      tf_seed, tf_out);
    if (bn->parsed())
      return run_bench(bn_data, bn_ckpt, bn_kind, bn_epochs, bn_head_epochs, bn_max_areas,
                       bn_seed, bn_csv);
    if (dg->parsed()) return run_diag(dg_data, dg_ckpt, dg_out, dg_k, dg_max, dg_seed);
    return 1;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const chanalign::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const chanalign::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace harness
