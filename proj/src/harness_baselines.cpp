#include "chanalign/harness/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>

#include "chanalign/errors.hpp"
#include "chanalign/harness/pretrain.hpp"
#include "chanalign/nncore/optim.hpp"

namespace harness {

using adapt::TaskData;
using adapt::TaskKind;
using nncore::Tensor;

BaselineKind baseline_kind_from(const std::string& name) {
  if (name == "area_specific_recon") return BaselineKind::AreaSpecificRecon;
  if (name == "area_general_recon") return BaselineKind::AreaGeneralRecon;
  if (name == "task_specific") return BaselineKind::TaskSpecific;
  if (name == "task_general") return BaselineKind::TaskGeneral;
  if (name == "position_mlp") return BaselineKind::PositionMlp;
  throw std::invalid_argument("unknown baseline kind: " + name);
}

std::string baseline_kind_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::AreaSpecificRecon: return "area_specific_recon";
    case BaselineKind::AreaGeneralRecon: return "area_general_recon";
    case BaselineKind::TaskSpecific: return "task_specific";
    case BaselineKind::TaskGeneral: return "task_general";
    case BaselineKind::PositionMlp: return "position_mlp";
  }
  return "?";
}

model::ModelConfig model_config_for(const Dataset& ds, const model::ModelConfig& base) {
  model::ModelConfig cfg = base;
  cfg.map_px = ds.size_px;
  cfg.csi_nt = ds.radio.n_t;
  cfg.csi_nc = ds.radio.n_c;
  return cfg;
}

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::vector<const AreaRecord*> adapt_areas(const Dataset& ds, int max_areas) {
  auto areas = ds.split("adapt");
  if (areas.empty()) throw chanalign::DataError("baselines: adapt split is empty");
  if (max_areas > 0 && static_cast<int>(areas.size()) > max_areas)
    areas.resize(static_cast<size_t>(max_areas));
  return areas;
}

// Deterministic per-area train/test sample split, identical to the one the
// TOFT data builders use.
std::pair<std::vector<int>, std::vector<int>> area_split(const AreaRecord& area,
                                                         double train_frac, uint64_t seed) {
  std::vector<int> idx(area.samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ (0x8bb84b93962eacc9ull * static_cast<uint64_t>(area.area_id)));
  std::shuffle(idx.begin(), idx.end(), rng);
  size_t n_train = static_cast<size_t>(train_frac * static_cast<double>(idx.size()));
  n_train = std::min(std::max<size_t>(n_train, 1), idx.size() - 1);
  return {std::vector<int>(idx.begin(), idx.begin() + static_cast<int64_t>(n_train)),
          std::vector<int>(idx.begin() + static_cast<int64_t>(n_train), idx.end())};
}

TaskData labels_for(const Dataset& ds, int area_index, const std::vector<int>& ids) {
  const AreaRecord& area = ds.areas[static_cast<size_t>(area_index)];
  TaskData out;
  out.n = static_cast<int>(ids.size());
  for (int i : ids) {
    const Sample& s = area.samples[static_cast<size_t>(i)];
    out.pos_px.push_back({s.ue_xy_px[0], s.ue_xy_px[1]});
    out.los.push_back(s.los);
    out.beam.push_back(s.beam);
    out.scale_m_per_px.push_back(area.scale_m_per_px);
  }
  return out;
}

std::vector<SampleRef> make_refs(int area_index, const std::vector<int>& ids) {
  std::vector<SampleRef> refs;
  for (int i : ids) refs.emplace_back(area_index, i);
  return refs;
}

// Mini training loop over an explicit batch graph builder.
void train_loop(model::PretrainModel& m, const Dataset& ds, std::vector<SampleRef> refs,
                const BaselineOptions& opts, uint64_t seed,
                const std::function<Tensor(const std::vector<SampleRef>&)>& loss_of) {
  int batch = std::min<int>(opts.batch_size, static_cast<int>(refs.size()));
  int64_t steps_per_epoch = static_cast<int64_t>(refs.size()) / batch;
  nncore::LrSchedule sched;
  sched.max_lr = opts.max_lr;
  sched.cycle_steps = static_cast<int>(steps_per_epoch * opts.epochs);
  sched.warmup_steps = std::max(1, sched.cycle_steps / 10);
  nncore::AdamW opt(m.params(), {});
  int64_t step = 0;
  for (int e = 0; e < opts.epochs; e++) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(e));
    std::shuffle(refs.begin(), refs.end(), rng);
    for (int64_t b = 0; b < steps_per_epoch; b++) {
      std::vector<SampleRef> chunk(refs.begin() + b * batch, refs.begin() + (b + 1) * batch);
      m.params().zero_grad();
      Tensor loss = loss_of(chunk);
      if (!std::isfinite(loss.item()))
        throw chanalign::NumericError("baseline training: non-finite loss");
      nncore::backward(loss);
      opt.step(nncore::lr_at_step(sched, step++));
    }
  }
}

double recon_nmse_on(model::PretrainModel& m, const Dataset& ds,
                     const std::vector<SampleRef>& refs) {
  double acc = 0;
  int n = 0;
  constexpr int kChunk = 64;
  for (size_t base = 0; base < refs.size(); base += kChunk) {
    size_t end = std::min(refs.size(), base + kChunk);
    std::vector<SampleRef> chunk(refs.begin() + static_cast<int64_t>(base),
                                 refs.begin() + static_cast<int64_t>(end));
    Tensor csi = batch_csi(ds, chunk);
    Tensor recon = m.crnn_forward(m.cfenn_features(csi));
    int nt = ds.radio.n_t, nc = ds.radio.n_c;
    int64_t block = static_cast<int64_t>(2) * nt * nc;
    for (size_t i = 0; i < chunk.size(); i++) {
      channel::RealCsiTensor a, b;
      a.n_t = b.n_t = nt;
      a.n_c = b.n_c = nc;
      a.t.assign(recon.data().data() + static_cast<int64_t>(i) * block,
                 recon.data().data() + static_cast<int64_t>(i + 1) * block);
      b.t.assign(csi.data().data() + static_cast<int64_t>(i) * block,
                 csi.data().data() + static_cast<int64_t>(i + 1) * block);
      acc += channel::nmse_db(channel::to_complex(a), channel::to_complex(b));
      n++;
    }
  }
  return acc / n;
}

std::vector<BenchRow> recon_baseline(bool area_specific, const Dataset& ds, uint64_t seed,
                                     const BaselineOptions& opts) {
  std::vector<BenchRow> rows;
  auto areas = adapt_areas(ds, opts.max_areas);
  model::ModelConfig mc = model_config_for(ds, opts.model);

  auto train_and_eval = [&](const std::vector<SampleRef>& train_refs,
                            const std::vector<const AreaRecord*>& eval_areas,
                            const std::string& method, uint64_t run_seed) {
    Timer timer;
    model::PretrainModel m(mc, run_seed);
    // Only the channel encoder and reconstruction decoder train here.
    m.params().set_requires_grad(false);
    m.params().set_requires_grad(true, "cfenn.");
    m.params().set_requires_grad(true, "crnn.");
    train_loop(m, ds, train_refs, opts, run_seed, [&](const std::vector<SampleRef>& chunk) {
      Tensor csi = batch_csi(ds, chunk);
      return model::reconstruction_loss(m.crnn_forward(m.cfenn_features(csi)), csi);
    });
    int64_t tuned = m.params().total_parameters("cfenn.") + m.params().total_parameters("crnn.");
    for (const AreaRecord* area : eval_areas) {
      int ai = 0;
      for (size_t i = 0; i < ds.areas.size(); i++)
        if (&ds.areas[i] == area) ai = static_cast<int>(i);
      auto [train_ids, test_ids] = area_split(*area, opts.train_frac, seed);
      BenchRow row;
      row.method = method;
      row.task = "csi_feedback";
      row.area_id = area->area_id;
      row.metric_name = "nmse_db";
      row.metric = recon_nmse_on(m, ds, make_refs(ai, test_ids));
      row.tuned_params = tuned;
      row.total_params = tuned;
      row.seed = run_seed;
      row.wall_s = timer.seconds();
      rows.push_back(row);
    }
  };

  if (area_specific) {
    for (const AreaRecord* area : areas) {
      int ai = 0;
      for (size_t i = 0; i < ds.areas.size(); i++)
        if (&ds.areas[i] == area) ai = static_cast<int>(i);
      auto [train_ids, test_ids] = area_split(*area, opts.train_frac, seed);
      train_and_eval(make_refs(ai, train_ids), {area}, "area_specific_recon",
                     seed ^ static_cast<uint64_t>(area->area_id));
    }
  } else {
    std::vector<SampleRef> train_refs;
    for (size_t ai = 0; ai < ds.areas.size(); ai++)
      if (ds.areas[ai].split == "pretrain")
        for (size_t si = 0; si < ds.areas[ai].samples.size(); si++)
          train_refs.emplace_back(static_cast<int>(ai), static_cast<int>(si));
    if (train_refs.empty()) throw chanalign::DataError("baselines: pretrain split is empty");
    train_and_eval(train_refs, areas, "area_general_recon", seed);
  }
  return rows;
}

struct TaskSpec {
  TaskKind kind;
  const char* name;
  const char* metric;
  int out_dim;
};

std::vector<TaskSpec> task_table(int n_t) {
  return {{TaskKind::Position, "position", "cdf90_m", 2},
          {TaskKind::Los, "los", "accuracy", 1},
          {TaskKind::Beam, "beam", "top1", n_t}};
}

std::vector<BenchRow> supervised_vit_baseline(bool general, const Dataset& ds, uint64_t seed,
                                              const BaselineOptions& opts) {
  std::vector<BenchRow> rows;
  auto areas = adapt_areas(ds, opts.max_areas);
  model::ModelConfig mc = model_config_for(ds, opts.model);
  auto tasks = task_table(ds.radio.n_t);

  for (const AreaRecord* area : areas) {
    int ai = 0;
    for (size_t i = 0; i < ds.areas.size(); i++)
      if (&ds.areas[i] == area) ai = static_cast<int>(i);
    auto [train_ids, test_ids] = area_split(*area, opts.train_frac, seed);
    TaskData train_labels = labels_for(ds, ai, train_ids);
    TaskData test_labels = labels_for(ds, ai, test_ids);

    auto run_one = [&](const std::vector<TaskSpec>& active, const std::string& method) {
      Timer timer;
      uint64_t run_seed = seed ^ (static_cast<uint64_t>(area->area_id) << 8);
      model::PretrainModel m(mc, run_seed);
      m.params().set_requires_grad(false);
      m.params().set_requires_grad(true, "cfenn.");
      std::vector<nncore::Linear> heads;
      for (const TaskSpec& t : active)
        heads.emplace_back(m.params(), std::string("taskhead.") + t.name, mc.embed_dim,
                           t.out_dim);

      auto ids_of = [&](const std::vector<SampleRef>& chunk) {
        std::vector<int> ids;
        for (const auto& r : chunk) ids.push_back(r.second);
        return ids;
      };
      train_loop(m, ds, make_refs(ai, train_ids), opts, run_seed,
                 [&](const std::vector<SampleRef>& chunk) {
                   TaskData lbl = labels_for(ds, ai, ids_of(chunk));
                   Tensor feat = m.cfenn_features(batch_csi(ds, chunk));
                   Tensor loss;
                   for (size_t t = 0; t < active.size(); t++) {
                     Tensor l = adapt::task_loss_graph(heads[t].forward(feat), lbl,
                                                       active[t].kind);
                     loss = loss.defined() ? nncore::add(loss, l) : l;
                   }
                   return loss;
                 });

      Tensor test_feat = m.cfenn_features(batch_csi(ds, make_refs(ai, test_ids)));
      int64_t tuned = m.params().total_parameters("cfenn.") +
                      m.params().total_parameters("taskhead.");
      for (size_t t = 0; t < active.size(); t++) {
        BenchRow row;
        row.method = method;
        row.task = active[t].name;
        row.area_id = area->area_id;
        row.metric_name = active[t].metric;
        row.metric = adapt::task_metric_from_outputs(heads[t].forward(test_feat), test_labels,
                                                     active[t].kind);
        row.tuned_params = tuned;
        row.total_params = tuned;
        row.seed = run_seed;
        row.wall_s = timer.seconds();
        rows.push_back(row);
      }
    };

    if (general) {
      run_one(tasks, "task_general");
    } else {
      for (const TaskSpec& t : tasks) run_one({t}, "task_specific");
    }
  }
  return rows;
}

std::vector<BenchRow> position_mlp_baseline(const Dataset& ds, uint64_t seed,
                                            const BaselineOptions& opts) {
  std::vector<BenchRow> rows;
  auto areas = adapt_areas(ds, opts.max_areas);
  for (const AreaRecord* area : areas) {
    Timer timer;
    ToftSplit split = build_raw_position_data(ds, *area, opts.train_frac, seed);
    adapt::TaskHeadConfig hc;
    hc.in_dim = 2;
    hc.out_dim = ds.radio.n_t;
    adapt::TaskHead head(hc, seed ^ static_cast<uint64_t>(area->area_id));
    adapt::ToftResult res = adapt::train_head_raw(head, split.train, split.test, TaskKind::Beam,
                                                  opts.head_epochs, seed);
    BenchRow row;
    row.method = "position_mlp";
    row.task = "beam";
    row.area_id = area->area_id;
    row.metric_name = "top1";
    row.metric = res.final_metric;
    row.tuned_params = res.head_params;
    row.total_params = res.head_params;
    row.seed = seed;
    row.wall_s = timer.seconds();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::vector<BenchRow> run_baseline(BaselineKind kind, const Dataset& ds, uint64_t seed,
                                   const BaselineOptions& opts) {
  switch (kind) {
    case BaselineKind::AreaSpecificRecon: return recon_baseline(true, ds, seed, opts);
    case BaselineKind::AreaGeneralRecon: return recon_baseline(false, ds, seed, opts);
    case BaselineKind::TaskSpecific: return supervised_vit_baseline(false, ds, seed, opts);
    case BaselineKind::TaskGeneral: return supervised_vit_baseline(true, ds, seed, opts);
    case BaselineKind::PositionMlp: return position_mlp_baseline(ds, seed, opts);
  }
  throw std::invalid_argument("run_baseline: unknown kind");
}

std::vector<BenchRow> run_raw_csi_position_mlp(const Dataset& ds, uint64_t seed,
                                               const BaselineOptions& opts,
                                               int64_t param_budget) {
  std::vector<BenchRow> rows;
  auto areas = adapt_areas(ds, opts.max_areas);
  int in_dim = 2 * ds.radio.n_t * ds.radio.n_c;
  for (const AreaRecord* area : areas) {
    Timer timer;
    ToftSplit split = build_raw_csi_data(ds, *area, opts.train_frac, seed);
    adapt::TaskHeadConfig hc;
    hc.in_dim = in_dim;
    hc.out_dim = 2;
    hc.hidden = matched_hidden_width(in_dim, 2, hc.hidden_layers, param_budget);
    adapt::TaskHead head(hc, seed ^ static_cast<uint64_t>(area->area_id));
    adapt::ToftResult res = adapt::train_head_raw(head, split.train, split.test,
                                                  TaskKind::Position, opts.head_epochs, seed);
    BenchRow row;
    row.method = "raw_csi_mlp";
    row.task = "position";
    row.area_id = area->area_id;
    row.metric_name = "cdf90_m";
    row.metric = res.final_metric;
    row.tuned_params = res.head_params;
    row.total_params = res.head_params;
    row.seed = seed;
    row.wall_s = timer.seconds();
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw chanalign::DataError("cannot write bench csv: " + path);
  os << "method,task,area_id,metric_name,metric,tuned_params,total_params,seed,wall_s\n";
  for (const auto& r : rows)
    os << r.method << "," << r.task << "," << r.area_id << "," << r.metric_name << ","
       << r.metric << "," << r.tuned_params << "," << r.total_params << "," << r.seed << ","
       << r.wall_s << "\n";
}

}  // namespace harness
