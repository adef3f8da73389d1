#include "chanalign/harness/evals.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "chanalign/errors.hpp"

namespace harness {

namespace {

std::vector<SampleRef> adapt_refs(const Dataset& ds, int max_samples, uint64_t seed) {
  std::vector<SampleRef> refs;
  for (size_t ai = 0; ai < ds.areas.size(); ai++)
    if (ds.areas[ai].split == "adapt")
      for (size_t si = 0; si < ds.areas[ai].samples.size(); si++)
        refs.emplace_back(static_cast<int>(ai), static_cast<int>(si));
  if (refs.empty()) throw chanalign::DataError("evaluation: adapt split is empty");
  if (max_samples > 0 && static_cast<int>(refs.size()) > max_samples) {
    std::mt19937_64 rng(seed);
    std::shuffle(refs.begin(), refs.end(), rng);
    refs.resize(static_cast<size_t>(max_samples));
  }
  return refs;
}

const Sample& sample_at(const Dataset& ds, SampleRef r) {
  return ds.areas[static_cast<size_t>(r.first)].samples[static_cast<size_t>(r.second)];
}

// Embeds environment candidates in chunks and compares against the query
// CSI embeddings; rows of `variants` hold per-sample candidate env records
// (all candidates share the sample's edge map).
std::vector<int> classify_env_candidates(model::PretrainModel& m, const Dataset& ds,
                                         const std::vector<SampleRef>& refs,
                                         const std::vector<std::vector<scenegen::EnvRecord>>& variants) {
  int k = static_cast<int>(variants[0].size());
  std::vector<int> picks(refs.size());
  double scale = m.logit_scale().item();
  constexpr int kChunk = 64;
  for (size_t base = 0; base < refs.size(); base += kChunk) {
    size_t end = std::min(refs.size(), base + kChunk);
    std::vector<SampleRef> chunk(refs.begin() + static_cast<int64_t>(base),
                                 refs.begin() + static_cast<int64_t>(end));
    nncore::Tensor csi = batch_csi(ds, chunk);
    nncore::Tensor i_wc = m.cfenn_forward(csi);

    // candidate env batch: sample-major, then candidate
    std::vector<double> env_data;
    std::vector<double> edge_data;
    int px = ds.size_px;
    env_data.reserve(chunk.size() * static_cast<size_t>(k) * 8);
    edge_data.reserve(chunk.size() * static_cast<size_t>(k) * px * px);
    for (size_t i = 0; i < chunk.size(); i++) {
      const Sample& s = sample_at(ds, chunk[i]);
      auto bits = unpack_bits(s.edge_bits, static_cast<size_t>(px) * px);
      for (int c = 0; c < k; c++) {
        auto arr = variants[base + i][static_cast<size_t>(c)].as_array();
        env_data.insert(env_data.end(), arr.begin(), arr.end());
        for (uint8_t b : bits) edge_data.push_back(b ? 1.0 : 0.0);
      }
    }
    int rows = static_cast<int>(chunk.size()) * k;
    nncore::Tensor cand_env = nncore::Tensor::from_vector({rows, 8}, env_data);
    nncore::Tensor cand_edges = nncore::Tensor::from_vector({rows, 1, px, px}, edge_data);
    nncore::Tensor i_pe = m.epnn_forward(cand_edges, cand_env);

    int d = i_pe.dim(1);
    for (size_t i = 0; i < chunk.size(); i++) {
      std::vector<std::vector<double>> cands(static_cast<size_t>(k));
      for (int c = 0; c < k; c++) {
        const double* row = i_pe.data().data() + (static_cast<int64_t>(i) * k + c) * d;
        cands[static_cast<size_t>(c)].assign(row, row + d);
      }
      std::vector<double> q(i_wc.data().data() + static_cast<int64_t>(i) * d,
                            i_wc.data().data() + static_cast<int64_t>(i + 1) * d);
      picks[base + i] = adapt::zsl_from_embeddings(cands, q, scale).index;
    }
  }
  return picks;
}

}  // namespace

ZslSuiteResult eval_matching(model::PretrainModel& m, const Dataset& ds, int batch,
                             uint64_t seed) {
  ZslSuiteResult res;
  res.baseline = 1.0 / batch;
  double acc_sum = 0;
  int batches = 0;
  for (size_t ai = 0; ai < ds.areas.size(); ai++) {
    if (ds.areas[ai].split != "adapt") continue;
    std::vector<SampleRef> refs;
    for (size_t si = 0; si < ds.areas[ai].samples.size(); si++)
      refs.emplace_back(static_cast<int>(ai), static_cast<int>(si));
    std::mt19937_64 rng(seed ^ (0x517cc1b727220a95ull * (ai + 1)));
    std::shuffle(refs.begin(), refs.end(), rng);
    for (size_t b = 0; b + static_cast<size_t>(batch) <= refs.size();
         b += static_cast<size_t>(batch)) {
      std::vector<SampleRef> chunk(refs.begin() + static_cast<int64_t>(b),
                                   refs.begin() + static_cast<int64_t>(b + batch));
      nncore::Tensor i_pe = m.epnn_forward(batch_edges(ds, chunk), batch_env(ds, chunk));
      nncore::Tensor i_wc = m.cfenn_forward(batch_csi(ds, chunk));
      acc_sum += adapt::matching_accuracy(i_pe, i_wc);
      batches++;
      res.n += batch;
    }
  }
  if (batches == 0) throw chanalign::DataError("eval_matching: not enough adapt samples");
  res.accuracy = acc_sum / batches;
  return res;
}

ZslSuiteResult eval_zsl_los(model::PretrainModel& m, const Dataset& ds, int max_samples) {
  std::vector<SampleRef> refs = adapt_refs(ds, max_samples, 7);
  std::vector<std::vector<scenegen::EnvRecord>> variants(refs.size());
  int n_nlos = 0;
  for (size_t i = 0; i < refs.size(); i++) {
    scenegen::EnvRecord rec = sample_at(ds, refs[i]).env_record();
    scenegen::EnvRecord los = rec, nlos = rec;
    los.los_flag = 0;
    nlos.los_flag = 1;
    variants[i] = {los, nlos};
    n_nlos += sample_at(ds, refs[i]).los;
  }
  std::vector<int> picks = classify_env_candidates(m, ds, refs, variants);
  ZslSuiteResult res;
  res.n = static_cast<int>(refs.size());
  int hits = 0;
  for (size_t i = 0; i < refs.size(); i++)
    if (picks[i] == sample_at(ds, refs[i]).los) hits++;
  res.accuracy = static_cast<double>(hits) / res.n;
  double nlos_rate = static_cast<double>(n_nlos) / res.n;
  res.baseline = std::max(nlos_rate, 1.0 - nlos_rate);
  return res;
}

ZslSuiteResult eval_zsl_scale(model::PretrainModel& m, const Dataset& ds, int max_samples) {
  std::vector<SampleRef> refs = adapt_refs(ds, max_samples, 11);
  std::vector<std::vector<scenegen::EnvRecord>> variants(refs.size());
  for (size_t i = 0; i < refs.size(); i++) {
    scenegen::EnvRecord rec = sample_at(ds, refs[i]).env_record();
    scenegen::EnvRecord lo = rec, hi = rec;
    lo.scale_m_per_px = 0.8 * rec.scale_m_per_px;
    hi.scale_m_per_px = 1.2 * rec.scale_m_per_px;
    variants[i] = {lo, rec, hi};
  }
  std::vector<int> picks = classify_env_candidates(m, ds, refs, variants);
  ZslSuiteResult res;
  res.n = static_cast<int>(refs.size());
  res.baseline = 1.0 / 3.0;
  int hits = 0;
  for (int p : picks)
    if (p == 1) hits++;
  res.accuracy = static_cast<double>(hits) / res.n;
  return res;
}

ZslSuiteResult eval_zsl_multiuser(model::PretrainModel& m, const Dataset& ds, int k,
                                  uint64_t seed, int max_samples) {
  if (k < 2) throw std::invalid_argument("eval_zsl_multiuser: need k >= 2");
  std::vector<SampleRef> refs = adapt_refs(ds, max_samples, 13);
  std::mt19937_64 rng(seed ^ 0xa0761d6478bd642full);
  std::vector<std::vector<scenegen::EnvRecord>> variants(refs.size());
  std::vector<int> truth(refs.size());
  for (size_t i = 0; i < refs.size(); i++) {
    const AreaRecord& area = ds.areas[static_cast<size_t>(refs[i].first)];
    scenegen::EnvRecord rec = sample_at(ds, refs[i]).env_record();
    std::uniform_int_distribution<int> pick_sample(0, static_cast<int>(area.samples.size()) - 1);
    std::uniform_int_distribution<int> pick_slot(0, k - 1);
    int slot = pick_slot(rng);
    truth[i] = slot;
    variants[i].assign(static_cast<size_t>(k), rec);
    for (int c = 0; c < k; c++) {
      if (c == slot) continue;
      int other = refs[i].second;
      for (int tries = 0; tries < 64 && other == refs[i].second; tries++)
        other = pick_sample(rng);
      const Sample& decoy = area.samples[static_cast<size_t>(other)];
      variants[i][static_cast<size_t>(c)].ue_x_px = decoy.ue_xy_px[0];
      variants[i][static_cast<size_t>(c)].ue_y_px = decoy.ue_xy_px[1];
      variants[i][static_cast<size_t>(c)].los_flag = decoy.los;
    }
  }
  std::vector<int> picks = classify_env_candidates(m, ds, refs, variants);
  ZslSuiteResult res;
  res.n = static_cast<int>(refs.size());
  res.baseline = 1.0 / k;
  int hits = 0;
  for (size_t i = 0; i < refs.size(); i++)
    if (picks[i] == truth[i]) hits++;
  res.accuracy = static_cast<double>(hits) / res.n;
  return res;
}

double eval_feedback_nmse(model::PretrainModel& m, const Dataset& ds, int max_samples) {
  std::vector<SampleRef> refs = adapt_refs(ds, max_samples, 17);
  double acc = 0;
  constexpr int kChunk = 64;
  int n = 0;
  for (size_t base = 0; base < refs.size(); base += kChunk) {
    size_t end = std::min(refs.size(), base + kChunk);
    std::vector<channel::RealCsiTensor> owned;
    owned.reserve(end - base);
    for (size_t i = base; i < end; i++)
      owned.push_back(sample_at(ds, refs[i]).csi_tensor(ds.radio.n_t, ds.radio.n_c));
    std::vector<const channel::RealCsiTensor*> ptrs;
    for (const auto& t : owned) ptrs.push_back(&t);
    for (double v : adapt::csi_feedback_roundtrip(m, ptrs)) {
      acc += v;
      n++;
    }
  }
  return acc / n;
}

namespace {

ToftSplit split_refs_and_fill(const Dataset& ds, const AreaRecord& area, double train_frac,
                              uint64_t seed, int in_dim,
                              const std::function<void(const std::vector<int>&, adapt::TaskData&)>& fill_inputs) {
  std::vector<int> idx(area.samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ (0x8bb84b93962eacc9ull * static_cast<uint64_t>(area.area_id)));
  std::shuffle(idx.begin(), idx.end(), rng);
  size_t n_train = static_cast<size_t>(train_frac * static_cast<double>(idx.size()));
  n_train = std::min(std::max<size_t>(n_train, 1), idx.size() - 1);

  auto fill_labels = [&](const std::vector<int>& ids, adapt::TaskData& out) {
    out.n = static_cast<int>(ids.size());
    out.in_dim = in_dim;
    for (int i : ids) {
      const Sample& s = area.samples[static_cast<size_t>(i)];
      out.pos_px.push_back({s.ue_xy_px[0], s.ue_xy_px[1]});
      out.los.push_back(s.los);
      out.beam.push_back(s.beam);
      out.scale_m_per_px.push_back(area.scale_m_per_px);
    }
    fill_inputs(ids, out);
  };

  ToftSplit split;
  std::vector<int> train_ids(idx.begin(), idx.begin() + static_cast<int64_t>(n_train));
  std::vector<int> test_ids(idx.begin() + static_cast<int64_t>(n_train), idx.end());
  fill_labels(train_ids, split.train);
  fill_labels(test_ids, split.test);
  return split;
}

int area_index(const Dataset& ds, const AreaRecord& area) {
  for (size_t i = 0; i < ds.areas.size(); i++)
    if (&ds.areas[i] == &area) return static_cast<int>(i);
  throw std::invalid_argument("build_toft_data: area not part of dataset");
}

}  // namespace

ToftSplit build_toft_data(model::PretrainModel& m, const Dataset& ds, const AreaRecord& area,
                          ToftModality modality, double train_frac, uint64_t seed) {
  int ai = area_index(ds, area);
  int d = m.cfg().embed_dim;
  auto fill = [&](const std::vector<int>& ids, adapt::TaskData& out) {
    constexpr int kChunk = 64;
    for (size_t base = 0; base < ids.size(); base += kChunk) {
      size_t end = std::min(ids.size(), base + kChunk);
      std::vector<SampleRef> chunk;
      for (size_t i = base; i < end; i++) chunk.emplace_back(ai, ids[i]);
      nncore::Tensor emb;
      if (modality == ToftModality::Csi) {
        emb = m.cfenn_forward(batch_csi(ds, chunk));
      } else {
        emb = m.epnn_forward(batch_edges(ds, chunk), batch_env(ds, chunk));
      }
      out.inputs.insert(out.inputs.end(), emb.data().data(), emb.data().data() + emb.size());
    }
    (void)d;
  };
  ToftSplit s = split_refs_and_fill(ds, area, train_frac, seed, d, fill);
  return s;
}

ToftSplit build_raw_csi_data(const Dataset& ds, const AreaRecord& area, double train_frac,
                             uint64_t seed) {
  int in_dim = 2 * ds.radio.n_t * ds.radio.n_c;
  auto fill = [&](const std::vector<int>& ids, adapt::TaskData& out) {
    for (int i : ids) {
      const Sample& s = area.samples[static_cast<size_t>(i)];
      out.inputs.insert(out.inputs.end(), s.csi.begin(), s.csi.end());
    }
  };
  return split_refs_and_fill(ds, area, train_frac, seed, in_dim, fill);
}

ToftSplit build_raw_position_data(const Dataset& ds, const AreaRecord& area, double train_frac,
                                  uint64_t seed) {
  (void)ds;
  auto fill = [&](const std::vector<int>& ids, adapt::TaskData& out) {
    for (int i : ids) {
      const Sample& s = area.samples[static_cast<size_t>(i)];
      out.inputs.push_back(s.ue_xy_px[0]);
      out.inputs.push_back(s.ue_xy_px[1]);
    }
  };
  return split_refs_and_fill(ds, area, train_frac, seed, 2, fill);
}

int matched_hidden_width(int in_dim, int out_dim, int hidden_layers, int64_t budget) {
  auto params_for = [&](int w) {
    int64_t p = static_cast<int64_t>(in_dim) * w + w;  // first layer
    for (int i = 1; i < hidden_layers; i++) p += static_cast<int64_t>(w) * w + w;
    p += static_cast<int64_t>(w) * out_dim + out_dim;
    return p;
  };
  int best = 1;
  for (int w = 1; w <= 4096; w++) {
    if (params_for(w) > budget) break;
    best = w;
  }
  return best;
}

}  // namespace harness
