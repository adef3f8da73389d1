#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "chanalign/channel.hpp"
#include "chanalign/nncore/tensor.hpp"
#include "chanalign/scenegen.hpp"

namespace harness {

struct RadioParams {
  int n_t = 32, n_c = 64;
  double f_c = 28e9, bandwidth = 46.08e6;
  channel::ArrayConfig array() const {
    return channel::ArrayConfig::make(n_t, n_c, f_c, bandwidth);
  }
};

// Key/value generation config (one `key = value` per line, '#' comments).
struct DatasetConfig {
  scenegen::GenConfig scene;
  RadioParams radio;
  int pretrain_areas = 64;
  int adapt_areas = 8;
  int adapt_n_bs = -1;  // -1: same as scene.n_bs
  int adapt_n_ue = -1;
  int max_order = 2;
  uint64_t seed = 1;

  static DatasetConfig parse_file(const std::string& path);
  static DatasetConfig parse_text(const std::string& text);
};

struct Sample {
  std::vector<uint8_t> edge_bits;      // bit-packed edge map, LSB-first
  std::array<float, 8> env{};          // EnvRecord field order
  std::vector<float> csi;              // normalized 2 x n_t x n_c
  float norm = 1.0f;                   // stored Frobenius norm
  uint8_t los = 0;                     // 0 LOS / 1 NLOS
  std::array<float, 2> ue_xy_px{};
  uint16_t beam = 0;

  scenegen::EdgeMap edge_map(int size_px) const;
  channel::RealCsiTensor csi_tensor(int n_t, int n_c) const;
  scenegen::EnvRecord env_record() const;
};

struct AreaRecord {
  int area_id = 0;
  std::string split;  // "pretrain" or "adapt"
  uint64_t seed = 0;
  int n_buildings = 0;
  double scale_m_per_px = 0;
  double width_m = 0, height_m = 0;
  std::vector<Sample> samples;
};

struct Dataset {
  int version = 1;
  RadioParams radio;
  int size_px = 64;
  double bs_height_m = 6.0, ue_height_m = 1.5;
  std::vector<AreaRecord> areas;

  std::vector<const AreaRecord*> split(const std::string& tag) const;
  int64_t total_samples(const std::string& tag) const;
};

// Full synthetic pipeline: areas -> rasters/edges -> links -> traced paths
// -> CSI -> labels.
Dataset generate_dataset(const DatasetConfig& cfg);

// Directory layout: `manifest` (JSON) + `areas/<id>.bin`, little-endian.
// Reading verifies magic, version, per-file CRC32, sample counts, and
// split hygiene; violations throw chanalign::DataError naming the file.
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir);

std::vector<uint8_t> pack_bits(const std::vector<uint8_t>& bytes01);
std::vector<uint8_t> unpack_bits(const std::vector<uint8_t>& packed, size_t count);

// Batched model inputs for a set of (area_index, sample_index) pairs.
using SampleRef = std::pair<int, int>;
nncore::Tensor batch_edges(const Dataset& ds, const std::vector<SampleRef>& refs);
nncore::Tensor batch_env(const Dataset& ds, const std::vector<SampleRef>& refs);
nncore::Tensor batch_csi(const Dataset& ds, const std::vector<SampleRef>& refs);

}  // namespace harness
