#include "chanalign/harness/dataset.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "chanalign/errors.hpp"
#include "chanalign/raytrace.hpp"

namespace harness {

namespace fs = std::filesystem;
using chanalign::DataError;

namespace {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

constexpr char kAreaMagic[4] = {'C', 'A', 'D', 'A'};
constexpr uint32_t kAreaVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& buf, size_t& off, const std::string& file) {
  if (off + sizeof(T) > buf.size()) throw DataError("truncated area file: " + file);
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

DatasetConfig DatasetConfig::parse_text(const std::string& text) {
  DatasetConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    lineno++;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "area_min_m") cfg.scene.area_min_m = std::stod(val);
      else if (key == "area_max_m") cfg.scene.area_max_m = std::stod(val);
      else if (key == "buildings_min") cfg.scene.buildings_min = std::stoi(val);
      else if (key == "buildings_max") cfg.scene.buildings_max = std::stoi(val);
      else if (key == "building_min_m") cfg.scene.building_min_m = std::stod(val);
      else if (key == "building_max_m") cfg.scene.building_max_m = std::stod(val);
      else if (key == "min_gap_m") cfg.scene.min_gap_m = std::stod(val);
      else if (key == "building_height_m") cfg.scene.building_height_m = std::stod(val);
      else if (key == "size_px") cfg.scene.size_px = std::stoi(val);
      else if (key == "n_bs") cfg.scene.n_bs = std::stoi(val);
      else if (key == "n_ue") cfg.scene.n_ue = std::stoi(val);
      else if (key == "bs_height_m") cfg.scene.bs_height_m = std::stod(val);
      else if (key == "ue_height_m") cfg.scene.ue_height_m = std::stod(val);
      else if (key == "f_c_hz") cfg.radio.f_c = std::stod(val);
      else if (key == "bandwidth_hz") cfg.radio.bandwidth = std::stod(val);
      else if (key == "n_t") cfg.radio.n_t = std::stoi(val);
      else if (key == "n_c") cfg.radio.n_c = std::stoi(val);
      else if (key == "pretrain_areas") cfg.pretrain_areas = std::stoi(val);
      else if (key == "adapt_areas") cfg.adapt_areas = std::stoi(val);
      else if (key == "adapt_n_bs") cfg.adapt_n_bs = std::stoi(val);
      else if (key == "adapt_n_ue") cfg.adapt_n_ue = std::stoi(val);
      else if (key == "max_order") cfg.max_order = std::stoi(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else throw DataError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw DataError("config line " + std::to_string(lineno) + ": bad value for '" + key + "'");
    }
  }
  return cfg;
}

DatasetConfig DatasetConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_text(ss.str());
}

scenegen::EdgeMap Sample::edge_map(int size_px) const {
  scenegen::EdgeMap m;
  m.size_px = size_px;
  m.edges = unpack_bits(edge_bits, static_cast<size_t>(size_px) * size_px);
  return m;
}

channel::RealCsiTensor Sample::csi_tensor(int n_t, int n_c) const {
  channel::RealCsiTensor t;
  t.n_t = n_t;
  t.n_c = n_c;
  t.t.assign(csi.begin(), csi.end());
  t.norm = norm;
  t.norm_applied = true;
  return t;
}

scenegen::EnvRecord Sample::env_record() const {
  scenegen::EnvRecord r;
  r.bs_x_px = env[0];
  r.bs_y_px = env[1];
  r.bs_z_m = env[2];
  r.ue_x_px = env[3];
  r.ue_y_px = env[4];
  r.ue_z_m = env[5];
  r.los_flag = env[6];
  r.scale_m_per_px = env[7];
  return r;
}

std::vector<const AreaRecord*> Dataset::split(const std::string& tag) const {
  std::vector<const AreaRecord*> out;
  for (const auto& a : areas)
    if (a.split == tag) out.push_back(&a);
  return out;
}

int64_t Dataset::total_samples(const std::string& tag) const {
  int64_t n = 0;
  for (const auto* a : split(tag)) n += static_cast<int64_t>(a->samples.size());
  return n;
}

std::vector<uint8_t> pack_bits(const std::vector<uint8_t>& bytes01) {
  std::vector<uint8_t> out((bytes01.size() + 7) / 8, 0);
  for (size_t i = 0; i < bytes01.size(); i++)
    if (bytes01[i]) out[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
  return out;
}

std::vector<uint8_t> unpack_bits(const std::vector<uint8_t>& packed, size_t count) {
  std::vector<uint8_t> out(count, 0);
  for (size_t i = 0; i < count; i++)
    out[i] = (packed[i / 8] >> (i % 8)) & 1u;
  return out;
}

Dataset generate_dataset(const DatasetConfig& cfg) {
  Dataset ds;
  ds.radio = cfg.radio;
  ds.size_px = cfg.scene.size_px;
  ds.bs_height_m = cfg.scene.bs_height_m;
  ds.ue_height_m = cfg.scene.ue_height_m;
  channel::ArrayConfig array = cfg.radio.array();
  channel::BeamCodebook codebook = channel::dft_codebook(array);
  raytrace::TraceConfig trace_cfg;
  trace_cfg.f_c = cfg.radio.f_c;

  int next_id = 1;
  auto build_area = [&](const std::string& split_tag) {
    int area_id = next_id++;
    uint64_t area_seed = mix64(cfg.seed ^ mix64(static_cast<uint64_t>(area_id)));
    scenegen::AreaLayout layout = scenegen::generate_area(area_seed, cfg.scene);
    layout.area_id = area_id;
    scenegen::PixelMap raster = scenegen::rasterize_area(layout, cfg.scene.size_px);
    scenegen::EdgeMap edges = scenegen::extract_edges(raster);
    std::vector<uint8_t> edge_bits = pack_bits(edges.edges);

    int n_bs = cfg.scene.n_bs, n_ue = cfg.scene.n_ue;
    if (split_tag == "adapt") {
      if (cfg.adapt_n_bs > 0) n_bs = cfg.adapt_n_bs;
      if (cfg.adapt_n_ue > 0) n_ue = cfg.adapt_n_ue;
    }

    // A link with no path at the configured reflection order has no CSI, so
    // UEs are accepted only when every BS can reach them. This keeps the
    // all-pairs BS x UE structure intact.
    std::mt19937_64 rng(mix64(area_seed + 1));
    std::uniform_real_distribution<double> ux(0.0, layout.width_m);
    std::uniform_real_distribution<double> uy(0.0, layout.height_m);
    auto free_point = [&](double& x, double& y) {
      for (int t = 0; t < 10000; t++) {
        x = ux(rng);
        y = uy(rng);
        bool inside = false;
        for (const auto& b : layout.buildings)
          if (b.contains(x, y)) {
            inside = true;
            break;
          }
        if (!inside) return true;
      }
      return false;
    };

    std::vector<std::pair<double, double>> bs_pts(static_cast<size_t>(n_bs));
    for (auto& p : bs_pts)
      if (!free_point(p.first, p.second))
        throw std::runtime_error("generate_dataset: BS placement failed in area " +
                                 std::to_string(area_id));

    std::vector<std::pair<double, double>> ue_pts;
    std::vector<std::vector<raytrace::PathSet>> ue_paths;  // [ue][bs]
    int tries = 0;
    while (static_cast<int>(ue_pts.size()) < n_ue) {
      if (++tries > 10000 * n_ue)
        throw std::runtime_error("generate_dataset: area " + std::to_string(area_id) +
                                 " kept producing fully blocked links");
      std::pair<double, double> cand;
      if (!free_point(cand.first, cand.second)) continue;
      std::vector<raytrace::PathSet> per_bs;
      bool reachable = true;
      for (const auto& b : bs_pts) {
        scenegen::LinkPlacement l;
        l.bs_x = b.first;
        l.bs_y = b.second;
        l.bs_z = cfg.scene.bs_height_m;
        l.ue_x = cand.first;
        l.ue_y = cand.second;
        l.ue_z = cfg.scene.ue_height_m;
        per_bs.push_back(raytrace::trace_paths(layout, l, cfg.max_order, trace_cfg));
        if (per_bs.back().n_path() == 0) {
          reachable = false;
          break;
        }
      }
      if (!reachable) continue;
      ue_pts.push_back(cand);
      ue_paths.push_back(std::move(per_bs));
    }

    std::vector<scenegen::LinkPlacement> links;
    std::vector<raytrace::PathSet> paths;
    for (int bi = 0; bi < n_bs; bi++)
      for (int ui = 0; ui < n_ue; ui++) {
        scenegen::LinkPlacement l;
        l.bs_x = bs_pts[static_cast<size_t>(bi)].first;
        l.bs_y = bs_pts[static_cast<size_t>(bi)].second;
        l.bs_z = cfg.scene.bs_height_m;
        l.ue_x = ue_pts[static_cast<size_t>(ui)].first;
        l.ue_y = ue_pts[static_cast<size_t>(ui)].second;
        l.ue_z = cfg.scene.ue_height_m;
        l.los = raytrace::los_visible(layout, l.bs_x, l.bs_y, l.bs_z, l.ue_x, l.ue_y, l.ue_z);
        links.push_back(l);
        paths.push_back(ue_paths[static_cast<size_t>(ui)][static_cast<size_t>(bi)]);
      }

    AreaRecord rec;
    rec.area_id = area_id;
    rec.split = split_tag;
    rec.seed = area_seed;
    rec.n_buildings = static_cast<int>(layout.buildings.size());
    rec.scale_m_per_px = raster.scale_m_per_px;
    rec.width_m = layout.width_m;
    rec.height_m = layout.height_m;

    for (size_t li = 0; li < links.size(); li++) {
      channel::CsiMatrix h = channel::synthesize_csi(paths[li], array);
      channel::RealCsiTensor norm = channel::normalize_csi(h);
      scenegen::EnvRecord env = scenegen::build_env_record(links[li], raster.scale_m_per_px);

      Sample s;
      s.edge_bits = edge_bits;
      auto arr = env.as_array();
      for (int i = 0; i < 8; i++) s.env[static_cast<size_t>(i)] = static_cast<float>(arr[static_cast<size_t>(i)]);
      s.csi.assign(norm.t.begin(), norm.t.end());
      s.norm = static_cast<float>(norm.norm);
      s.los = links[li].los ? 0 : 1;
      s.ue_xy_px = {static_cast<float>(env.ue_x_px), static_cast<float>(env.ue_y_px)};
      s.beam = static_cast<uint16_t>(channel::best_beam(h, codebook));
      rec.samples.push_back(std::move(s));
    }
    ds.areas.push_back(std::move(rec));
  };

  for (int i = 0; i < cfg.pretrain_areas; i++) build_area("pretrain");
  for (int i = 0; i < cfg.adapt_areas; i++) build_area("adapt");
  return ds;
}

namespace {

std::string serialize_area(const Dataset& ds, const AreaRecord& a) {
  std::string buf;
  buf.append(kAreaMagic, 4);
  put(buf, kAreaVersion);
  put(buf, static_cast<uint32_t>(a.area_id));
  put(buf, static_cast<uint32_t>(a.samples.size()));
  put(buf, static_cast<uint32_t>(ds.size_px));
  put(buf, static_cast<uint32_t>(ds.radio.n_t));
  put(buf, static_cast<uint32_t>(ds.radio.n_c));
  for (const Sample& s : a.samples) {
    buf.append(reinterpret_cast<const char*>(s.edge_bits.data()), s.edge_bits.size());
    buf.append(reinterpret_cast<const char*>(s.env.data()), sizeof(s.env));
    buf.append(reinterpret_cast<const char*>(s.csi.data()), s.csi.size() * sizeof(float));
    put(buf, s.norm);
    put(buf, s.los);
    buf.append(reinterpret_cast<const char*>(s.ue_xy_px.data()), sizeof(s.ue_xy_px));
    put(buf, s.beam);
  }
  return buf;
}

AreaRecord parse_area(const std::string& buf, const Dataset& ds, const std::string& file) {
  size_t off = 0;
  char magic[4];
  if (buf.size() < 4) throw DataError("truncated area file: " + file);
  std::memcpy(magic, buf.data(), 4);
  off = 4;
  if (std::memcmp(magic, kAreaMagic, 4) != 0) throw DataError("bad magic in area file: " + file);
  auto version = take<uint32_t>(buf, off, file);
  if (version != kAreaVersion)
    throw DataError("unsupported area file version " + std::to_string(version) + ": " + file);
  AreaRecord a;
  a.area_id = static_cast<int>(take<uint32_t>(buf, off, file));
  auto n_samples = take<uint32_t>(buf, off, file);
  auto size_px = take<uint32_t>(buf, off, file);
  auto n_t = take<uint32_t>(buf, off, file);
  auto n_c = take<uint32_t>(buf, off, file);
  if (static_cast<int>(size_px) != ds.size_px || static_cast<int>(n_t) != ds.radio.n_t ||
      static_cast<int>(n_c) != ds.radio.n_c)
    throw DataError("area file dimensions disagree with manifest: " + file);

  size_t edge_bytes = (static_cast<size_t>(size_px) * size_px + 7) / 8;
  size_t csi_count = static_cast<size_t>(2) * n_t * n_c;
  for (uint32_t i = 0; i < n_samples; i++) {
    Sample s;
    if (off + edge_bytes > buf.size()) throw DataError("truncated area file: " + file);
    s.edge_bits.assign(buf.begin() + static_cast<int64_t>(off),
                       buf.begin() + static_cast<int64_t>(off + edge_bytes));
    off += edge_bytes;
    for (auto& v : s.env) v = take<float>(buf, off, file);
    s.csi.resize(csi_count);
    if (off + csi_count * sizeof(float) > buf.size())
      throw DataError("truncated area file: " + file);
    std::memcpy(s.csi.data(), buf.data() + off, csi_count * sizeof(float));
    off += csi_count * sizeof(float);
    s.norm = take<float>(buf, off, file);
    s.los = take<uint8_t>(buf, off, file);
    for (auto& v : s.ue_xy_px) v = take<float>(buf, off, file);
    s.beam = take<uint16_t>(buf, off, file);
    if (s.beam >= n_t) throw DataError("beam index out of range in " + file);
    if (s.los > 1) throw DataError("bad los flag in " + file);
    a.samples.push_back(std::move(s));
  }
  if (off != buf.size()) throw DataError("trailing bytes in area file: " + file);
  return a;
}

uint32_t crc_of(const std::string& buf) {
  return static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "areas");
  nlohmann::json manifest;
  manifest["version"] = ds.version;
  manifest["radio"] = {{"n_t", ds.radio.n_t},
                       {"n_c", ds.radio.n_c},
                       {"f_c", ds.radio.f_c},
                       {"bandwidth", ds.radio.bandwidth}};
  manifest["size_px"] = ds.size_px;
  manifest["bs_height_m"] = ds.bs_height_m;
  manifest["ue_height_m"] = ds.ue_height_m;
  manifest["areas"] = nlohmann::json::array();
  for (const AreaRecord& a : ds.areas) {
    std::string buf = serialize_area(ds, a);
    std::string rel = "areas/" + std::to_string(a.area_id) + ".bin";
    std::ofstream os(fs::path(dir) / rel, std::ios::binary);
    if (!os) throw DataError("cannot write " + rel);
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    manifest["areas"].push_back({{"id", a.area_id},
                                 {"split", a.split},
                                 {"seed", a.seed},
                                 {"samples", a.samples.size()},
                                 {"buildings", a.n_buildings},
                                 {"scale_m_per_px", a.scale_m_per_px},
                                 {"width_m", a.width_m},
                                 {"height_m", a.height_m},
                                 {"crc32", crc_of(buf)},
                                 {"file", rel}});
  }
  std::ofstream os(fs::path(dir) / "manifest");
  if (!os) throw DataError("cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest");
  if (!is) throw DataError("cannot open manifest in " + dir);
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest in " + dir + ": " + e.what());
  }

  Dataset ds;
  try {
    ds.version = manifest.at("version");
    if (ds.version != 1)
      throw DataError("unsupported dataset version " + std::to_string(ds.version));
    ds.radio.n_t = manifest.at("radio").at("n_t");
    ds.radio.n_c = manifest.at("radio").at("n_c");
    ds.radio.f_c = manifest.at("radio").at("f_c");
    ds.radio.bandwidth = manifest.at("radio").at("bandwidth");
    ds.size_px = manifest.at("size_px");
    ds.bs_height_m = manifest.at("bs_height_m");
    ds.ue_height_m = manifest.at("ue_height_m");

    std::set<int> seen_ids;
    for (const auto& entry : manifest.at("areas")) {
      std::string rel = entry.at("file");
      std::string full = (fs::path(dir) / rel).string();
      std::ifstream af(full, std::ios::binary);
      if (!af) throw DataError("missing area file: " + full);
      std::stringstream ss;
      ss << af.rdbuf();
      std::string buf = ss.str();
      if (crc_of(buf) != entry.at("crc32").get<uint32_t>())
        throw DataError("checksum mismatch: " + full);
      AreaRecord a = parse_area(buf, ds, full);
      if (a.area_id != entry.at("id").get<int>())
        throw DataError("area id mismatch between manifest and file: " + full);
      if (a.samples.size() != entry.at("samples").get<size_t>())
        throw DataError("sample count mismatch between manifest and file: " + full);
      if (!seen_ids.insert(a.area_id).second)
        throw DataError("duplicate area id " + std::to_string(a.area_id) + " in " + dir);
      a.split = entry.at("split");
      if (a.split != "pretrain" && a.split != "adapt")
        throw DataError("unknown split tag '" + a.split + "' in " + dir);
      a.seed = entry.at("seed");
      a.n_buildings = entry.at("buildings");
      a.scale_m_per_px = entry.at("scale_m_per_px");
      a.width_m = entry.at("width_m");
      a.height_m = entry.at("height_m");
      ds.areas.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest in " + dir + ": " + e.what());
  }
  return ds;
}

nncore::Tensor batch_edges(const Dataset& ds, const std::vector<SampleRef>& refs) {
  int n = static_cast<int>(refs.size());
  int px = ds.size_px;
  std::vector<double> data(static_cast<size_t>(n) * px * px);
  for (int i = 0; i < n; i++) {
    const Sample& s = ds.areas[static_cast<size_t>(refs[static_cast<size_t>(i)].first)]
                          .samples[static_cast<size_t>(refs[static_cast<size_t>(i)].second)];
    auto bits = unpack_bits(s.edge_bits, static_cast<size_t>(px) * px);
    for (size_t j = 0; j < bits.size(); j++)
      data[static_cast<size_t>(i) * px * px + j] = bits[j] ? 1.0 : 0.0;
  }
  return nncore::Tensor::from_vector({n, 1, px, px}, data);
}

nncore::Tensor batch_env(const Dataset& ds, const std::vector<SampleRef>& refs) {
  int n = static_cast<int>(refs.size());
  std::vector<double> data(static_cast<size_t>(n) * 8);
  for (int i = 0; i < n; i++) {
    const Sample& s = ds.areas[static_cast<size_t>(refs[static_cast<size_t>(i)].first)]
                          .samples[static_cast<size_t>(refs[static_cast<size_t>(i)].second)];
    for (int j = 0; j < 8; j++)
      data[static_cast<size_t>(i) * 8 + static_cast<size_t>(j)] = s.env[static_cast<size_t>(j)];
  }
  return nncore::Tensor::from_vector({n, 8}, data);
}

nncore::Tensor batch_csi(const Dataset& ds, const std::vector<SampleRef>& refs) {
  int n = static_cast<int>(refs.size());
  int64_t block = static_cast<int64_t>(2) * ds.radio.n_t * ds.radio.n_c;
  std::vector<double> data(static_cast<size_t>(n) * static_cast<size_t>(block));
  for (int i = 0; i < n; i++) {
    const Sample& s = ds.areas[static_cast<size_t>(refs[static_cast<size_t>(i)].first)]
                          .samples[static_cast<size_t>(refs[static_cast<size_t>(i)].second)];
    for (int64_t j = 0; j < block; j++)
      data[static_cast<size_t>(i * block + j)] = s.csi[static_cast<size_t>(j)];
  }
  return nncore::Tensor::from_vector({n, 2, ds.radio.n_t, ds.radio.n_c}, data);
}

}  // namespace harness
