#include "chanalign/scenegen.hpp"

#include <random>
#include <stdexcept>

#include "chanalign/raytrace.hpp"

namespace scenegen {

namespace {
constexpr int kMaxTries = 10000;
}

AreaLayout generate_area(uint64_t seed, const GenConfig& cfg) {
  if (cfg.area_min_m <= 0 || cfg.area_max_m < cfg.area_min_m)
    throw std::invalid_argument("generate_area: bad area size range");
  if (cfg.buildings_min < 0 || cfg.buildings_max < cfg.buildings_min)
    throw std::invalid_argument("generate_area: bad building count range");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> size_dist(cfg.area_min_m, cfg.area_max_m);

  AreaLayout area;
  area.rng_seed = seed;
  area.width_m = size_dist(rng);
  area.height_m = size_dist(rng);
  area.building_height_m = cfg.building_height_m;

  std::uniform_int_distribution<int> count_dist(cfg.buildings_min, cfg.buildings_max);
  int want = count_dist(rng);
  std::uniform_real_distribution<double> bsize(cfg.building_min_m, cfg.building_max_m);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  int tries = 0;
  while (static_cast<int>(area.buildings.size()) < want) {
    if (++tries > kMaxTries)
      throw std::runtime_error("generate_area: building placement failed after " +
                               std::to_string(kMaxTries) + " tries");
    double w = bsize(rng), h = bsize(rng);
    if (w > area.width_m || h > area.height_m) continue;
    Rect r;
    r.x0 = unit(rng) * (area.width_m - w);
    r.y0 = unit(rng) * (area.height_m - h);
    r.x1 = r.x0 + w;
    r.y1 = r.y0 + h;
    Rect padded{r.x0 - cfg.min_gap_m, r.y0 - cfg.min_gap_m, r.x1 + cfg.min_gap_m,
                r.y1 + cfg.min_gap_m};
    bool clash = false;
    for (const Rect& other : area.buildings)
      if (padded.overlaps(other)) {
        clash = true;
        break;
      }
    if (!clash) area.buildings.push_back(r);
  }
  return area;
}

PixelMap rasterize_area(const AreaLayout& area, int size_px) {
  if (size_px < 8) throw std::invalid_argument("rasterize_area: size_px must be >= 8");
  PixelMap map;
  map.size_px = size_px;
  map.scale_m_per_px = std::max(area.width_m, area.height_m) / size_px;
  map.occupancy.assign(static_cast<size_t>(size_px) * size_px, 0);
  for (int r = 0; r < size_px; r++) {
    double y = (r + 0.5) * map.scale_m_per_px;
    for (int c = 0; c < size_px; c++) {
      double x = (c + 0.5) * map.scale_m_per_px;
      for (const Rect& b : area.buildings)
        if (b.contains(x, y)) {
          map.occupancy[static_cast<size_t>(r) * size_px + c] = 1;
          break;
        }
    }
  }
  return map;
}

EdgeMap extract_edges(const PixelMap& map) {
  EdgeMap em;
  em.size_px = map.size_px;
  em.edges.assign(map.occupancy.size(), 0);
  int n = map.size_px;
  auto occ = [&](int r, int c) {
    if (r < 0 || r >= n || c < 0 || c >= n) return false;
    return map.at(r, c);
  };
  for (int r = 0; r < n; r++)
    for (int c = 0; c < n; c++) {
      if (!map.at(r, c)) continue;
      if (!occ(r - 1, c) || !occ(r + 1, c) || !occ(r, c - 1) || !occ(r, c + 1))
        em.edges[static_cast<size_t>(r) * n + c] = 1;
    }
  return em;
}

std::vector<LinkPlacement> sample_links(const AreaLayout& area, int n_bs, int n_ue, uint64_t seed,
                                        double bs_z, double ue_z) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, area.width_m);
  std::uniform_real_distribution<double> uy(0.0, area.height_m);
  auto free_point = [&](double& x, double& y) {
    for (int t = 0; t < kMaxTries; t++) {
      x = ux(rng);
      y = uy(rng);
      bool inside = false;
      for (const Rect& b : area.buildings)
        if (b.contains(x, y)) {
          inside = true;
          break;
        }
      if (!inside) return;
    }
    throw std::runtime_error("sample_links: free-space placement failed after " +
                             std::to_string(kMaxTries) + " tries");
  };

  std::vector<std::pair<double, double>> bs(static_cast<size_t>(n_bs));
  std::vector<std::pair<double, double>> ue(static_cast<size_t>(n_ue));
  for (auto& p : bs) free_point(p.first, p.second);
  for (auto& p : ue) free_point(p.first, p.second);

  std::vector<LinkPlacement> links;
  links.reserve(static_cast<size_t>(n_bs) * n_ue);
  for (const auto& b : bs)
    for (const auto& u : ue) {
      LinkPlacement l;
      l.bs_x = b.first;
      l.bs_y = b.second;
      l.bs_z = bs_z;
      l.ue_x = u.first;
      l.ue_y = u.second;
      l.ue_z = ue_z;
      l.los = raytrace::los_visible(area, l.bs_x, l.bs_y, l.bs_z, l.ue_x, l.ue_y, l.ue_z);
      links.push_back(l);
    }
  return links;
}

EnvRecord build_env_record(const LinkPlacement& link, double scale_m_per_px) {
  if (scale_m_per_px <= 0)
    throw std::invalid_argument("build_env_record: scale must be positive");
  EnvRecord rec;
  rec.bs_x_px = link.bs_x / scale_m_per_px;
  rec.bs_y_px = link.bs_y / scale_m_per_px;
  rec.bs_z_m = link.bs_z;
  rec.ue_x_px = link.ue_x / scale_m_per_px;
  rec.ue_y_px = link.ue_y / scale_m_per_px;
  rec.ue_z_m = link.ue_z;
  rec.los_flag = link.los ? 0.0 : 1.0;
  rec.scale_m_per_px = scale_m_per_px;
  return rec;
}

}  // namespace scenegen
