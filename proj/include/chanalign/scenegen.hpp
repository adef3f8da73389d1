#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace scenegen {

// Axis-aligned building footprint, meters. Boundaries are inclusive for
// point containment.
struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  bool overlaps(const Rect& o) const {
    return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
  }
};

struct AreaLayout {
  int area_id = 0;
  double width_m = 0, height_m = 0;
  std::vector<Rect> buildings;
  double building_height_m = 0;  // uniform, exceeds BS height
  uint64_t rng_seed = 0;
};

// Square binary occupancy raster of an area. Row r covers
// y in [r*scale, (r+1)*scale), column c covers x likewise; the non-square
// remainder (y > height_m or x > width_m) stays zero, anchored at the
// origin.
struct PixelMap {
  int size_px = 0;
  double scale_m_per_px = 0;
  std::vector<uint8_t> occupancy;  // row-major size_px*size_px
  bool at(int r, int c) const { return occupancy[static_cast<size_t>(r) * size_px + c] != 0; }
};

struct EdgeMap {
  int size_px = 0;
  std::vector<uint8_t> edges;
  bool at(int r, int c) const { return edges[static_cast<size_t>(r) * size_px + c] != 0; }
};

struct LinkPlacement {
  double bs_x = 0, bs_y = 0, bs_z = 0;
  double ue_x = 0, ue_y = 0, ue_z = 0;
  bool los = false;
};

// The 8-dim physical-environment vector. Planar coordinates are in
// (fractional) pixels, heights in meters, los_flag 0 for LOS / 1 for NLOS.
struct EnvRecord {
  double bs_x_px = 0, bs_y_px = 0, bs_z_m = 0;
  double ue_x_px = 0, ue_y_px = 0, ue_z_m = 0;
  double los_flag = 0;
  double scale_m_per_px = 0;
  std::array<double, 8> as_array() const {
    return {bs_x_px, bs_y_px, bs_z_m, ue_x_px, ue_y_px, ue_z_m, los_flag, scale_m_per_px};
  }
};

struct GenConfig {
  double area_min_m = 120, area_max_m = 200;
  int buildings_min = 8, buildings_max = 12;
  double building_min_m = 12, building_max_m = 32;
  double min_gap_m = 3;
  double building_height_m = 12;
  int size_px = 64;
  int n_bs = 5, n_ue = 30;
  double bs_height_m = 6, ue_height_m = 1.5;
};

// Deterministic procedural area generation. Throws std::runtime_error when
// the requested buildings cannot be placed within the retry budget.
AreaLayout generate_area(uint64_t seed, const GenConfig& cfg);

PixelMap rasterize_area(const AreaLayout& area, int size_px);

// Occupancy pixels with at least one unset 4-neighbor; the image border
// counts as unset.
EdgeMap extract_edges(const PixelMap& map);

// n_bs * n_ue placements (all BS-UE pairs, BS-major order), positions
// outside building footprints, LOS computed by the ray tracer.
std::vector<LinkPlacement> sample_links(const AreaLayout& area, int n_bs, int n_ue, uint64_t seed,
                                        double bs_z = 6.0, double ue_z = 1.5);

EnvRecord build_env_record(const LinkPlacement& link, double scale_m_per_px);

}  // namespace scenegen
