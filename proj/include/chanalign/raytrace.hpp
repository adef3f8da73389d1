#pragma once

#include <vector>

#include "chanalign/scenegen.hpp"

namespace raytrace {

struct Vec2 {
  double x = 0, y = 0;
};

// One propagation path: amplitude gain, delay, departure angle at the BS
// array (radians in [0, pi], measured against the +x array axis),
// reflection count and total 3-D length.
struct Path {
  double alpha = 0;
  double tau = 0;
  double theta = 0;
  int order = 0;
  double length_m = 0;
};

struct PathSet {
  std::vector<Path> paths;
  int n_path() const { return static_cast<int>(paths.size()); }
};

struct TraceConfig {
  double f_c = 28e9;
  double c = 299792458.0;
  double reflect_coeff = 0.7;  // per-bounce amplitude factor
};

// True iff the open planar segment p->q crosses no building-footprint
// interior. Buildings exceed both endpoint heights, so the plan view
// decides; segments touching a boundary edge count as visible.
bool los_visible(const scenegen::AreaLayout& area, double px, double py, double pz, double qx,
                 double qy, double qz);

// Reflection of p across the supporting line of the wall segment a->b.
Vec2 mirror_image(Vec2 p, Vec2 wall_a, Vec2 wall_b);

// Image-method tracer: LOS plus specular wall reflections up to max_order
// (0..2). Paths are sorted by increasing length. An empty PathSet means
// the link is fully blocked at the given order.
PathSet trace_paths(const scenegen::AreaLayout& area, const scenegen::LinkPlacement& link,
                    int max_order, const TraceConfig& cfg = {});

}  // namespace raytrace
