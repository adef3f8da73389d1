#include "chanalign/raytrace.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace raytrace {

namespace {

constexpr double kParamEps = 1e-12;  // measure-zero crossing tolerance
constexpr double kWallEps = 1e-9;    // excludes reflections exactly at corners

// True if the open segment a->b spends a positive parameter interval
// inside the closed slab intersection of the rectangle, i.e. it crosses
// the interior. Edge-touching and corner-grazing segments do not count.
bool segment_hits_interior(const scenegen::Rect& r, double ax, double ay, double bx, double by) {
  double tmin = 0.0, tmax = 1.0;
  auto slab = [&](double p, double d, double lo, double hi) {
    if (d == 0.0) return p > lo && p < hi;
    double t0 = (lo - p) / d, t1 = (hi - p) / d;
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    return true;
  };
  if (!slab(ax, bx - ax, r.x0, r.x1)) return false;
  if (!slab(ay, by - ay, r.y0, r.y1)) return false;
  return tmax - tmin > kParamEps;
}

bool planar_visible(const scenegen::AreaLayout& area, double ax, double ay, double bx, double by) {
  for (const scenegen::Rect& r : area.buildings)
    if (segment_hits_interior(r, ax, ay, bx, by)) return false;
  return true;
}

struct Wall {
  Vec2 a, b;
  Vec2 outward;  // unit outward normal of the owning building face
};

std::vector<Wall> collect_walls(const scenegen::AreaLayout& area) {
  std::vector<Wall> walls;
  walls.reserve(area.buildings.size() * 4);
  for (const scenegen::Rect& r : area.buildings) {
    walls.push_back({{r.x0, r.y0}, {r.x0, r.y1}, {-1, 0}});  // left
    walls.push_back({{r.x1, r.y0}, {r.x1, r.y1}, {1, 0}});   // right
    walls.push_back({{r.x0, r.y0}, {r.x1, r.y0}, {0, -1}});  // bottom
    walls.push_back({{r.x0, r.y1}, {r.x1, r.y1}, {0, 1}});   // top
  }
  return walls;
}

bool outside_of(const Wall& w, Vec2 p) {
  return (p.x - w.a.x) * w.outward.x + (p.y - w.a.y) * w.outward.y > 0.0;
}

double cross(Vec2 u, Vec2 v) { return u.x * v.y - u.y * v.x; }

// Intersection of segment p->q with the wall segment; the crossing must be
// strictly between p and q and strictly inside the wall span.
bool wall_crossing(const Wall& w, Vec2 p, Vec2 q, Vec2& hit) {
  Vec2 d{q.x - p.x, q.y - p.y};
  Vec2 e{w.b.x - w.a.x, w.b.y - w.a.y};
  double denom = cross(d, e);
  if (std::abs(denom) < 1e-15) return false;
  Vec2 ap{w.a.x - p.x, w.a.y - p.y};
  double t = cross(ap, e) / denom;
  double s = cross(ap, d) / denom;
  if (t <= 0.0 || t >= 1.0) return false;
  if (s <= kWallEps || s >= 1.0 - kWallEps) return false;
  hit = {p.x + t * d.x, p.y + t * d.y};
  return true;
}

double dist(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

Path make_path(double planar_len, double dz, Vec2 depart_dir, int order, const TraceConfig& cfg) {
  Path p;
  p.order = order;
  p.length_m = std::sqrt(planar_len * planar_len + dz * dz);
  p.tau = p.length_m / cfg.c;
  double norm = std::hypot(depart_dir.x, depart_dir.y);
  p.theta = std::acos(std::clamp(depart_dir.x / norm, -1.0, 1.0));
  p.alpha = cfg.c / (4.0 * M_PI * cfg.f_c * p.length_m) *
            std::pow(cfg.reflect_coeff, order);
  return p;
}

}  // namespace

bool los_visible(const scenegen::AreaLayout& area, double px, double py, double pz, double qx,
                 double qy, double qz) {
  if (px == qx && py == qy && pz == qz)
    throw std::invalid_argument("los_visible: endpoints coincide");
  return planar_visible(area, px, py, qx, qy);
}

Vec2 mirror_image(Vec2 p, Vec2 wall_a, Vec2 wall_b) {
  Vec2 d{wall_b.x - wall_a.x, wall_b.y - wall_a.y};
  double len2 = d.x * d.x + d.y * d.y;
  if (len2 == 0.0) throw std::invalid_argument("mirror_image: degenerate wall");
  double t = ((p.x - wall_a.x) * d.x + (p.y - wall_a.y) * d.y) / len2;
  Vec2 foot{wall_a.x + t * d.x, wall_a.y + t * d.y};
  return {2.0 * foot.x - p.x, 2.0 * foot.y - p.y};
}

PathSet trace_paths(const scenegen::AreaLayout& area, const scenegen::LinkPlacement& link,
                    int max_order, const TraceConfig& cfg) {
  if (max_order < 0 || max_order > 2)
    throw std::invalid_argument("trace_paths: max_order must be 0, 1 or 2");

  Vec2 bs{link.bs_x, link.bs_y};
  Vec2 ue{link.ue_x, link.ue_y};
  double dz = link.bs_z - link.ue_z;

  PathSet out;
  if (planar_visible(area, bs.x, bs.y, ue.x, ue.y))
    out.paths.push_back(make_path(dist(bs, ue), dz, {ue.x - bs.x, ue.y - bs.y}, 0, cfg));

  if (max_order >= 1) {
    std::vector<Wall> walls = collect_walls(area);
    for (const Wall& w : walls) {
      if (!outside_of(w, bs) || !outside_of(w, ue)) continue;
      Vec2 img = mirror_image(bs, w.a, w.b);
      Vec2 r;
      if (!wall_crossing(w, img, ue, r)) continue;
      if (!planar_visible(area, bs.x, bs.y, r.x, r.y)) continue;
      if (!planar_visible(area, r.x, r.y, ue.x, ue.y)) continue;
      out.paths.push_back(make_path(dist(img, ue), dz, {r.x - bs.x, r.y - bs.y}, 1, cfg));
    }

    if (max_order >= 2) {
      for (size_t i = 0; i < walls.size(); i++) {
        const Wall& wa = walls[i];
        if (!outside_of(wa, bs)) continue;
        Vec2 i1 = mirror_image(bs, wa.a, wa.b);
        for (size_t j = 0; j < walls.size(); j++) {
          if (i == j) continue;
          const Wall& wb = walls[j];
          if (!outside_of(wb, ue)) continue;
          Vec2 i2 = mirror_image(i1, wb.a, wb.b);
          Vec2 r2;
          if (!wall_crossing(wb, i2, ue, r2)) continue;
          if (!outside_of(wa, r2)) continue;
          Vec2 r1;
          if (!wall_crossing(wa, i1, r2, r1)) continue;
          if (!outside_of(wb, r1)) continue;
          if (!planar_visible(area, bs.x, bs.y, r1.x, r1.y)) continue;
          if (!planar_visible(area, r1.x, r1.y, r2.x, r2.y)) continue;
          if (!planar_visible(area, r2.x, r2.y, ue.x, ue.y)) continue;
          out.paths.push_back(make_path(dist(i2, ue), dz, {r1.x - bs.x, r1.y - bs.y}, 2, cfg));
        }
      }
    }
  }

  std::stable_sort(out.paths.begin(), out.paths.end(),
                   [](const Path& a, const Path& b) { return a.length_m < b.length_m; });
  return out;
}

}  // namespace raytrace
